//! Spinning measures: probability laws on the unit circle that pick the ray
//! of each new excursion.
//!
//! A measure is a finite set of atoms plus an optional absolutely continuous
//! part. The continuous part is piecewise constant over equal cells of
//! `[0, 2π)` (a single cell for the uniform law), so masses of intervals are
//! exact; integrals of general functions against it use adaptive quadrature.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::quadrature::integrate_split;
use crate::{wrap_angle, Error, Result, TAU};

/// Absolute tolerance for integrals against the density part.
pub const QUADRATURE_TOL: f64 = 1e-10;
/// Allowed deviation of the total mass from one.
pub const MASS_TOL: f64 = 1e-12;
/// Number of nodes in the inverse-CDF lookup table of the density part.
pub const CDF_NODES: usize = 4096;

/// Absolutely continuous part of a spinning measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Density {
    /// Constant density with the given total mass.
    Uniform { mass: f64 },
    /// Piecewise-constant density: `values[j]` on `[2πj/n, 2π(j+1)/n)`.
    Table { values: Vec<f64> },
}

impl Density {
    fn heights(&self) -> Vec<f64> {
        match self {
            Density::Uniform { mass } => vec![mass / TAU],
            Density::Table { values } => values.clone(),
        }
    }

    pub fn mass(&self) -> f64 {
        let h = self.heights();
        let w = TAU / h.len() as f64;
        h.iter().sum::<f64>() * w
    }
}

/// A probability measure on `[0, 2π)`: atoms plus an optional piecewise-constant density.
#[derive(Debug, Clone)]
pub struct SpinningMeasure {
    atoms: Vec<(f64, f64)>,
    density: Option<Density>,
    heights: Vec<f64>,
    atom_cum: Vec<f64>,
    atom_mass: f64,
    density_mass: f64,
    cdf_cache: Vec<f64>,
}

impl PartialEq for SpinningMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.atoms == other.atoms && self.density == other.density
    }
}

impl SpinningMeasure {
    /// Builds and validates a measure. Atoms are sorted by angle.
    pub fn new(mut atoms: Vec<(f64, f64)>, density: Option<Density>) -> Result<Self> {
        for &(theta, w) in &atoms {
            if !(0.0..TAU).contains(&theta) {
                return Err(Error::Argument(format!("atom angle {theta} outside [0, 2π)")));
            }
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::Argument(format!("atom weight {w} outside (0, 1]")));
            }
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        if atoms.windows(2).any(|p| p[0].0 == p[1].0) {
            return Err(Error::Argument("duplicate atom angle".into()));
        }
        let heights = density.as_ref().map(Density::heights).unwrap_or_default();
        if let Some(d) = &density {
            if heights.is_empty() {
                return Err(Error::Argument("density table is empty".into()));
            }
            if heights.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
                return Err(Error::Argument("density values must be finite and nonnegative".into()));
            }
            if let Density::Uniform { mass } = d {
                if !(mass.is_finite() && *mass >= 0.0) {
                    return Err(Error::Argument(format!("uniform density mass {mass} invalid")));
                }
            }
        }
        let atom_mass: f64 = atoms.iter().map(|a| a.1).sum();
        let density_mass = density.as_ref().map_or(0.0, Density::mass);
        let total = atom_mass + density_mass;
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Argument(format!("total mass {total} differs from 1")));
        }
        let atom_cum = atoms
            .iter()
            .scan(0.0, |acc, a| {
                *acc += a.1;
                Some(*acc)
            })
            .collect();
        let mut m = Self {
            atoms,
            density,
            heights,
            atom_cum,
            atom_mass,
            density_mass,
            cdf_cache: Vec::new(),
        };
        if density_mass > 0.0 {
            m.cdf_cache = (0..=CDF_NODES)
                .map(|j| m.density_cdf(TAU * j as f64 / CDF_NODES as f64) / density_mass)
                .collect();
            // pin the right end so inversion never runs past the table
            m.cdf_cache[CDF_NODES] = 1.0;
        }
        Ok(m)
    }

    /// Purely atomic measure.
    pub fn atomic(atoms: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(atoms, None)
    }

    /// Point mass at `theta` (wrapped into `[0, 2π)`).
    pub fn dirac(theta: f64) -> Self {
        Self::atomic(vec![(wrap_angle(theta), 1.0)]).expect("a single unit atom is valid")
    }

    /// `p δ_0 + (1 − p) δ_π`, the skew-Brownian-motion measure.
    pub fn two_point(p: f64) -> Result<Self> {
        match p {
            p if p == 1.0 => Ok(Self::dirac(0.0)),
            p if p == 0.0 => Ok(Self::dirac(PI)),
            _ => Self::atomic(vec![(0.0, p), (PI, 1.0 - p)]),
        }
    }

    /// Uniform law on the circle.
    pub fn uniform() -> Self {
        Self::new(Vec::new(), Some(Density::Uniform { mass: 1.0 })).expect("uniform law is valid")
    }

    /// Piecewise-constant density with the given cell heights.
    pub fn table(values: Vec<f64>) -> Result<Self> {
        Self::new(Vec::new(), Some(Density::Table { values }))
    }

    /// Equal weights on `n` rays at angles `2πk/n`.
    pub fn equal_rays(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Argument("need at least one ray".into()));
        }
        Self::atomic((0..n).map(|k| (TAU * k as f64 / n as f64, 1.0 / n as f64)).collect())
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn density(&self) -> Option<&Density> {
        self.density.as_ref()
    }

    pub fn is_atomic(&self) -> bool {
        self.density_mass == 0.0
    }

    /// Density height at `theta`, zero without a continuous part.
    pub fn density_at(&self, theta: f64) -> f64 {
        if self.heights.is_empty() {
            return 0.0;
        }
        let n = self.heights.len();
        let j = ((wrap_angle(theta) / TAU * n as f64) as usize).min(n - 1);
        self.heights[j]
    }

    /// Density mass of `[0, x)`, exact for the piecewise-constant part.
    fn density_cdf(&self, x: f64) -> f64 {
        if self.heights.is_empty() {
            return 0.0;
        }
        let n = self.heights.len();
        let w = TAU / n as f64;
        let mut acc = 0.0;
        for (j, h) in self.heights.iter().enumerate() {
            let lo = j as f64 * w;
            if lo >= x {
                break;
            }
            acc += h * (x.min(lo + w) - lo);
        }
        acc
    }

    /// `ν([a, b))` for `0 ≤ a ≤ b ≤ 2π`.
    pub fn nu_mass(&self, a: f64, b: f64) -> Result<f64> {
        if a > b {
            return Err(Error::Argument(format!("interval [{a}, {b}) has a > b")));
        }
        if a < 0.0 || b > TAU {
            return Err(Error::Argument(format!("interval [{a}, {b}) not inside [0, 2π]")));
        }
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|(t, _)| *t >= a && *t < b)
            .map(|a| a.1)
            .sum();
        Ok(atoms + self.density_cdf(b) - self.density_cdf(a))
    }

    /// `ν(A)` for a union of disjoint intervals.
    pub fn nu_set(&self, set: &AngleSet) -> f64 {
        set.intervals()
            .iter()
            .map(|&(a, b)| self.nu_mass(a, b).expect("angle set intervals are valid"))
            .sum()
    }

    /// `∫ f dν`; the density part is integrated to absolute tolerance 1e-10
    /// with breakpoints at cell edges and the quarter angles.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|&(t, w)| w * f(t)).sum();
        if self.density_mass == 0.0 {
            return atoms;
        }
        let n = self.heights.len();
        let mut breaks: Vec<f64> = (1..n).map(|j| TAU * j as f64 / n as f64).collect();
        breaks.extend([PI / 2.0, PI, 1.5 * PI]);
        let g = |t: f64| f(t) * self.density_at(t);
        atoms + integrate_split(&g, 0.0, TAU, &breaks, QUADRATURE_TOL)
    }

    /// Draws one angle using exactly one uniform variate from `rng`.
    pub fn sample_angle<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.quantile(u)
    }

    /// Generalised inverse CDF: atoms first (in angle order), then the density part.
    pub fn quantile(&self, u: f64) -> f64 {
        if let Some(k) = self.atom_cum.iter().position(|&c| u < c) {
            return self.atoms[k].0;
        }
        if self.density_mass == 0.0 {
            // u rounded past the last cumulative weight
            return self.atoms.last().expect("measure has atoms").0;
        }
        let v = ((u - self.atom_mass) / self.density_mass).clamp(0.0, 1.0);
        let c = &self.cdf_cache;
        let j = c.partition_point(|&x| x <= v).clamp(1, CDF_NODES);
        let (lo, hi) = (c[j - 1], c[j]);
        let h = TAU / CDF_NODES as f64;
        let frac = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
        let theta = (j - 1) as f64 * h + frac * h;
        wrap_angle(theta.min(TAU))
    }

    /// Serialises to `{"atoms": [[theta, w], ...], "density": {...}}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&MeasureSpec::from(self)).expect("measure serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: MeasureSpec =
            serde_json::from_str(s).map_err(|e| Error::Argument(format!("measure JSON: {e}")))?;
        spec.build()
    }
}

/// Wire format of a spinning measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    #[serde(default)]
    pub atoms: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<Density>,
}

impl MeasureSpec {
    pub fn build(&self) -> Result<SpinningMeasure> {
        SpinningMeasure::new(self.atoms.iter().map(|a| (a[0], a[1])).collect(), self.density.clone())
    }
}

impl From<&SpinningMeasure> for MeasureSpec {
    fn from(m: &SpinningMeasure) -> Self {
        Self {
            atoms: m.atoms.iter().map(|&(t, w)| [t, w]).collect(),
            density: m.density.clone(),
        }
    }
}

impl Serialize for SpinningMeasure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureSpec::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpinningMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        MeasureSpec::deserialize(d)?.build().map_err(serde::de::Error::custom)
    }
}

/// A finite union of disjoint half-open angle intervals inside `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSet {
    intervals: Vec<(f64, f64)>,
}

impl AngleSet {
    pub fn full() -> Self {
        Self { intervals: vec![(0.0, TAU)] }
    }

    pub fn empty() -> Self {
        Self { intervals: Vec::new() }
    }

    /// `[a, b)` with `0 ≤ a ≤ b ≤ 2π`.
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        if a > b || a < 0.0 || b > TAU {
            return Err(Error::Argument(format!("bad angle interval [{a}, {b})")));
        }
        Ok(Self { intervals: vec![(a, b)] })
    }

    /// Arc from `start` counter-clockwise to `end`; wraps through 0 when `start > end`.
    pub fn arc(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite()) {
            return Err(Error::Argument("non-finite arc endpoint".into()));
        }
        let (a, b) = (wrap_angle(start), wrap_angle(end));
        if a <= b {
            Self::interval(a, b)
        } else {
            Ok(Self { intervals: vec![(0.0, b), (a, TAU)] })
        }
    }

    /// Symmetric neighbourhood `(θ − h, θ + h)` of an angle, as a half-open arc.
    pub fn around(theta: f64, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width < PI) {
            return Err(Error::Argument(format!("half width {half_width} outside (0, π)")));
        }
        Self::arc(theta - half_width, theta + half_width)
    }

    /// Union of two sets; fails if they overlap.
    pub fn union(&self, other: &AngleSet) -> Result<Self> {
        let mut iv: Vec<(f64, f64)> =
            self.intervals.iter().chain(&other.intervals).copied().filter(|i| i.1 > i.0).collect();
        iv.sort_by(|a, b| a.0.total_cmp(&b.0));
        if iv.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(Error::Argument("angle sets overlap".into()));
        }
        Ok(Self { intervals: iv })
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn contains(&self, theta: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| theta >= a && theta < b)
    }
}

/// First moments of the coordinate functions under a spinning measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AngularMoments {
    /// `(α₁⁺, α₂⁺)`.
    pub alpha_plus: [f64; 2],
    /// `(α₁⁻, α₂⁻)`.
    pub alpha_minus: [f64; 2],
    /// `γ = α⁺ − α⁻ = ∫ (cos θ, sin θ) ν(dθ)`.
    pub gamma: [f64; 2],
}

/// `αᵢ^± = ∫ (fᵢ)^± dν` and `γᵢ = ∫ fᵢ dν` with `f₁ = cos`, `f₂ = sin`.
pub fn alpha_gamma(mu: &SpinningMeasure) -> AngularMoments {
    let p1 = mu.integrate(|t| t.cos().max(0.0));
    let m1 = mu.integrate(|t| (-t.cos()).max(0.0));
    let p2 = mu.integrate(|t| t.sin().max(0.0));
    let m2 = mu.integrate(|t| (-t.sin()).max(0.0));
    let g1 = mu.integrate(f64::cos);
    let g2 = mu.integrate(f64::sin);
    AngularMoments { alpha_plus: [p1, p2], alpha_minus: [m1, m2], gamma: [g1, g2] }
}

/// The two-atom measure `((1+β)/2) δ_{z₀} + ((1−β)/2) δ_{−z₀}` with `β = ‖γ‖`
/// and `z₀ = γ/β` (angle 0 when `γ = 0`). Its mean vector is exactly `γ`.
///
/// No spinning measure has mean `γ` when `‖γ‖ > 1`.
pub fn measure_from_gamma(gamma: [f64; 2]) -> Result<SpinningMeasure> {
    let beta = gamma[0].hypot(gamma[1]);
    if !beta.is_finite() || beta > 1.0 {
        return Err(Error::Domain(format!(
            "no spinning measure has mean vector ({}, {}): its norm {beta} exceeds 1",
            gamma[0], gamma[1]
        )));
    }
    let z0 = if beta == 0.0 { 0.0 } else { wrap_angle(gamma[1].atan2(gamma[0])) };
    let w_plus = 0.5 * (1.0 + beta);
    let w_minus = 0.5 * (1.0 - beta);
    if w_minus == 0.0 {
        return Ok(SpinningMeasure::dirac(z0));
    }
    SpinningMeasure::atomic(vec![(z0, w_plus), (wrap_angle(z0 + PI), w_minus)])
}
