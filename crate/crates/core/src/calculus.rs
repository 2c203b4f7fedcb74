//! Class-𝔇 test functions, the generator, the Freidlin–Sheu decomposition
//! along simulated paths, and statistical martingale checks.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::drivers::{RadialCoefficients, SamplePath};
use crate::localtime::lt_tanaka;
use crate::measures::{alpha_gamma, AngleSet, SpinningMeasure};
use crate::stats::{mean_stderr, normal_two_sided_p};
use crate::unfolding::WalshPath;
use crate::{Error, Result};

pub type PolarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// What is claimed about `∫ g′_θ(0+) ν(dθ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeClass {
    /// Zero: `g(X)` has no local-time term.
    Zero,
    /// Nonnegative: `g(X)` picks up a nondecreasing local-time term.
    Nonnegative,
    /// No claim.
    Unrestricted,
}

/// A function `g(r, θ)` with its radial derivatives `g′_θ(r)`, `g″_θ(r)`.
/// At `r = 0` the first derivative is the right derivative.
#[derive(Clone)]
pub struct ClassDFunction {
    pub name: String,
    g: PolarFn,
    g1: PolarFn,
    g2: PolarFn,
    pub class: SlopeClass,
}

impl fmt::Debug for ClassDFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClassDFunction").field("name", &self.name).field("class", &self.class).finish()
    }
}

fn at_origin_safe(theta: f64) -> f64 {
    if theta.is_nan() {
        0.0
    } else {
        theta
    }
}

impl ClassDFunction {
    pub fn new(
        name: impl Into<String>,
        class: SlopeClass,
        g: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        g1: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        g2: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), g: Arc::new(g), g1: Arc::new(g1), g2: Arc::new(g2), class }
    }

    /// `g(r, θ)`; the angle may be `NaN` at the origin.
    pub fn value(&self, r: f64, theta: f64) -> f64 {
        (self.g)(r, at_origin_safe(theta))
    }

    pub fn d1(&self, r: f64, theta: f64) -> f64 {
        (self.g1)(r, at_origin_safe(theta))
    }

    pub fn d2(&self, r: f64, theta: f64) -> f64 {
        (self.g2)(r, at_origin_safe(theta))
    }

    /// `∫ g′_θ(0+) ν(dθ)`.
    pub fn slope_integral(&self, mu: &SpinningMeasure) -> f64 {
        mu.integrate(|t| (self.g1)(0.0, t))
    }

    /// `a·f + b·g` (derivatives combine linearly).
    pub fn linear_combination(a: f64, f: &ClassDFunction, b: f64, g: &ClassDFunction) -> Self {
        let (f0, f1, f2) = (f.g.clone(), f.g1.clone(), f.g2.clone());
        let (g0, g1, g2) = (g.g.clone(), g.g1.clone(), g.g2.clone());
        Self::new(
            format!("{a}*{}+{b}*{}", f.name, g.name),
            SlopeClass::Unrestricted,
            move |r, t| a * f0(r, t) + b * g0(r, t),
            move |r, t| a * f1(r, t) + b * g1(r, t),
            move |r, t| a * f2(r, t) + b * g2(r, t),
        )
    }
}

/// `g₁ = r (cos θ − γ₁)`, `g₂ = r (sin θ − γ₂)`.
pub fn g_linear(i: usize, gamma: [f64; 2]) -> ClassDFunction {
    let c = move |t: f64| coord(i, t) - gamma[i - 1];
    ClassDFunction::new(format!("g{i}"), SlopeClass::Zero, move |r, t| r * c(t), move |_, t| c(t), |_, _| 0.0)
}

fn coord(i: usize, t: f64) -> f64 {
    if i == 1 {
        t.cos()
    } else {
        t.sin()
    }
}

/// `g_{i,k} = g_i g_k = r² (f_i − γ_i)(f_k − γ_k)`.
pub fn g_product(i: usize, k: usize, gamma: [f64; 2]) -> ClassDFunction {
    let c = move |t: f64| (coord(i, t) - gamma[i - 1]) * (coord(k, t) - gamma[k - 1]);
    ClassDFunction::new(
        format!("g{i}{k}"),
        SlopeClass::Zero,
        move |r, t| r * r * c(t),
        move |r, t| 2.0 * r * c(t),
        move |_, t| 2.0 * c(t),
    )
}

/// `g°_{i,i} = r² f_i(θ)²`.
pub fn g_square(i: usize) -> ClassDFunction {
    let c = move |t: f64| coord(i, t) * coord(i, t);
    ClassDFunction::new(
        format!("g{i}{i}_circ"),
        SlopeClass::Zero,
        move |r, t| r * r * c(t),
        move |r, t| 2.0 * r * c(t),
        move |_, t| 2.0 * c(t),
    )
}

/// `g₃ = r`.
pub fn g_radius() -> ClassDFunction {
    ClassDFunction::new("g3", SlopeClass::Nonnegative, |r, _| r, |_, _| 1.0, |_, _| 0.0)
}

/// `g₄ = ψ(r)` with `ψ(r) = c/3 + r²/c − r³/(3c²)` on `[0, c]` and `ψ(r) = r` beyond:
/// a C² function with `ψ′(0) = 0`.
pub fn g_smooth_radius(c: f64) -> Result<ClassDFunction> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Argument(format!("blend radius {c} must be positive")));
    }
    Ok(ClassDFunction::new(
        "g4",
        SlopeClass::Zero,
        move |r, _| if r < c { c / 3.0 + r * r / c - r * r * r / (3.0 * c * c) } else { r },
        move |r, _| if r < c { 2.0 * r / c - r * r / (c * c) } else { 1.0 },
        move |r, _| if r < c { 2.0 / c - 2.0 * r / (c * c) } else { 0.0 },
    ))
}

/// `g₅ = r (1_A(θ) − ν(A))`.
pub fn g_set_centered(set: AngleSet, mu: &SpinningMeasure) -> ClassDFunction {
    let nu_a = mu.nu_set(&set);
    let h = move |t: f64| if set.contains(t) { 1.0 - nu_a } else { -nu_a };
    let h1 = h.clone();
    ClassDFunction::new("g5", SlopeClass::Zero, move |r, t| r * h(t), move |_, t| h1(t), |_, _| 0.0)
}

/// `g₆ = r 1_A(θ)`.
pub fn g_set(set: AngleSet) -> ClassDFunction {
    let h = move |t: f64| if set.contains(t) { 1.0 } else { 0.0 };
    let h1 = h.clone();
    ClassDFunction::new("g6", SlopeClass::Nonnegative, move |r, t| r * h(t), move |_, t| h1(t), |_, _| 0.0)
}

/// Slope-averaging function `g_(φ) = r (φ(θ) − ∫ φ dν)`.
pub fn g_phi(
    name: impl Into<String>,
    phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
    mu: &SpinningMeasure,
) -> ClassDFunction {
    let phi = Arc::new(phi);
    let mean = {
        let p = phi.clone();
        mu.integrate(move |t| p(t))
    };
    let h = move |t: f64| phi(t) - mean;
    let h1 = h.clone();
    ClassDFunction::new(name, SlopeClass::Zero, move |r, t| r * h(t), move |_, t| h1(t), |_, _| 0.0)
}

/// The built-in function catalog for a spinning measure: `g₁, g₂, g₁₁, g₁₂, g₂₂,
/// g°₁₁, g°₂₂, g₃, g₄, g₅, g₆, g_(φ)` with `A = [0, π)`, `φ(θ) = θ/2π` and blend radius 1.
pub fn catalog(mu: &SpinningMeasure) -> Vec<ClassDFunction> {
    let gamma = alpha_gamma(mu).gamma;
    let upper = AngleSet::interval(0.0, PI).expect("valid interval");
    vec![
        g_linear(1, gamma),
        g_linear(2, gamma),
        g_product(1, 1, gamma),
        g_product(1, 2, gamma),
        g_product(2, 2, gamma),
        g_square(1),
        g_square(2),
        g_radius(),
        g_smooth_radius(1.0).expect("positive radius"),
        g_set_centered(upper.clone(), mu),
        g_set(upper),
        g_phi("g_phi", |t| t / crate::TAU, mu),
    ]
}

/// `ℒg(r, θ) = b(r) g′_θ(r) + ½ a(r) g″_θ(r)`, defined off the origin.
pub fn generator_apply(g: &ClassDFunction, coeffs: &RadialCoefficients, r: f64, theta: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("generator is defined only off the origin (r = {r})")));
    }
    Ok(coeffs.b(r) * g.d1(r, theta) + 0.5 * coeffs.a(r) * g.d2(r, theta))
}

/// Result of a finite-difference class-𝔇 validation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassDReport {
    pub name: String,
    pub max_first_derivative_error: f64,
    pub max_second_derivative_error: f64,
    pub max_origin_ratio: f64,
    pub origin_spread: f64,
    pub passed: bool,
}

/// Checks supplied derivatives by forward differences with `h = 1e-5` against tolerance
/// `max(1e-4, 10h)`, and tree-metric continuity at the origin, on a probe lattice
/// `r ∈ [0, 4]`, 32 angles plus the atoms of `mu`.
pub fn validate_class_d(g: &ClassDFunction, mu: &SpinningMeasure) -> ClassDReport {
    let h = 1e-5;
    let tol = f64::max(1e-4, 10.0 * h);
    let mut angles: Vec<f64> = (0..32).map(|j| crate::TAU * j as f64 / 32.0 + 0.01).collect();
    angles.extend(mu.atoms().iter().map(|a| a.0));
    let radii: Vec<f64> = (0..=40).map(|k| k as f64 * 0.1).collect();
    let g0s: Vec<f64> = angles.iter().map(|&t| g.value(0.0, t)).collect();
    let g0 = g0s[0];
    let origin_spread = g0s.iter().map(|v| (v - g0).abs()).fold(0.0, f64::max);
    let (mut e1, mut e2, mut ratio, mut bound) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for &t in &angles {
        for &r in &radii {
            let fd1 = (g.value(r + h, t) - g.value(r, t)) / h;
            let fd2 = (g.d1(r + h, t) - g.d1(r, t)) / h;
            e1 = e1.max((fd1 - g.d1(r, t)).abs());
            e2 = e2.max((fd2 - g.d2(r, t)).abs());
            bound = bound.max(g.d1(r, t).abs());
            if r > 0.0 {
                ratio = ratio.max((g.value(r, t) - g0).abs() / r);
            }
        }
    }
    // |g(r,θ) − g(0)| ≤ r · sup|g′| on the lattice, up to rounding
    let passed = e1 <= tol && e2 <= tol && origin_spread <= 1e-12 && ratio <= bound * (1.0 + 1e-9) + 1e-12;
    ClassDReport {
        name: g.name.clone(),
        max_first_derivative_error: e1,
        max_second_derivative_error: e2,
        max_origin_ratio: ratio,
        origin_spread,
        passed,
    }
}

/// Pathwise terms of the Freidlin–Sheu formula
/// `g(X_t) = g(x₀) + Σ 1{X≠0} G′ ΔU + Σ 1{X≠0} ½ G″ Δ⟨U⟩ + (∫ g′_θ(0+) ν(dθ)) L_t + residual`.
#[derive(Debug, Clone, PartialEq)]
pub struct FSDecomposition {
    pub lhs: Vec<f64>,
    pub stochastic_term: Vec<f64>,
    pub drift_term: Vec<f64>,
    pub localtime_term: Vec<f64>,
    pub residual: Vec<f64>,
    pub slope_integral: f64,
}

impl FSDecomposition {
    pub fn terminal_residual(&self) -> f64 {
        *self.residual.last().expect("nonempty")
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residual.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Evaluates the decomposition with left-point sums. `u` is the driver, `qv` its
/// cumulative quadratic variation. Without an explicit local-time path, the Tanaka
/// estimate from `(‖X‖, U)` is used.
pub fn fs_decompose(
    w: &WalshPath,
    u: &SamplePath,
    qv: &SamplePath,
    g: &ClassDFunction,
    mu: &SpinningMeasure,
    localtime: Option<&SamplePath>,
) -> Result<FSDecomposition> {
    let radial = w.radial_path();
    radial.same_grid(u)?;
    radial.same_grid(qv)?;
    let lt = match localtime {
        Some(l) => {
            radial.same_grid(l)?;
            l.values.clone()
        }
        None => lt_tanaka(&radial, u)?.path.values,
    };
    let slope = g.slope_integral(mu);
    let n = w.len();
    let g0 = g.value(w.radial[0], w.angle[0]);
    let l0 = lt[0];
    let mut lhs = Vec::with_capacity(n);
    let mut st = Vec::with_capacity(n);
    let mut dr = Vec::with_capacity(n);
    let mut lt_term = Vec::with_capacity(n);
    let mut residual = Vec::with_capacity(n);
    let (mut s_acc, mut d_acc) = (0.0, 0.0);
    for k in 0..n {
        if k > 0 {
            let (r, t) = (w.radial[k - 1], w.angle[k - 1]);
            if r > 0.0 {
                s_acc += g.d1(r, t) * (u.values[k] - u.values[k - 1]);
                d_acc += 0.5 * g.d2(r, t) * (qv.values[k] - qv.values[k - 1]);
            }
        }
        let v = g.value(w.radial[k], w.angle[k]);
        let l = slope * (lt[k] - l0);
        lhs.push(v);
        st.push(s_acc);
        dr.push(d_acc);
        lt_term.push(l);
        residual.push(v - g0 - s_acc - d_acc - l);
    }
    Ok(FSDecomposition {
        lhs,
        stochastic_term: st,
        drift_term: dr,
        localtime_term: lt_term,
        residual,
        slope_integral: slope,
    })
}

/// Residual report for one function over a batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub g_name: String,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub n_paths: usize,
    pub rms_residual: f64,
    pub max_residual: f64,
    pub ztest: Option<ZTest>,
}

impl ResidualReport {
    /// Summarises terminal residuals.
    pub fn new(g_name: &str, dt: f64, t: f64, terminal_residuals: &[f64]) -> Self {
        let n = terminal_residuals.len();
        let rms = (terminal_residuals.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
        let max = terminal_residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        Self {
            g_name: g_name.to_string(),
            dt,
            t,
            n_paths: n,
            rms_residual: rms,
            max_residual: max,
            ztest: martingale_ztest(terminal_residuals).ok(),
        }
    }
}

/// Slope-averaging martingale along a path.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeAverage {
    /// `g_(φ)(X(t_k))`.
    pub g_path: Vec<f64>,
    /// `Σ h_(φ)(X) ΔU`.
    pub integral: Vec<f64>,
    /// `sup_k |g_(φ)(X) − g_(φ)(x₀) − Σ h_(φ) ΔU|`.
    pub sup_deviation: f64,
}

impl SlopeAverage {
    /// `g_(φ)(X(T)) − g_(φ)(x₀)`.
    pub fn terminal_increment(&self) -> f64 {
        self.g_path.last().expect("nonempty") - self.g_path[0]
    }
}

/// `g_(φ)(X)` with `h_(φ)(x) = (φ(arg x) − ∫ φ dν) 1{x ≠ 0}` and `g_(φ) = ‖x‖ h_(φ)`.
pub fn slope_avg_process(
    w: &WalshPath,
    phi: impl Fn(f64) -> f64,
    mu: &SpinningMeasure,
    u: &SamplePath,
) -> Result<SlopeAverage> {
    w.radial_path().same_grid(u)?;
    let mean = mu.integrate(&phi);
    let h = |k: usize| match w.angle_at(k) {
        Some(t) if w.radial[k] > 0.0 => phi(t) - mean,
        _ => 0.0,
    };
    let n = w.len();
    let mut g_path = Vec::with_capacity(n);
    let mut integral = Vec::with_capacity(n);
    let mut acc = 0.0;
    let mut sup = 0.0f64;
    let mut h_prev = h(0);
    let g0 = w.radial[0] * h_prev;
    for k in 0..n {
        let hk = h(k);
        if k > 0 {
            acc += h_prev * (u.values[k] - u.values[k - 1]);
        }
        let gk = w.radial[k] * hk;
        sup = sup.max((gk - g0 - acc).abs());
        g_path.push(gk);
        integral.push(acc);
        h_prev = hk;
    }
    Ok(SlopeAverage { g_path, integral, sup_deviation: sup })
}

/// One-sample z-test of zero mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZTest {
    pub z: f64,
    pub p_value: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    /// Sample standard deviation is zero.
    pub degenerate: bool,
}

impl ZTest {
    pub fn passes(&self, bound: f64) -> bool {
        self.z.abs() < bound
    }
}

/// `z = mean / (sd/√n)` with a two-sided normal p-value; needs at least 30 samples.
pub fn martingale_ztest(samples: &[f64]) -> Result<ZTest> {
    let n = samples.len();
    if n < 30 {
        return Err(Error::Argument(format!("z-test needs at least 30 samples, got {n}")));
    }
    let (mean, stderr) = mean_stderr(samples);
    let degenerate = stderr == 0.0;
    let z = if degenerate {
        if mean == 0.0 {
            0.0
        } else {
            mean.signum() * f64::INFINITY
        }
    } else {
        mean / stderr
    };
    Ok(ZTest { z, p_value: normal_two_sided_p(z), mean, stderr, n, degenerate })
}
