//! Excursion decomposition of folded paths and their unfolding into planar
//! Walsh paths, plus the tree metric.

use std::io::{self, Write};

use rand::Rng;
use serde::Serialize;

use crate::drivers::{PathKind, SamplePath, TimeGrid};
use crate::measures::SpinningMeasure;
use crate::{Error, Result};

/// Excursion id stored at points on the origin.
pub const NO_EXCURSION: u32 = u32::MAX;

/// A maximal run of grid indices `start..=end` on which the folded path is positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Excursion {
    pub id: u32,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExcursionDecomposition {
    pub zero_indices: Vec<usize>,
    pub excursions: Vec<Excursion>,
}

fn check_nonnegative(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(*v >= 0.0)) {
        Some(k) => Err(Error::Argument(format!("folded path has value {} at index {k}", values[k]))),
        None => Ok(()),
    }
}

/// Splits a nonnegative path into exact zeros and maximal positive runs, ids in time order.
pub fn excursion_decompose(s: &SamplePath) -> Result<ExcursionDecomposition> {
    check_nonnegative(&s.values)?;
    let mut zero_indices = Vec::new();
    let mut excursions: Vec<Excursion> = Vec::new();
    let mut open: Option<usize> = None;
    for (k, &v) in s.values.iter().enumerate() {
        if v == 0.0 {
            zero_indices.push(k);
            if let Some(start) = open.take() {
                excursions.push(Excursion { id: excursions.len() as u32, start, end: k - 1 });
            }
        } else if open.is_none() {
            open = Some(k);
        }
    }
    if let Some(start) = open {
        excursions.push(Excursion { id: excursions.len() as u32, start, end: s.values.len() - 1 });
    }
    Ok(ExcursionDecomposition { zero_indices, excursions })
}

/// A point in polar coordinates; the angle is meaningless at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarPoint {
    pub r: f64,
    pub theta: f64,
}

impl PolarPoint {
    pub fn new(r: f64, theta: f64) -> Self {
        Self { r, theta }
    }

    pub fn origin() -> Self {
        Self { r: 0.0, theta: f64::NAN }
    }

    pub fn cartesian(&self) -> [f64; 2] {
        if self.r == 0.0 {
            [0.0, 0.0]
        } else {
            [self.r * self.theta.cos(), self.r * self.theta.sin()]
        }
    }
}

/// Tree ("French railway") distance: `|r₁ − r₂|` on a common ray, `r₁ + r₂` otherwise.
pub fn tree_distance(x: PolarPoint, y: PolarPoint) -> f64 {
    if x.r == 0.0 || y.r == 0.0 || x.theta == y.theta {
        (x.r - y.r).abs()
    } else {
        x.r + y.r
    }
}

/// A planar path stored in polar form on a grid.
///
/// `angle[k]` is `NaN` exactly where `radial[k] == 0`; use [`WalshPath::angle_at`]
/// for an `Option` view.
#[derive(Debug, Clone, PartialEq)]
pub struct WalshPath {
    pub grid: TimeGrid,
    pub radial: Vec<f64>,
    pub angle: Vec<f64>,
    pub excursion_id: Vec<u32>,
    pub localtime: Vec<f64>,
}

impl WalshPath {
    pub fn len(&self) -> usize {
        self.radial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radial.is_empty()
    }

    pub fn angle_at(&self, k: usize) -> Option<f64> {
        let a = self.angle[k];
        (!a.is_nan()).then_some(a)
    }

    pub fn point(&self, k: usize) -> PolarPoint {
        PolarPoint { r: self.radial[k], theta: self.angle[k] }
    }

    pub fn x1(&self, k: usize) -> f64 {
        self.point(k).cartesian()[0]
    }

    pub fn x2(&self, k: usize) -> f64 {
        self.point(k).cartesian()[1]
    }

    pub fn last_point(&self) -> PolarPoint {
        self.point(self.len() - 1)
    }

    /// Radial part as a folded sample path.
    pub fn radial_path(&self) -> SamplePath {
        SamplePath { grid: self.grid, values: self.radial.clone(), kind: PathKind::Folded }
    }

    pub fn localtime_path(&self) -> SamplePath {
        SamplePath { grid: self.grid, values: self.localtime.clone(), kind: PathKind::LocalTime }
    }

    /// Unfolding state at the final grid point, for continuing the path.
    pub fn end_state(&self) -> UnfoldState {
        let k = self.len() - 1;
        let next_id = self
            .excursion_id
            .iter()
            .filter(|&&i| i != NO_EXCURSION)
            .max()
            .map_or(0, |m| m + 1);
        UnfoldState { angle: self.angle[k], id: self.excursion_id[k], next_id }
    }

    /// Appends `next`, whose first point must coincide with this path's last point.
    /// Local time of `next` is shifted to continue this one.
    pub fn extend(&mut self, next: &WalshPath) -> Result<()> {
        if (next.grid.dt() - self.grid.dt()).abs() > 1e-12 * self.grid.dt() {
            return Err(Error::Argument("cannot join paths with different time steps".into()));
        }
        let k = self.len() - 1;
        if next.radial[0] != self.radial[k] || next.excursion_id[0] != self.excursion_id[k] {
            return Err(Error::Argument("paths do not join".into()));
        }
        let l0 = self.localtime[k] - next.localtime[0];
        self.radial.extend_from_slice(&next.radial[1..]);
        self.angle.extend_from_slice(&next.angle[1..]);
        self.excursion_id.extend_from_slice(&next.excursion_id[1..]);
        self.localtime.extend(next.localtime[1..].iter().map(|l| l + l0));
        self.grid = self.grid.extended(next.grid.n_steps);
        Ok(())
    }

    /// Writes `t,r,theta,x1,x2,excursion_id,L`; the angle and id are empty at the origin.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "t,r,theta,x1,x2,excursion_id,L")?;
        for k in 0..self.len() {
            let [x1, x2] = self.point(k).cartesian();
            match self.angle_at(k) {
                Some(a) => writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    self.grid.time(k),
                    self.radial[k],
                    a,
                    x1,
                    x2,
                    self.excursion_id[k],
                    self.localtime[k]
                )?,
                None => writeln!(
                    out,
                    "{},{},,{},{},,{}",
                    self.grid.time(k),
                    self.radial[k],
                    x1,
                    x2,
                    self.localtime[k]
                )?,
            }
        }
        Ok(())
    }
}

/// Ray and excursion bookkeeping at one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnfoldState {
    /// Current ray, `NaN` at the origin.
    pub angle: f64,
    /// Current excursion id, [`NO_EXCURSION`] at the origin.
    pub id: u32,
    /// Id the next excursion will receive.
    pub next_id: u32,
}

/// Assigns rays to a folded path point by point. A fresh angle is drawn from
/// the spinning measure whenever the path leaves the origin.
#[derive(Debug, Clone)]
pub struct Unfolder<'a> {
    mu: &'a SpinningMeasure,
    state: UnfoldState,
}

impl<'a> Unfolder<'a> {
    /// Starts at radial value `s0`; a positive start needs the initial ray.
    pub fn start(mu: &'a SpinningMeasure, s0: f64, initial_angle: Option<f64>) -> Result<Self> {
        if !(s0 >= 0.0) {
            return Err(Error::Argument(format!("initial radial value {s0} is negative")));
        }
        let state = if s0 > 0.0 {
            let a = initial_angle.ok_or_else(|| {
                Error::Argument("path starts off the origin but no initial angle was given".into())
            })?;
            if !(0.0..crate::TAU).contains(&a) {
                return Err(Error::Argument(format!("initial angle {a} outside [0, 2π)")));
            }
            UnfoldState { angle: a, id: 0, next_id: 1 }
        } else {
            UnfoldState { angle: f64::NAN, id: NO_EXCURSION, next_id: 0 }
        };
        Ok(Self { mu, state })
    }

    /// Continues from a saved state (possibly with a different measure).
    pub fn resume(mu: &'a SpinningMeasure, state: UnfoldState) -> Self {
        Self { mu, state }
    }

    pub fn state(&self) -> UnfoldState {
        self.state
    }

    /// Advances to the next radial value `s ≥ 0`.
    #[inline]
    pub fn push<R: Rng + ?Sized>(&mut self, s: f64, rng: &mut R) -> UnfoldState {
        if s == 0.0 {
            self.state.angle = f64::NAN;
            self.state.id = NO_EXCURSION;
        } else if self.state.id == NO_EXCURSION {
            self.state.angle = self.mu.sample_angle(rng);
            self.state.id = self.state.next_id;
            self.state.next_id += 1;
        }
        self.state
    }
}

/// Unfolds a folded path along rays: every excursion after the first visit to
/// the origin gets an independent angle from `mu`, drawn in time order; an
/// initial excursion keeps `initial_angle`.
pub fn unfold<R: Rng + ?Sized>(
    s: &SamplePath,
    localtime: &SamplePath,
    mu: &SpinningMeasure,
    initial_angle: Option<f64>,
    rng: &mut R,
) -> Result<WalshPath> {
    s.same_grid(localtime)?;
    check_nonnegative(&s.values)?;
    let mut u = Unfolder::start(mu, s.values[0], initial_angle)?;
    let n = s.values.len();
    let mut angle = Vec::with_capacity(n);
    let mut excursion_id = Vec::with_capacity(n);
    let st = u.state();
    angle.push(st.angle);
    excursion_id.push(st.id);
    for &v in &s.values[1..] {
        let st = u.push(v, rng);
        angle.push(st.angle);
        excursion_id.push(st.id);
    }
    Ok(WalshPath {
        grid: s.grid,
        radial: s.values.clone(),
        angle,
        excursion_id,
        localtime: localtime.values.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RayConstancyReport {
    /// Indices where the angle differs from the previous point of the same excursion.
    pub violation_indices: Vec<usize>,
}

impl RayConstancyReport {
    pub fn violations(&self) -> usize {
        self.violation_indices.len()
    }
}

/// Finds angle changes inside positive runs of the radial part.
pub fn check_ray_constancy(w: &WalshPath) -> RayConstancyReport {
    let violation_indices = (1..w.len())
        .filter(|&k| w.radial[k - 1] > 0.0 && w.radial[k] > 0.0 && w.angle[k] != w.angle[k - 1])
        .collect();
    RayConstancyReport { violation_indices }
}
