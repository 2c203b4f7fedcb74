//! Walsh diffusions.
//!
//! Radial coefficients go through the fold/unfold route: simulate the reflected
//! radial diffusion and assign rays at every departure from the origin.
//! Angularly dependent coefficients go through a scale function and a
//! stochastic clock applied to a Walsh Brownian motion. The module also
//! recovers spinning measures from first-exit angles and hosts the
//! experiments built on these constructions.

use std::fmt;
use std::ops::ControlFlow;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::batch::BatchRunner;
use crate::calculus::PolarFn;
use crate::drivers::{gaussian, PathKind, RadialCoefficients, ReflectedStepper, SamplePath, ScalarCoefficients, TimeGrid};
use crate::localtime::crossings;
use crate::measures::SpinningMeasure;
use crate::quadrature::integrate;
use crate::rng::{Purpose, StreamFactory};
use crate::stats::{chi_square_gof, mean_stderr, Histogram, TestResult};
use crate::unfolding::{tree_distance, PolarPoint, UnfoldState, Unfolder, WalshPath, NO_EXCURSION};
use crate::{wrap_angle, Error, Result, TAU};

// ---------------------------------------------------------------------------
// Radial coefficients: fold and unfold

/// A simulated Walsh diffusion together with its driver `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalshSample {
    pub path: WalshPath,
    pub driver: SamplePath,
}

fn initial_ray(x0: PolarPoint) -> Result<Option<f64>> {
    if !(x0.r >= 0.0 && x0.r.is_finite()) {
        return Err(Error::Argument(format!("initial radius {} must be finite and nonnegative", x0.r)));
    }
    if x0.r == 0.0 {
        return Ok(None);
    }
    if !x0.theta.is_finite() {
        return Err(Error::Argument("initial point off the origin needs a finite angle".into()));
    }
    Ok(Some(wrap_angle(x0.theta)))
}

#[allow(clippy::too_many_arguments)]
fn drive<R1, R2, V>(
    b: impl Fn(f64) -> f64,
    sigma: impl Fn(f64) -> f64,
    stepper: &mut ReflectedStepper,
    unf: &mut Unfolder,
    steps: usize,
    offset: usize,
    drng: &mut R1,
    arng: &mut R2,
    visit: &mut V,
) -> Result<usize>
where
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
    V: FnMut(&ReflectedStepper, UnfoldState) -> ControlFlow<()>,
{
    for k in 0..steps {
        let x = stepper.s;
        stepper.step(b(x), sigma(x), gaussian(drng));
        if !stepper.u.is_finite() {
            return Err(Error::NumericalBlowup { step: offset + k + 1, value: stepper.u });
        }
        let st = unf.push(stepper.s, arng);
        if visit(stepper, st).is_break() {
            return Ok(k + 1);
        }
    }
    Ok(steps)
}

#[allow(clippy::too_many_arguments)]
fn drive_radial<R1, R2, V>(
    coeffs: &RadialCoefficients,
    stepper: &mut ReflectedStepper,
    unf: &mut Unfolder,
    steps: usize,
    offset: usize,
    drng: &mut R1,
    arng: &mut R2,
    visit: &mut V,
) -> Result<usize>
where
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
    V: FnMut(&ReflectedStepper, UnfoldState) -> ControlFlow<()>,
{
    match coeffs.scalar() {
        ScalarCoefficients::Constant { b, sigma } => {
            drive(|_| *b, |_| *sigma, stepper, unf, steps, offset, drng, arng, visit)
        }
        ScalarCoefficients::General { b, sigma } => {
            drive(|x| b(x), |x| sigma(x), stepper, unf, steps, offset, drng, arng, visit)
        }
    }
}

/// Walsh diffusion with radial coefficients from `x0`: the reflected diffusion
/// `dS = b(S)dt + σ(S)dW + dL` unfolded with `mu`, keeping the ray of `x0`
/// until the first visit to the origin.
pub fn simulate_walsh_diffusion<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    coeffs: &RadialCoefficients,
    mu: &SpinningMeasure,
    x0: PolarPoint,
    grid: TimeGrid,
    driver_rng: &mut R1,
    angle_rng: &mut R2,
) -> Result<WalshSample> {
    let ray = initial_ray(x0)?;
    let n = grid.len();
    let mut stepper = ReflectedStepper::new(x0.r, grid.dt());
    let mut unf = Unfolder::start(mu, x0.r, ray)?;
    let mut u = Vec::with_capacity(n);
    let mut radial = Vec::with_capacity(n);
    let mut angle = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    let mut lt = Vec::with_capacity(n);
    let st = unf.state();
    u.push(stepper.u);
    radial.push(stepper.s);
    angle.push(st.angle);
    ids.push(st.id);
    lt.push(stepper.lambda());
    drive_radial(coeffs, &mut stepper, &mut unf, grid.n_steps, 0, driver_rng, angle_rng, &mut |s, st| {
        u.push(s.u);
        radial.push(s.s);
        angle.push(st.angle);
        ids.push(st.id);
        lt.push(s.lambda());
        ControlFlow::Continue(())
    })?;
    Ok(WalshSample {
        path: WalshPath { grid, radial, angle, excursion_id: ids, localtime: lt },
        driver: SamplePath { grid, values: u, kind: PathKind::Driver },
    })
}

/// Terminal point and local time of [`simulate_walsh_diffusion`], without
/// storing the path. Consumes the streams identically.
pub fn walsh_diffusion_terminal<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    coeffs: &RadialCoefficients,
    mu: &SpinningMeasure,
    x0: PolarPoint,
    grid: TimeGrid,
    driver_rng: &mut R1,
    angle_rng: &mut R2,
) -> Result<(PolarPoint, f64)> {
    let ray = initial_ray(x0)?;
    let mut stepper = ReflectedStepper::new(x0.r, grid.dt());
    let mut unf = Unfolder::start(mu, x0.r, ray)?;
    drive_radial(coeffs, &mut stepper, &mut unf, grid.n_steps, 0, driver_rng, angle_rng, &mut |_, _| {
        ControlFlow::Continue(())
    })?;
    Ok((PolarPoint::new(stepper.s, unf.state().angle), stepper.lambda()))
}

// ---------------------------------------------------------------------------
// Angular coefficients and the scale transform

/// Lower bound enforced on `a = σ²` over the probe lattice.
pub const A_MIN: f64 = 1e-8;
/// Admissible dimensions of the Bessel family are `[1 + margin, 2 − margin]`.
pub const BESSEL_MARGIN: f64 = 0.05;
/// Absolute tolerance of the nested scale-function quadrature.
pub const SCALE_TOL: f64 = 1e-9;

const PROBE_R_MAX: f64 = 10.0;
const PROBE_R_STEPS: usize = 200;
const PROBE_ANGLES: usize = 64;

fn probe_points() -> impl Iterator<Item = (f64, f64)> {
    (0..=PROBE_R_STEPS).flat_map(|i| {
        let r = PROBE_R_MAX * i as f64 / PROBE_R_STEPS as f64;
        (0..PROBE_ANGLES).map(move |j| (r, TAU * j as f64 / PROBE_ANGLES as f64))
    })
}

/// Drift `b(r, θ)` and dispersion `σ(r, θ)` of a Walsh diffusion whose
/// coefficients depend on the ray.
#[derive(Clone)]
pub struct AngularCoefficients {
    b: PolarFn,
    sigma: PolarFn,
    bessel: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl fmt::Debug for AngularCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AngularCoefficients").field("bessel", &self.bessel.is_some()).finish()
    }
}

impl AngularCoefficients {
    /// Checks on the probe lattice `r ∈ [0, 10]`, 64 angles: `b`, `σ` finite and `a ≥ A_MIN`.
    pub fn new(
        b: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        sigma: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        for (r, t) in probe_points() {
            let (bv, sv) = (b(r, t), sigma(r, t));
            if !bv.is_finite() || !sv.is_finite() {
                return Err(Error::Domain(format!("coefficients not finite at r = {r}, θ = {t}")));
            }
            if !(sv * sv >= A_MIN) {
                return Err(Error::Domain(format!(
                    "a = σ² = {} is not bounded away from zero at r = {r}, θ = {t}",
                    sv * sv
                )));
            }
        }
        Ok(Self { b: Arc::new(b), sigma: Arc::new(sigma), bessel: None })
    }

    /// `b(r, θ) = −λ(θ)`, `σ ≡ 1`.
    pub fn polar_drift(lambda: &AngularStep) -> Result<Self> {
        if lambda.values.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Domain("drift rates must be positive".into()));
        }
        let l = lambda.clone();
        Self::new(move |_, t| -l.eval(t), |_, _| 1.0)
    }

    /// Squared-Bessel family `a(r, θ) = 4r`, `b(r, θ) = δ(θ)`, which degenerates
    /// at the origin and is handled by its closed-form scale function.
    pub fn bessel(delta: &AngularStep) -> Result<Self> {
        for &d in &delta.values {
            check_bessel_delta(d)?;
        }
        let (d1, d2) = (delta.clone(), delta.clone());
        Ok(Self {
            b: Arc::new(move |_, t| d1.eval(t)),
            sigma: Arc::new(|r, _| 2.0 * r.max(0.0).sqrt()),
            bessel: Some(Arc::new(move |t| d2.eval(t))),
        })
    }

    pub fn b(&self, r: f64, theta: f64) -> f64 {
        (self.b)(r, theta)
    }

    pub fn sigma(&self, r: f64, theta: f64) -> f64 {
        (self.sigma)(r, theta)
    }

    pub fn a(&self, r: f64, theta: f64) -> f64 {
        let s = self.sigma(r, theta);
        s * s
    }

    pub fn is_bessel(&self) -> bool {
        self.bessel.is_some()
    }
}

fn check_bessel_delta(d: f64) -> Result<()> {
    if !(d >= 1.0 + BESSEL_MARGIN && d <= 2.0 - BESSEL_MARGIN) {
        return Err(Error::Domain(format!(
            "Bessel dimension {d} outside [{}, {}]",
            1.0 + BESSEL_MARGIN,
            2.0 - BESSEL_MARGIN
        )));
    }
    Ok(())
}

/// A function of the angle that is constant on the cells `[starts[j], starts[j+1])`
/// (cyclically). Angles before the first start belong to the last cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularStep {
    pub starts: Vec<f64>,
    pub values: Vec<f64>,
}

impl AngularStep {
    pub fn new(starts: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if starts.is_empty() || starts.len() != values.len() {
            return Err(Error::Argument("need one value per cell start".into()));
        }
        check_lattice(&starts)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("cell values must be finite".into()));
        }
        Ok(Self { starts, values })
    }

    pub fn constant(v: f64) -> Self {
        Self { starts: vec![0.0], values: vec![v] }
    }

    pub fn is_constant(&self) -> bool {
        self.values.iter().all(|&v| v == self.values[0])
    }

    pub fn cell(&self, theta: f64) -> usize {
        cell_of(&self.starts, theta)
    }

    pub fn eval(&self, theta: f64) -> f64 {
        self.values[self.cell(theta)]
    }

    /// Cells as `(start, end, value)` with `end` wrapping past 2π for the last cell.
    fn arcs(&self) -> Vec<(f64, f64, f64)> {
        let n = self.starts.len();
        (0..n)
            .map(|j| {
                let end = if j + 1 < n { self.starts[j + 1] } else { self.starts[0] + TAU };
                (self.starts[j], end, self.values[j])
            })
            .collect()
    }
}

fn check_lattice(thetas: &[f64]) -> Result<()> {
    if thetas.is_empty() {
        return Err(Error::Argument("angle lattice is empty".into()));
    }
    if thetas.iter().any(|t| !(0.0..TAU).contains(t)) {
        return Err(Error::Argument("angle lattice must lie in [0, 2π)".into()));
    }
    if thetas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument("angle lattice must be strictly increasing".into()));
    }
    Ok(())
}

fn cell_of(starts: &[f64], theta: f64) -> usize {
    let k = starts.partition_point(|&s| s <= theta);
    if k == 0 {
        starts.len() - 1
    } else {
        k - 1
    }
}

#[derive(Debug, Clone)]
struct TableRow {
    r: Vec<f64>,
    p: Vec<f64>,
    dp: Vec<f64>,
    /// `I(r) = ∫₀^r b/a`, so that `p′ = e^{−2I}`.
    i: Vec<f64>,
    di: Vec<f64>,
    /// `1/σ̃²` at the nodes `p[k]`.
    inv_var: Vec<f64>,
}

#[derive(Debug, Clone)]
enum ScaleRow {
    Table(TableRow),
    /// `p(r) = r^κ`.
    Power { kappa: f64 },
}

fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> (f64, f64) {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let (t2, t3) = (t * t, t * t * t);
    let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * d1;
    let dv = ((6.0 * t2 - 6.0 * t) * y0 + (-6.0 * t2 + 6.0 * t) * y1) / h
        + (3.0 * t2 - 4.0 * t + 1.0) * d0
        + (3.0 * t2 - 2.0 * t) * d1;
    (v, dv)
}

impl TableRow {
    fn build(b: impl Fn(f64) -> f64, a: impl Fn(f64) -> f64, sigma: impl Fn(f64) -> f64, r: &[f64]) -> Result<Self> {
        for &x in r {
            let av = a(x);
            if !(av >= A_MIN) || !av.is_finite() || !b(x).is_finite() {
                return Err(Error::Domain(format!("a = {av} below threshold {A_MIN} at r = {x}")));
            }
        }
        let ratio = |x: f64| b(x) / a(x);
        let n = r.len();
        let mut p = vec![0.0; n];
        let mut i = vec![0.0; n];
        for k in 0..n - 1 {
            let (r0, r1, i0) = (r[k], r[k + 1], i[k]);
            let outer = |xi: f64| (-2.0 * (i0 + integrate(&ratio, r0, xi, SCALE_TOL))).exp();
            p[k + 1] = p[k] + integrate(&outer, r0, r1, SCALE_TOL);
            i[k + 1] = i0 + integrate(&ratio, r0, r1, SCALE_TOL);
            if !(p[k + 1] > p[k]) || !p[k + 1].is_finite() {
                return Err(Error::Domain(format!("scale function is not strictly increasing near r = {r1}")));
            }
        }
        let dp: Vec<f64> = i.iter().map(|v| (-2.0 * v).exp()).collect();
        let di = r.iter().map(|&x| ratio(x)).collect();
        let inv_var = r
            .iter()
            .zip(&dp)
            .map(|(&x, d)| {
                let s = d * sigma(x);
                1.0 / (s * s)
            })
            .collect();
        Ok(Self { r: r.to_vec(), p, dp, i, di, inv_var })
    }

    fn last(&self) -> usize {
        self.r.len() - 1
    }

    fn p(&self, x: f64) -> f64 {
        let n = self.last();
        if x >= self.r[n] {
            return self.p[n] + self.dp[n] * (x - self.r[n]);
        }
        let k = self.r.partition_point(|&v| v <= x) - 1;
        hermite(self.r[k], self.r[k + 1], self.p[k], self.p[k + 1], self.dp[k], self.dp[k + 1], x).0
    }

    fn dp(&self, x: f64) -> f64 {
        let n = self.last();
        if x >= self.r[n] {
            return self.dp[n];
        }
        let k = self.r.partition_point(|&v| v <= x) - 1;
        let i = hermite(self.r[k], self.r[k + 1], self.i[k], self.i[k + 1], self.di[k], self.di[k + 1], x).0;
        (-2.0 * i).exp()
    }

    fn q(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let n = self.last();
        if y >= self.p[n] {
            return self.r[n] + (y - self.p[n]) / self.dp[n];
        }
        let k = self.p.partition_point(|&v| v <= y) - 1;
        if self.p[k] == y {
            return self.r[k];
        }
        let (mut lo, mut hi) = (self.r[k], self.r[k + 1]);
        let f = |x: f64| hermite(self.r[k], self.r[k + 1], self.p[k], self.p[k + 1], self.dp[k], self.dp[k + 1], x);
        let mut x = lo + (hi - lo) * (y - self.p[k]) / (self.p[k + 1] - self.p[k]);
        for _ in 0..100 {
            let (v, dv) = f(x);
            let e = v - y;
            if e.abs() <= 1e-13 * y.max(1.0) {
                break;
            }
            if e > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let newton = x - e / dv;
            x = if dv > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        x
    }

    fn inv_var(&self, y: f64) -> f64 {
        let n = self.last();
        if y >= self.p[n] {
            return self.inv_var[n];
        }
        let k = self.p.partition_point(|&v| v <= y).max(1) - 1;
        let w = (y - self.p[k]) / (self.p[k + 1] - self.p[k]);
        self.inv_var[k] + w * (self.inv_var[k + 1] - self.inv_var[k])
    }
}

/// Per-ray scale function `p_θ`, its inverse `q_θ` and the auxiliary dispersion
/// `σ̃_θ(y) = p′_θ(q_θ(y)) σ_θ(q_θ(y))`.
///
/// Angles are resolved by lattice cell: every `θ` in `[θ_j, θ_{j+1})` uses the
/// row tabulated at `θ_j`. Beyond the radial lattice `p` continues linearly.
#[derive(Debug, Clone)]
pub struct ScaleTransform {
    thetas: Vec<f64>,
    rows: Vec<ScaleRow>,
    coeffs: AngularCoefficients,
}

/// Tabulates the scale transform of `coeffs` on `theta_lattice × r_lattice`.
///
/// `r_lattice` must start at 0 and increase strictly. The Bessel family uses
/// its closed form `p_θ(r) = r^{(2−δ(θ))/2}` and ignores the radial lattice.
pub fn scale_transform(
    coeffs: &AngularCoefficients,
    theta_lattice: &[f64],
    r_lattice: &[f64],
) -> Result<ScaleTransform> {
    check_lattice(theta_lattice)?;
    if let Some(delta) = &coeffs.bessel {
        let rows = theta_lattice
            .iter()
            .map(|&t| {
                let d = delta(t);
                check_bessel_delta(d)?;
                Ok(ScaleRow::Power { kappa: (2.0 - d) / 2.0 })
            })
            .collect::<Result<_>>()?;
        return Ok(ScaleTransform { thetas: theta_lattice.to_vec(), rows, coeffs: coeffs.clone() });
    }
    if r_lattice.len() < 2 || r_lattice[0] != 0.0 || r_lattice.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument("radial lattice must start at 0 and increase strictly".into()));
    }
    let rows = theta_lattice
        .iter()
        .map(|&t| {
            TableRow::build(|r| coeffs.b(r, t), |r| coeffs.a(r, t), |r| coeffs.sigma(r, t), r_lattice)
                .map(ScaleRow::Table)
        })
        .collect::<Result<_>>()?;
    Ok(ScaleTransform { thetas: theta_lattice.to_vec(), rows, coeffs: coeffs.clone() })
}

/// Uniform radial lattice `0, h, …, r_max`.
pub fn uniform_lattice(r_max: f64, n_cells: usize) -> Vec<f64> {
    (0..=n_cells).map(|k| r_max * k as f64 / n_cells as f64).collect()
}

impl ScaleTransform {
    pub fn theta_lattice(&self) -> &[f64] {
        &self.thetas
    }

    fn row(&self, theta: f64) -> (&ScaleRow, f64) {
        let j = if theta.is_nan() { 0 } else { cell_of(&self.thetas, theta) };
        (&self.rows[j], self.thetas[j])
    }

    pub fn p(&self, r: f64, theta: f64) -> f64 {
        match self.row(theta).0 {
            ScaleRow::Table(t) => t.p(r.max(0.0)),
            ScaleRow::Power { kappa } => r.max(0.0).powf(*kappa),
        }
    }

    /// `p′_θ(r)`; the right derivative at 0.
    pub fn dp(&self, r: f64, theta: f64) -> f64 {
        match self.row(theta).0 {
            ScaleRow::Table(t) => t.dp(r.max(0.0)),
            ScaleRow::Power { kappa } => kappa * r.max(0.0).powf(kappa - 1.0),
        }
    }

    pub fn q(&self, y: f64, theta: f64) -> f64 {
        match self.row(theta).0 {
            ScaleRow::Table(t) => t.q(y),
            ScaleRow::Power { kappa } => y.max(0.0).powf(1.0 / kappa),
        }
    }

    pub fn sigma_tilde(&self, y: f64, theta: f64) -> f64 {
        let (_, t) = self.row(theta);
        let r = self.q(y, theta);
        self.dp(r, theta) * self.coeffs.sigma(r, t)
    }

    /// `1/σ̃²(y)`, the clock rate; interpolated linearly between lattice nodes.
    pub fn clock_rate(&self, y: f64, theta: f64) -> f64 {
        match self.row(theta).0 {
            ScaleRow::Table(t) => t.inv_var(y.max(0.0)),
            ScaleRow::Power { kappa } => {
                // σ̃(y) = 2κ y^{(κ−½)/κ}
                let e = 2.0 * (0.5 - kappa) / kappa;
                y.max(0.0).powf(e) / (4.0 * kappa * kappa)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Stochastic clock and time change

/// The clock `𝒬(t) = ∫₀^t σ̃⁻²(X) ds` on the source grid and its inverse `𝒯`
/// sampled on the target grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ClockPair {
    pub q: SamplePath,
    pub t_inv: SamplePath,
}

/// A time-changed path and its clock.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChanged {
    pub path: WalshPath,
    pub clock: ClockPair,
}

#[derive(Debug, Clone, Copy)]
struct SourcePoint {
    r: f64,
    theta: f64,
    id: u32,
    l: f64,
}

impl SourcePoint {
    fn lerp(a: SourcePoint, b: SourcePoint, w: f64) -> SourcePoint {
        let r = a.r + w * (b.r - a.r);
        let l = a.l + w * (b.l - a.l);
        if r <= 0.0 {
            return SourcePoint { r: 0.0, theta: f64::NAN, id: NO_EXCURSION, l };
        }
        let ray = if a.r > 0.0 { a } else { b };
        SourcePoint { r, theta: ray.theta, id: ray.id, l }
    }
}

/// Accumulates the clock along a source path and emits the target samples as
/// soon as the clock passes them.
struct Resampler<'a> {
    st: &'a ScaleTransform,
    target: TimeGrid,
    dt: f64,
    k: usize,
    clock: f64,
    carry: f64,
    prev: SourcePoint,
    last_ray: f64,
    next: usize,
    clock_path: Option<Vec<f64>>,
    radial: Vec<f64>,
    angle: Vec<f64>,
    ids: Vec<u32>,
    lt: Vec<f64>,
    t_inv: Vec<f64>,
}

impl<'a> Resampler<'a> {
    fn new(st: &'a ScaleTransform, target: TimeGrid, dt: f64, first: SourcePoint, record: bool) -> Self {
        let n = target.len();
        let mut rs = Self {
            st,
            target,
            dt,
            k: 0,
            clock: 0.0,
            carry: 0.0,
            prev: first,
            last_ray: if first.r > 0.0 { first.theta } else { st.thetas[0] },
            next: 0,
            clock_path: record.then(|| vec![0.0]),
            radial: Vec::with_capacity(n),
            angle: Vec::with_capacity(n),
            ids: Vec::with_capacity(n),
            lt: Vec::with_capacity(n),
            t_inv: Vec::with_capacity(n),
        };
        rs.emit(first, 0.0);
        rs
    }

    fn done(&self) -> bool {
        self.next == self.target.len()
    }

    fn emit(&mut self, x: SourcePoint, t: f64) {
        let theta = if x.r > 0.0 { x.theta } else { f64::NAN };
        self.radial.push(if x.r > 0.0 { self.st.q(x.r, theta) } else { 0.0 });
        self.angle.push(theta);
        self.ids.push(x.id);
        self.lt.push(x.l);
        self.t_inv.push(t);
        self.next += 1;
    }

    fn push(&mut self, x: SourcePoint) {
        let a = self.prev;
        if a.r > 0.0 {
            self.last_ray = a.theta;
        } else if x.r > 0.0 {
            self.last_ray = x.theta;
        }
        // compensated summation keeps the clock exact enough to hit t_end on matched grids
        let inc = self.dt * self.st.clock_rate(a.r, self.last_ray);
        let y = inc - self.carry;
        let q1 = self.clock + y;
        self.carry = (q1 - self.clock) - y;
        let t0 = self.k as f64 * self.dt;
        while !self.done() {
            let s = self.target.time(self.next);
            if s > q1 + 4.0 * f64::EPSILON * q1 {
                break;
            }
            let w = if q1 > self.clock { ((s - self.clock) / (q1 - self.clock)).clamp(0.0, 1.0) } else { 1.0 };
            self.emit(SourcePoint::lerp(a, x, w), t0 + w * self.dt);
        }
        self.clock = q1;
        self.k += 1;
        self.prev = x;
        if let Some(c) = &mut self.clock_path {
            c.push(q1);
        }
    }

    fn path(self) -> (WalshPath, Vec<f64>, Option<Vec<f64>>) {
        (
            WalshPath {
                grid: self.target,
                radial: self.radial,
                angle: self.angle,
                excursion_id: self.ids,
                localtime: self.lt,
            },
            self.t_inv,
            self.clock_path,
        )
    }

    fn underrun(&self) -> Error {
        let required = self.target.t_end;
        Error::ClockUnderrun {
            reached: self.clock,
            required,
            factor: if self.clock > 0.0 { required / self.clock } else { f64::INFINITY },
        }
    }
}

/// Time change of a Walsh Brownian motion `x` in natural scale:
/// `‖Y‖ = q_Θ(‖X(𝒯)‖)`, `arg Y = arg X(𝒯)`, with `X(𝒯)` interpolated linearly.
/// Local time is carried over as `L^X(𝒯)`.
pub fn time_change_walsh(x: &WalshPath, st: &ScaleTransform, target: TimeGrid) -> Result<TimeChanged> {
    let pt = |k: usize| SourcePoint { r: x.radial[k], theta: x.angle[k], id: x.excursion_id[k], l: x.localtime[k] };
    let mut rs = Resampler::new(st, target, x.grid.dt(), pt(0), true);
    // the clock is recorded over the whole source, past the last target
    for k in 1..x.len() {
        rs.push(pt(k));
    }
    if !rs.done() {
        return Err(rs.underrun());
    }
    let (path, t_inv, q) = rs.path();
    Ok(TimeChanged {
        path,
        clock: ClockPair {
            q: SamplePath { grid: x.grid, values: q.expect("recorded"), kind: PathKind::Clock },
            t_inv: SamplePath { grid: target, values: t_inv, kind: PathKind::Clock },
        },
    })
}

/// Doublings of the source horizon tried before giving up with `ClockUnderrun`.
pub const MAX_DOUBLINGS: u32 = 16;

/// Simulates the source Walsh Brownian motion step by step and time-changes it
/// onto `target`, starting `Y` at `y0`.
///
/// The source horizon starts at `1.2·T·σ̃²` at the two natural endpoints (the
/// origin and `p(‖y0‖)`) and is continued by doubling while the clock lags.
pub fn simulate_time_changed<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    st: &ScaleTransform,
    mu: &SpinningMeasure,
    y0: PolarPoint,
    target: TimeGrid,
    source_dt: f64,
    driver_rng: &mut R1,
    angle_rng: &mut R2,
) -> Result<WalshPath> {
    if !(source_dt > 0.0 && source_dt.is_finite()) {
        return Err(Error::Argument(format!("source step {source_dt} must be positive")));
    }
    let ray = initial_ray(y0)?;
    let theta0 = ray.unwrap_or(f64::NAN);
    let x0 = if y0.r > 0.0 { st.p(y0.r, theta0) } else { 0.0 };
    let slowest = st
        .thetas
        .iter()
        .map(|&t| st.clock_rate(0.0, t))
        .chain([st.clock_rate(x0, if ray.is_some() { theta0 } else { st.thetas[0] })])
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let horizon = if slowest.is_finite() { 1.2 * target.t_end / slowest } else { 1.2 * target.t_end };
    let mut budget = (horizon / source_dt).ceil().max(1.0) as usize;
    let mut doublings = 0;

    let mut stepper = ReflectedStepper::new(x0, source_dt);
    let mut unf = Unfolder::start(mu, x0, ray)?;
    let st0 = unf.state();
    let first = SourcePoint { r: x0, theta: st0.angle, id: st0.id, l: 0.0 };
    let mut rs = Resampler::new(st, target, source_dt, first, false);
    let mut steps = 0usize;
    while !rs.done() {
        if steps == budget {
            if doublings == MAX_DOUBLINGS {
                return Err(rs.underrun());
            }
            doublings += 1;
            budget *= 2;
        }
        stepper.step(0.0, 1.0, gaussian(driver_rng));
        let s = unf.push(stepper.s, angle_rng);
        rs.push(SourcePoint { r: stepper.s, theta: s.angle, id: s.id, l: stepper.lambda() });
        steps += 1;
    }
    Ok(rs.path().0)
}

/// Direct scheme for angular coefficients: while the path sits on a ray its
/// radius is an Euler step of `dR = b(R, θ)dt + σ(R, θ)dW`, folded at the
/// origin, and a fresh ray is drawn at each departure. Returns the terminal
/// point. Serves as a reference for the time-change construction.
pub fn per_ray_euler_terminal<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    coeffs: &AngularCoefficients,
    mu: &SpinningMeasure,
    x0: PolarPoint,
    grid: TimeGrid,
    driver_rng: &mut R1,
    angle_rng: &mut R2,
) -> Result<PolarPoint> {
    let ray = initial_ray(x0)?;
    let mut stepper = ReflectedStepper::new(x0.r, grid.dt());
    let mut unf = Unfolder::start(mu, x0.r, ray)?;
    // at the origin the coefficients are read on the ray about to be entered,
    // which is unknown; the last ray stands in for it
    let mut ray_now = ray.unwrap_or(0.0);
    for k in 0..grid.n_steps {
        let x = stepper.s;
        stepper.step(coeffs.b(x, ray_now), coeffs.sigma(x, ray_now), gaussian(driver_rng));
        if !stepper.u.is_finite() {
            return Err(Error::NumericalBlowup { step: k + 1, value: stepper.u });
        }
        let st = unf.push(stepper.s, angle_rng);
        if !st.angle.is_nan() {
            ray_now = st.angle;
        }
    }
    Ok(PolarPoint::new(stepper.s, unf.state().angle))
}

// ---------------------------------------------------------------------------
// Spinning-measure recovery

/// Empirical distribution of exit angles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMeasure {
    /// Distinct angles with their counts, sorted by angle.
    pub atoms: Vec<(f64, u64)>,
    pub count: u64,
}

impl EmpiricalMeasure {
    pub fn from_angles(mut angles: Vec<f64>) -> Self {
        angles.sort_by(f64::total_cmp);
        let mut atoms: Vec<(f64, u64)> = Vec::new();
        for a in angles {
            match atoms.last_mut() {
                Some((t, c)) if *t == a => *c += 1,
                _ => atoms.push((a, 1)),
            }
        }
        let count = atoms.iter().map(|a| a.1).sum();
        Self { atoms, count }
    }

    pub fn merge(&self, other: &EmpiricalMeasure) -> Self {
        let mut v: Vec<f64> = Vec::with_capacity((self.count + other.count) as usize);
        for (t, c) in self.atoms.iter().chain(&other.atoms) {
            v.extend(std::iter::repeat_n(*t, *c as usize));
        }
        Self::from_angles(v)
    }

    /// Relative frequency of exactly `theta`.
    pub fn frequency(&self, theta: f64) -> f64 {
        self.atoms.iter().find(|a| a.0 == theta).map_or(0.0, |a| a.1 as f64 / self.count as f64)
    }

    /// Mass in the half-open arc `[a, b)`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        let c: u64 = self.atoms.iter().filter(|x| x.0 >= a && x.0 < b).map(|x| x.1).sum();
        c as f64 / self.count as f64
    }

    /// Total-variation distance to an atomic measure.
    pub fn tv_to(&self, mu: &SpinningMeasure) -> Result<f64> {
        if !mu.is_atomic() {
            return Err(Error::Argument(
                "total variation to a measure with a density part is always 1".into(),
            ));
        }
        let mut d = 0.0;
        let mut matched = 0.0;
        for &(t, w) in mu.atoms() {
            let f = self.frequency(t);
            matched += f;
            d += (f - w).abs();
        }
        Ok(0.5 * (d + (1.0 - matched).max(0.0)))
    }
}

/// Angles `arg X(τ_{2ℓ+1})` at the first exits to level `ε` after each visit
/// to the origin, over the whole path.
pub fn estimate_spinning_measure(w: &WalshPath, eps: f64) -> Result<EmpiricalMeasure> {
    estimate_spinning_measure_window(w, eps, 0, w.len())
}

/// Same as [`estimate_spinning_measure`] restricted to grid indices `start..end`.
pub fn estimate_spinning_measure_window(
    w: &WalshPath,
    eps: f64,
    start: usize,
    end: usize,
) -> Result<EmpiricalMeasure> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Argument(format!("epsilon must be positive, got {eps}")));
    }
    if start >= end || end > w.len() {
        return Err(Error::Argument(format!("bad window {start}..{end} for a path of {} points", w.len())));
    }
    let c = crossings(&w.radial[start..end], eps);
    if c.exits.is_empty() {
        return Err(Error::InsufficientData(format!("no exit to level {eps} after a visit to the origin")));
    }
    Ok(EmpiricalMeasure::from_angles(c.exits.iter().map(|&k| w.angle[start + k]).collect()))
}

// ---------------------------------------------------------------------------
// Mixed-measure construction

/// A Walsh Brownian motion that switches spinning measure at the first grid
/// time it comes close to a given point.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedPath {
    pub path: WalshPath,
    /// Grid index of the switch.
    pub switch_index: usize,
}

/// Runs a Walsh Brownian motion with `mu1` from the origin until it is within
/// tree distance `tol` of `switch_point`, then continues from there with `mu2`
/// and a fresh driver stream. Angle draws continue on the path's angle stream.
pub fn mixed_measure_experiment(
    mu1: &SpinningMeasure,
    mu2: &SpinningMeasure,
    switch_point: PolarPoint,
    tol: f64,
    grid: TimeGrid,
    factory: &StreamFactory,
    path_index: u64,
) -> Result<MixedPath> {
    if !(switch_point.r > 0.0 && switch_point.r.is_finite() && switch_point.theta.is_finite()) {
        return Err(Error::Argument("switch point must be off the origin".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("switch tolerance {tol} must be positive")));
    }
    let target = PolarPoint::new(switch_point.r, wrap_angle(switch_point.theta));
    let (mut drng, mut arng) = factory.path_streams(path_index);
    let n = grid.len();
    let mut radial = Vec::with_capacity(n);
    let mut angle = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    let mut lt = Vec::with_capacity(n);
    radial.push(0.0);
    angle.push(f64::NAN);
    ids.push(NO_EXCURSION);
    lt.push(0.0);

    let mut stepper = ReflectedStepper::new(0.0, grid.dt());
    let mut unf = Unfolder::start(mu1, 0.0, None)?;
    let mut closest = tree_distance(PolarPoint::origin(), target);
    let mut reached = false;
    let done = drive(|_| 0.0, |_| 1.0, &mut stepper, &mut unf, grid.n_steps, 0, &mut drng, &mut arng, &mut |s, st| {
        radial.push(s.s);
        angle.push(st.angle);
        ids.push(st.id);
        lt.push(s.lambda());
        let d = tree_distance(PolarPoint::new(s.s, st.angle), target);
        closest = closest.min(d);
        if d <= tol {
            reached = true;
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    if !reached {
        return Err(Error::SwitchNotReached { closest });
    }
    let switch_index = done;
    let state = unf.state();
    let l0 = stepper.lambda();
    let mut restart = factory.stream(path_index, Purpose::Restart);
    let mut stepper = ReflectedStepper::new(stepper.s, grid.dt());
    let mut unf = Unfolder::resume(mu2, state);
    drive(
        |_| 0.0,
        |_| 1.0,
        &mut stepper,
        &mut unf,
        grid.n_steps - done,
        done,
        &mut restart,
        &mut arng,
        &mut |s, st| {
            radial.push(s.s);
            angle.push(st.angle);
            ids.push(st.id);
            lt.push(l0 + s.lambda());
            ControlFlow::Continue(())
        },
    )?;
    Ok(MixedPath {
        path: WalshPath { grid, radial, angle, excursion_id: ids, localtime: lt },
        switch_index,
    })
}

// ---------------------------------------------------------------------------
// Polar drift

/// Radial lattice used for the angular polar-drift transform.
const POLAR_R_MAX: f64 = 12.0;
const POLAR_R_CELLS: usize = 2400;

/// Outcome of the polar-drift experiment at the terminal time.
#[derive(Debug, Clone, Serialize)]
pub struct PolarDriftResult {
    pub n_paths: usize,
    pub t_end: f64,
    pub mean_radius: f64,
    pub stderr_radius: f64,
    /// Mean of the stationary radial law.
    pub stationary_mean: f64,
    pub radial_histogram: Histogram,
    pub radial_test: TestResult,
    /// Angular cells `[lo, hi)` used for the angular test (single atoms for atomic ν).
    pub angular_cells: Vec<(f64, f64)>,
    pub angular_counts: Vec<u64>,
    pub angular_probs: Vec<f64>,
    pub angular_test: TestResult,
    #[serde(skip)]
    pub terminal: Vec<PolarPoint>,
}

/// Stationary law with density `C e^{−2λ(θ)r}/λ(θ) dr ν(dθ)`: the ray of the
/// stationary point has law `∝ λ⁻² ν`, and given the ray the radius is `Exp(2λ)`.
struct StationaryLaw {
    /// Weight and rate per angular piece.
    pieces: Vec<(f64, f64)>,
}

impl StationaryLaw {
    fn new(lambda: &AngularStep, mu: &SpinningMeasure) -> Result<Self> {
        let mut pieces = Vec::new();
        for (a, b, l) in lambda.arcs() {
            let m = arc_mass(mu, a, b)?;
            if m > 0.0 {
                pieces.push((m / (l * l), l));
            }
        }
        let z: f64 = pieces.iter().map(|p| p.0).sum();
        for p in &mut pieces {
            p.0 /= z;
        }
        Ok(Self { pieces })
    }

    fn mean(&self) -> f64 {
        self.pieces.iter().map(|(w, l)| w / (2.0 * l)).sum()
    }

    fn tail(&self, r: f64) -> f64 {
        self.pieces.iter().map(|(w, l)| w * (-2.0 * l * r).exp()).sum()
    }
}

/// `ν([a, b))` for `a < b ≤ a + 2π`, wrapping past 2π.
fn arc_mass(mu: &SpinningMeasure, a: f64, b: f64) -> Result<f64> {
    if b <= TAU {
        mu.nu_mass(a, b)
    } else {
        Ok(mu.nu_mass(a, TAU)? + mu.nu_mass(0.0, b - TAU)?)
    }
}

/// Angular cells for the terminal-angle test: the atoms for atomic `ν`,
/// otherwise eight equal arcs refined by the drift cells.
fn angular_cells(lambda: &AngularStep, mu: &SpinningMeasure) -> Vec<(f64, f64)> {
    if mu.is_atomic() {
        return mu.atoms().iter().map(|&(t, _)| (t, t)).collect();
    }
    let mut edges: Vec<f64> = (0..8).map(|k| TAU * k as f64 / 8.0).chain(lambda.starts.iter().copied()).collect();
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let mut cells: Vec<(f64, f64)> = edges.windows(2).map(|w| (w[0], w[1])).collect();
    cells.push((*edges.last().unwrap(), TAU));
    cells
}

fn in_cell(theta: f64, cell: (f64, f64)) -> bool {
    if cell.0 == cell.1 {
        theta == cell.0
    } else {
        theta >= cell.0 && theta < cell.1
    }
}

/// Walsh Brownian motion with polar drift `b = −λ(θ)` from the origin, sampled at `T`.
///
/// Constant `λ` runs the fold/unfold scheme with step `dt`; angular `λ` runs
/// the time change with source step `dt`.
pub fn polar_drift_experiment(
    lambda: &AngularStep,
    mu: &SpinningMeasure,
    t_end: f64,
    n_paths: usize,
    dt: f64,
    factory: &StreamFactory,
    runner: &BatchRunner,
) -> Result<PolarDriftResult> {
    if lambda.values.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::Domain("polar drift rates must be positive".into()));
    }
    if n_paths == 0 {
        return Err(Error::Argument("need at least one path".into()));
    }
    let grid = TimeGrid::with_dt(t_end, dt)?;
    let terminal: Vec<PolarPoint> = if lambda.is_constant() {
        let coeffs = RadialCoefficients::constant(-lambda.values[0], 1.0)?;
        runner.try_map(n_paths, |i| {
            let (mut d, mut a) = factory.path_streams(i);
            walsh_diffusion_terminal(&coeffs, mu, PolarPoint::origin(), grid, &mut d, &mut a).map(|x| x.0)
        })?
    } else {
        let coeffs = AngularCoefficients::polar_drift(lambda)?;
        let st = scale_transform(&coeffs, &lambda.starts, &uniform_lattice(POLAR_R_MAX, POLAR_R_CELLS))?;
        let target = TimeGrid::new(t_end, 1)?;
        runner.try_map(n_paths, |i| {
            let (mut d, mut a) = factory.path_streams(i);
            let y = simulate_time_changed(&st, mu, PolarPoint::origin(), target, dt, &mut d, &mut a)?;
            Ok(y.last_point())
        })?
    };

    let law = StationaryLaw::new(lambda, mu)?;
    let radii: Vec<f64> = terminal.iter().map(|p| p.r).collect();
    let (mean_radius, stderr_radius) = mean_stderr(&radii);

    let lmin = lambda.values.iter().copied().fold(f64::INFINITY, f64::min);
    let r_hi = 4.0 / lmin;
    let bins = 40;
    let radial_histogram = Histogram::new(&radii, 0.0, r_hi, bins);
    let mut counts = radial_histogram.counts.clone();
    counts.push(radii.iter().filter(|&&r| r >= r_hi).count() as u64);
    let mut probs: Vec<f64> =
        radial_histogram.edges.windows(2).map(|w| law.tail(w[0]) - law.tail(w[1])).collect();
    probs.push(law.tail(r_hi));
    let radial_test = chi_square_gof(&counts, &probs)?;

    let cells = angular_cells(lambda, mu);
    let mut angular_counts = vec![0u64; cells.len()];
    for p in terminal.iter().filter(|p| p.r > 0.0) {
        if let Some(j) = cells.iter().position(|&c| in_cell(p.theta, c)) {
            angular_counts[j] += 1;
        }
    }
    let weight = |a: f64, b: f64| -> Result<f64> {
        if a == b {
            let w = mu.atoms().iter().find(|x| x.0 == a).map_or(0.0, |x| x.1);
            let l = lambda.eval(a);
            return Ok(w / (l * l));
        }
        let l = lambda.eval(a);
        Ok(mu.nu_mass(a, b)? / (l * l))
    };
    let raw: Vec<f64> = cells.iter().map(|&(a, b)| weight(a, b)).collect::<Result<_>>()?;
    let z: f64 = raw.iter().sum();
    let angular_probs: Vec<f64> = raw.iter().map(|w| w / z).collect();
    let angular_test = chi_square_gof(&angular_counts, &angular_probs)?;

    Ok(PolarDriftResult {
        n_paths,
        t_end,
        mean_radius,
        stderr_radius,
        stationary_mean: law.mean(),
        radial_histogram,
        radial_test,
        angular_cells: cells,
        angular_counts,
        angular_probs,
        angular_test,
        terminal,
    })
}

// ---------------------------------------------------------------------------
// Bessel driver

/// Squared Bessel process `dZ = δ dt + 2√Z dW` by Euler with negative values
/// floored at 0, returned as `S = √Z` and unfolded with `mu`. Local time is
/// recorded as zero.
pub fn simulate_bessel_walsh<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    delta: f64,
    mu: &SpinningMeasure,
    x0: PolarPoint,
    grid: TimeGrid,
    driver_rng: &mut R1,
    angle_rng: &mut R2,
) -> Result<WalshPath> {
    check_bessel_delta(delta)?;
    let ray = initial_ray(x0)?;
    let (dt, sq) = (grid.dt(), grid.dt().sqrt());
    let mut unf = Unfolder::start(mu, x0.r, ray)?;
    let n = grid.len();
    let mut radial = Vec::with_capacity(n);
    let mut angle = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    let mut z = x0.r * x0.r;
    let st = unf.state();
    radial.push(x0.r);
    angle.push(st.angle);
    ids.push(st.id);
    for _ in 0..grid.n_steps {
        z = (z + delta * dt + 2.0 * z.sqrt() * sq * gaussian(driver_rng)).max(0.0);
        let s = z.sqrt();
        let st = unf.push(s, angle_rng);
        radial.push(s);
        angle.push(st.angle);
        ids.push(st.id);
    }
    Ok(WalshPath { grid, radial, angle, excursion_id: ids, localtime: vec![0.0; n] })
}

/// `ε·N(T, ε)` for every ε, per path, averaged over the batch.
#[derive(Debug, Clone, Serialize)]
pub struct BesselReport {
    pub n_paths: usize,
    pub epsilons: Vec<f64>,
    pub means: Vec<f64>,
    pub stderrs: Vec<f64>,
}

impl BesselReport {
    /// Whether the estimates decrease strictly as ε decreases.
    pub fn decreasing_in_epsilon(&self) -> bool {
        let mut v: Vec<(f64, f64)> = self.epsilons.iter().copied().zip(self.means.iter().copied()).collect();
        v.sort_by(|a, b| b.0.total_cmp(&a.0));
        v.windows(2).all(|w| w[1].1 < w[0].1)
    }
}

/// Downcrossing local time of Bessel-driven Walsh paths from the origin.
///
/// Constant `δ` simulates the squared Bessel process directly with step
/// `grid.dt()`; angular `δ` time-changes a Walsh Brownian motion through the
/// scale function `r^{(2−δ(θ))/2}` of `a = 4r`, `b = δ(θ)`. In both cases the
/// estimate is taken on the Bessel radius `√Z`.
pub fn bessel_driver_experiment(
    delta: &AngularStep,
    mu: &SpinningMeasure,
    grid: TimeGrid,
    n_paths: usize,
    epsilons: &[f64],
    factory: &StreamFactory,
    runner: &BatchRunner,
) -> Result<BesselReport> {
    for &d in &delta.values {
        check_bessel_delta(d)?;
    }
    if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Argument("need positive epsilons".into()));
    }
    if n_paths == 0 {
        return Err(Error::Argument("need at least one path".into()));
    }
    let st = if delta.is_constant() {
        None
    } else {
        Some(scale_transform(&AngularCoefficients::bessel(delta)?, &delta.starts, &[])?)
    };
    let per_path: Vec<Vec<f64>> = runner.try_map(n_paths, |i| {
        let (mut d, mut a) = factory.path_streams(i);
        let radius: Vec<f64> = match &st {
            None => simulate_bessel_walsh(delta.values[0], mu, PolarPoint::origin(), grid, &mut d, &mut a)?.radial,
            Some(st) => simulate_time_changed(st, mu, PolarPoint::origin(), grid, grid.dt(), &mut d, &mut a)?
                .radial
                .iter()
                .map(|z| z.sqrt())
                .collect(),
        };
        Ok(epsilons.iter().map(|&e| e * crossings(&radius, e).returns.len() as f64).collect())
    })?;
    let mut means = Vec::new();
    let mut stderrs = Vec::new();
    for j in 0..epsilons.len() {
        let col: Vec<f64> = per_path.iter().map(|v| v[j]).collect();
        let (m, s) = mean_stderr(&col);
        means.push(m);
        stderrs.push(s);
    }
    Ok(BesselReport { n_paths, epsilons: epsilons.to_vec(), means, stderrs })
}
