//! Scalar drivers on a uniform grid, the Skorokhod fold, and reflected
//! Itô diffusions.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniform grid `t_k = k·dt`, `k = 0..=n_steps`, on `[0, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::Argument(format!("t_end must be positive, got {t_end}")));
        }
        if n_steps == 0 {
            return Err(Error::Argument("n_steps must be positive".into()));
        }
        Ok(Self { t_end, n_steps })
    }

    /// Grid with step `dt` up to `t_end` (rounded to the nearest whole number of steps).
    pub fn with_dt(t_end: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Argument(format!("dt must be positive, got {dt}")));
        }
        Self::new(t_end, ((t_end / dt).round() as usize).max(1))
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_end
        } else {
            k as f64 * self.dt()
        }
    }

    /// Same step size, `extra` more steps.
    pub fn extended(&self, extra: usize) -> Self {
        Self { t_end: self.dt() * (self.n_steps + extra) as f64, n_steps: self.n_steps + extra }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    Driver,
    Folded,
    Regulator,
    LocalTime,
    Clock,
}

/// A scalar process sampled on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub kind: PathKind,
}

impl SamplePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>, kind: PathKind) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Argument(format!(
                "path has {} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values, kind })
    }

    /// Path `f(t_k)` on the grid.
    pub fn from_fn(grid: TimeGrid, kind: PathKind, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.time(k))).collect();
        Self { grid, values, kind }
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("paths are nonempty")
    }

    pub(crate) fn same_grid(&self, other: &SamplePath) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Argument(format!(
                "grid mismatch: {:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Drift and dispersion of a scalar Itô equation as functions of the state.
#[derive(Clone)]
pub enum ScalarCoefficients {
    Constant { b: f64, sigma: f64 },
    General { b: ScalarFn, sigma: ScalarFn },
}

impl fmt::Debug for ScalarCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant { b, sigma } => write!(f, "Constant {{ b: {b}, sigma: {sigma} }}"),
            Self::General { .. } => write!(f, "General {{ .. }}"),
        }
    }
}

impl ScalarCoefficients {
    pub fn general(
        b: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sigma: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::General { b: Arc::new(b), sigma: Arc::new(sigma) }
    }

    pub fn b(&self, x: f64) -> f64 {
        match self {
            Self::Constant { b, .. } => *b,
            Self::General { b, .. } => b(x),
        }
    }

    pub fn sigma(&self, x: f64) -> f64 {
        match self {
            Self::Constant { sigma, .. } => *sigma,
            Self::General { sigma, .. } => sigma(x),
        }
    }
}

/// Probe lattice for coefficient validation: `r = 0, 0.01, …, 10`.
fn probe_lattice() -> impl Iterator<Item = f64> {
    (0..=1000).map(|k| k as f64 * 0.01)
}

/// Radial coefficients of a Walsh diffusion: dispersion never vanishes.
#[derive(Debug, Clone)]
pub struct RadialCoefficients(ScalarCoefficients);

impl RadialCoefficients {
    /// Validates `b`, `σ` finite and `σ ≠ 0` on the probe lattice `[0, 10]`.
    pub fn new(c: ScalarCoefficients) -> Result<Self> {
        for r in probe_lattice() {
            let (b, s) = (c.b(r), c.sigma(r));
            if !b.is_finite() || !s.is_finite() {
                return Err(Error::Argument(format!("coefficients not finite at r = {r}")));
            }
            if s == 0.0 {
                return Err(Error::Argument(format!("dispersion vanishes at r = {r}")));
            }
        }
        Ok(Self(c))
    }

    pub fn constant(b: f64, sigma: f64) -> Result<Self> {
        Self::new(ScalarCoefficients::Constant { b, sigma })
    }

    /// Driftless unit dispersion: the radial part of Walsh Brownian motion.
    pub fn brownian() -> Self {
        Self(ScalarCoefficients::Constant { b: 0.0, sigma: 1.0 })
    }

    pub fn general(
        b: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sigma: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::new(ScalarCoefficients::general(b, sigma))
    }

    pub fn b(&self, r: f64) -> f64 {
        self.0.b(r)
    }

    pub fn sigma(&self, r: f64) -> f64 {
        self.0.sigma(r)
    }

    pub fn a(&self, r: f64) -> f64 {
        let s = self.0.sigma(r);
        s * s
    }

    pub fn scalar(&self) -> &ScalarCoefficients {
        &self.0
    }
}

/// Driver `dU = b(U) dt + σ(U) dW`, `U(0) = u0`.
#[derive(Debug, Clone)]
pub struct DriverSpec {
    pub coeffs: ScalarCoefficients,
    pub u0: f64,
}

impl DriverSpec {
    pub fn brownian(u0: f64) -> Self {
        Self { coeffs: ScalarCoefficients::Constant { b: 0.0, sigma: 1.0 }, u0 }
    }
}

/// One standard normal draw.
#[inline]
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

/// Euler–Maruyama path of the driver.
pub fn simulate_driver<R: Rng + ?Sized>(
    spec: &DriverSpec,
    grid: TimeGrid,
    rng: &mut R,
) -> Result<SamplePath> {
    let values = match &spec.coeffs {
        ScalarCoefficients::Constant { b, sigma } => {
            euler(|_| *b, |_| *sigma, spec.u0, grid, rng)?
        }
        ScalarCoefficients::General { b, sigma } => {
            euler(|x| b(x), |x| sigma(x), spec.u0, grid, rng)?
        }
    };
    SamplePath::new(grid, values, PathKind::Driver)
}

fn euler<R: Rng + ?Sized>(
    b: impl Fn(f64) -> f64,
    sigma: impl Fn(f64) -> f64,
    u0: f64,
    grid: TimeGrid,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let dt = grid.dt();
    let sq = dt.sqrt();
    let mut v = Vec::with_capacity(grid.len());
    let mut u = u0;
    v.push(u);
    for k in 0..grid.n_steps {
        u += b(u) * dt + sigma(u) * sq * gaussian(rng);
        if !u.is_finite() {
            return Err(Error::NumericalBlowup { step: k + 1, value: u });
        }
        v.push(u);
    }
    Ok(v)
}

/// Streaming form of the discrete Skorokhod map.
///
/// Feeding driver values `U_0, U_1, …` yields `S_k = U_k + Λ_k` with
/// `Λ_k = max_{j≤k} (−U_j)⁺`. Where `Λ` increases, `Λ_k = −U_k` and the sum is exactly zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fold {
    lambda: f64,
}

impl Fold {
    /// Starts the fold at `u0`; returns the fold state and `S_0`.
    pub fn start(u0: f64) -> (Self, f64) {
        let lambda = (-u0).max(0.0);
        (Self { lambda }, u0 + lambda)
    }

    #[inline]
    pub fn push(&mut self, u: f64) -> f64 {
        if -u > self.lambda {
            self.lambda = -u;
        }
        u + self.lambda
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Skorokhod reflection `(S, Λ)` of a driver path.
pub fn skorokhod_fold(u: &SamplePath) -> (SamplePath, SamplePath) {
    let n = u.values.len();
    let mut s = Vec::with_capacity(n);
    let mut l = Vec::with_capacity(n);
    let (mut fold, s0) = Fold::start(u.values[0]);
    s.push(s0);
    l.push(fold.lambda());
    for &x in &u.values[1..] {
        s.push(fold.push(x));
        l.push(fold.lambda());
    }
    (
        SamplePath { grid: u.grid, values: s, kind: PathKind::Folded },
        SamplePath { grid: u.grid, values: l, kind: PathKind::Regulator },
    )
}

/// Reflected diffusion together with its unreflected increment process.
#[derive(Debug, Clone, PartialEq)]
pub struct Reflected {
    /// Increment process `U` (Euler increments accumulated without reflection).
    pub driver: SamplePath,
    /// Reflected path `S = U + Λ ≥ 0`.
    pub folded: SamplePath,
    /// Regulator `Λ`, the local time at zero of `S`.
    pub regulator: SamplePath,
}

/// Stepper for `dS = b(S) dt + σ(S) dW + dΛ`: Euler increments evaluated at the
/// reflected state, folded by the discrete Skorokhod map.
#[derive(Debug, Clone, Copy)]
pub struct ReflectedStepper {
    pub u: f64,
    pub s: f64,
    fold: Fold,
    dt: f64,
    sq: f64,
}

impl ReflectedStepper {
    pub fn new(r0: f64, dt: f64) -> Self {
        let (fold, s) = Fold::start(r0);
        Self { u: r0, s, fold, dt, sq: dt.sqrt() }
    }

    #[inline]
    pub fn step(&mut self, b: f64, sigma: f64, z: f64) {
        self.u += b * self.dt + sigma * self.sq * z;
        self.s = self.fold.push(self.u);
    }

    pub fn lambda(&self) -> f64 {
        self.fold.lambda()
    }
}

/// Simulates the reflected diffusion from `r0 ≥ 0`; the regulator is its local time at zero.
pub fn simulate_reflected_diffusion<R: Rng + ?Sized>(
    coeffs: &RadialCoefficients,
    r0: f64,
    grid: TimeGrid,
    rng: &mut R,
) -> Result<Reflected> {
    if !(r0 >= 0.0 && r0.is_finite()) {
        return Err(Error::Argument(format!("initial radius {r0} must be finite and nonnegative")));
    }
    match coeffs.scalar() {
        ScalarCoefficients::Constant { b, sigma } => reflect(|_| *b, |_| *sigma, r0, grid, rng),
        ScalarCoefficients::General { b, sigma } => reflect(|x| b(x), |x| sigma(x), r0, grid, rng),
    }
}

fn reflect<R: Rng + ?Sized>(
    b: impl Fn(f64) -> f64,
    sigma: impl Fn(f64) -> f64,
    r0: f64,
    grid: TimeGrid,
    rng: &mut R,
) -> Result<Reflected> {
    let n = grid.len();
    let (mut u, mut s, mut l) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut st = ReflectedStepper::new(r0, grid.dt());
    u.push(st.u);
    s.push(st.s);
    l.push(st.lambda());
    for k in 0..grid.n_steps {
        let x = st.s;
        st.step(b(x), sigma(x), gaussian(rng));
        if !st.u.is_finite() {
            return Err(Error::NumericalBlowup { step: k + 1, value: st.u });
        }
        u.push(st.u);
        s.push(st.s);
        l.push(st.lambda());
    }
    Ok(Reflected {
        driver: SamplePath { grid, values: u, kind: PathKind::Driver },
        folded: SamplePath { grid, values: s, kind: PathKind::Folded },
        regulator: SamplePath { grid, values: l, kind: PathKind::Regulator },
    })
}

/// Writes `t,U,S,Lambda` rows with a header.
pub fn write_fold_csv<W: Write>(
    out: &mut W,
    u: &SamplePath,
    s: &SamplePath,
    lambda: &SamplePath,
) -> io::Result<()> {
    writeln!(out, "t,U,S,Lambda")?;
    for k in 0..u.values.len() {
        writeln!(
            out,
            "{},{},{},{}",
            u.grid.time(k),
            u.values[k],
            s.values[k],
            lambda.values[k]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamFactory};

    fn grid4() -> TimeGrid {
        TimeGrid::new(3.0, 3).unwrap()
    }

    #[test]
    fn grid_basics() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert_eq!(g.dt(), 0.25);
        assert_eq!(g.len(), 5);
        assert_eq!(g.time(4), 1.0);
        assert!(TimeGrid::new(0.0, 4).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert_eq!(TimeGrid::with_dt(1.0, 1e-3).unwrap().n_steps, 1000);
    }

    #[test]
    fn deterministic_drivers() {
        let g = TimeGrid::new(1.0, 100).unwrap();
        let mut r = StreamFactory::new(1).stream(0, Purpose::Driver);
        let spec = DriverSpec { coeffs: ScalarCoefficients::Constant { b: 1.0, sigma: 0.0 }, u0: 0.0 };
        let u = simulate_driver(&spec, g, &mut r).unwrap();
        for (k, v) in u.values.iter().enumerate() {
            assert!((v - g.time(k)).abs() < 1e-12);
        }
        let spec = DriverSpec { coeffs: ScalarCoefficients::Constant { b: 0.0, sigma: 0.0 }, u0: 3.0 };
        let u = simulate_driver(&spec, g, &mut r).unwrap();
        assert!(u.values.iter().all(|&v| v == 3.0));
    }

    #[test]
    fn blowup_is_reported() {
        let g = TimeGrid::new(1.0, 2000).unwrap();
        let mut r = StreamFactory::new(1).stream(0, Purpose::Driver);
        let spec = DriverSpec { coeffs: ScalarCoefficients::general(|x| x * x, |_| 0.0), u0: 1e100 };
        assert!(matches!(simulate_driver(&spec, g, &mut r), Err(Error::NumericalBlowup { step: 2, .. })));
    }

    #[test]
    fn fold_examples() {
        let u = SamplePath::new(grid4(), vec![0.0, -1.0, 0.0, -2.0], PathKind::Driver).unwrap();
        let (s, l) = skorokhod_fold(&u);
        assert_eq!(l.values, vec![0.0, 1.0, 1.0, 2.0]);
        assert_eq!(s.values, vec![0.0, 0.0, 1.0, 0.0]);

        let g = TimeGrid::new(1.0, 10).unwrap();
        let up = SamplePath::from_fn(g, PathKind::Driver, |t| t);
        let (s, l) = skorokhod_fold(&up);
        assert!(l.values.iter().all(|&v| v == 0.0));
        assert_eq!(s.values, up.values);

        let down = SamplePath::from_fn(g, PathKind::Driver, |t| -t);
        let (s, l) = skorokhod_fold(&down);
        assert!(s.values.iter().all(|&v| v == 0.0));
        for k in 0..g.len() {
            assert_eq!(l.values[k], g.time(k));
        }
    }

    #[test]
    fn fold_from_negative_start() {
        let u = SamplePath::new(grid4(), vec![-2.0, -1.0, -3.0, 0.5], PathKind::Driver).unwrap();
        let (s, l) = skorokhod_fold(&u);
        assert_eq!(l.values, vec![2.0, 2.0, 3.0, 3.0]);
        assert_eq!(s.values, vec![0.0, 1.0, 0.0, 3.5]);
    }

    #[test]
    fn reflected_deterministic_examples() {
        let g = TimeGrid::new(1.0, 1000).unwrap();
        let mut r = StreamFactory::new(3).stream(0, Purpose::Driver);
        let down = RadialCoefficients::constant(-1.0, 1e-300).unwrap();
        let p = simulate_reflected_diffusion(&down, 0.0, g, &mut r).unwrap();
        assert!(p.folded.values.iter().all(|&v| v == 0.0));
        assert!((p.regulator.last() - 1.0).abs() < 1e-9);

        let up = RadialCoefficients::constant(1.0, 1e-300).unwrap();
        let p = simulate_reflected_diffusion(&up, 0.0, g, &mut r).unwrap();
        assert!((p.folded.last() - 1.0).abs() < 1e-9);
        assert_eq!(p.regulator.last(), 0.0);
    }

    #[test]
    fn radial_coefficients_reject_zero_dispersion() {
        assert!(RadialCoefficients::constant(0.0, 0.0).is_err());
        assert!(RadialCoefficients::general(|_| 0.0, |r| r - 1.0).is_err());
        assert!(RadialCoefficients::general(|r| 1.0 / (r - 2.0), |_| 1.0).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let u = SamplePath::from_fn(g, PathKind::Driver, |t| 0.0 - t);
        let (s, l) = skorokhod_fold(&u);
        let mut buf = Vec::new();
        write_fold_csv(&mut buf, &u, &s, &l).unwrap();
        let txt = String::from_utf8(buf).unwrap();
        assert_eq!(txt, "t,U,S,Lambda\n0,0,0,0\n0.5,-0.5,0,0.5\n1,-1,0,1\n");
    }
}
