//! Estimators of the right local time at the origin,
//! `L(T) = lim (1/2ε) ∫ 1{0 ≤ Ξ < ε} d⟨Ξ⟩`.

use serde::{Deserialize, Serialize};

use crate::drivers::{PathKind, SamplePath};
use crate::measures::{AngleSet, SpinningMeasure};
use crate::stats::mean_stderr;
use crate::unfolding::WalshPath;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LtMethod {
    Downcrossing,
    Occupation,
    Tanaka,
    Regulator,
}

/// A local-time path together with the method that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeEstimate {
    pub method: LtMethod,
    pub epsilon: Option<f64>,
    pub path: SamplePath,
    /// Unsmoothed series where the reported path is a running maximum (Tanaka).
    pub raw: Option<Vec<f64>>,
}

impl LocalTimeEstimate {
    pub fn terminal(&self) -> f64 {
        self.path.last()
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Argument(format!("epsilon must be positive, got {eps}")));
    }
    Ok(())
}

/// Grid indices of the level-ε crossing times of a nonnegative path.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Crossings {
    /// First visit to an exact zero.
    pub first_zero: Option<usize>,
    /// First index with value `≥ ε` after each zero visit.
    pub exits: Vec<usize>,
    /// First exact zero after each exit; one per completed downcrossing.
    pub returns: Vec<usize>,
}

/// Runs the recursion `τ₀` = first zero, `τ_{2ℓ+1}` = first index at or above ε,
/// `τ_{2ℓ+2}` = next exact zero.
pub fn crossings(values: &[f64], eps: f64) -> Crossings {
    let mut c = Crossings::default();
    let mut k = match values.iter().position(|&v| v == 0.0) {
        Some(k) => k,
        None => return c,
    };
    c.first_zero = Some(k);
    loop {
        match values[k..].iter().position(|&v| v >= eps) {
            Some(j) => {
                k += j;
                c.exits.push(k);
            }
            None => return c,
        }
        match values[k..].iter().position(|&v| v == 0.0) {
            Some(j) => {
                k += j;
                c.returns.push(k);
            }
            None => return c,
        }
    }
}

/// `ε · N(t, ε)` with `N` the number of completed downcrossings of `(0, ε)` up to `t`.
pub fn lt_downcrossing(s: &SamplePath, eps: f64) -> Result<LocalTimeEstimate> {
    check_eps(eps)?;
    let c = crossings(&s.values, eps);
    let mut values = vec![0.0; s.values.len()];
    let mut count = 0usize;
    let mut next = c.returns.iter().peekable();
    for (k, v) in values.iter_mut().enumerate() {
        while next.peek().is_some_and(|&&r| r == k) {
            next.next();
            count += 1;
        }
        *v = eps * count as f64;
    }
    Ok(LocalTimeEstimate {
        method: LtMethod::Downcrossing,
        epsilon: Some(eps),
        path: SamplePath { grid: s.grid, values, kind: PathKind::LocalTime },
        raw: None,
    })
}

/// `S(t) − S(0) − Σ 1{S > 0} ΔU`, reported as its running maximum.
pub fn lt_tanaka(s: &SamplePath, u: &SamplePath) -> Result<LocalTimeEstimate> {
    s.same_grid(u)?;
    let n = s.values.len();
    let mut raw = Vec::with_capacity(n);
    let mut integral = 0.0;
    raw.push(0.0);
    for k in 1..n {
        if s.values[k - 1] > 0.0 {
            integral += u.values[k] - u.values[k - 1];
        }
        raw.push(s.values[k] - s.values[0] - integral);
    }
    let mut running = 0.0f64;
    let values = raw
        .iter()
        .map(|&x| {
            running = running.max(x);
            running
        })
        .collect();
    Ok(LocalTimeEstimate {
        method: LtMethod::Tanaka,
        epsilon: None,
        path: SamplePath { grid: s.grid, values, kind: PathKind::LocalTime },
        raw: Some(raw),
    })
}

/// Cumulative realised quadratic variation `Σ (ΔS)²`.
pub fn realized_qv(s: &SamplePath) -> SamplePath {
    let mut acc = 0.0;
    let mut values = Vec::with_capacity(s.values.len());
    values.push(0.0);
    for w in s.values.windows(2) {
        acc += (w[1] - w[0]) * (w[1] - w[0]);
        values.push(acc);
    }
    SamplePath { grid: s.grid, values, kind: PathKind::Clock }
}

/// Cumulative `Σ a(S) 1{S > 0} dt`.
pub fn analytic_qv(s: &SamplePath, a: impl Fn(f64) -> f64) -> SamplePath {
    let dt = s.grid.dt();
    let mut acc = 0.0;
    let mut values = Vec::with_capacity(s.values.len());
    values.push(0.0);
    for &x in &s.values[..s.values.len() - 1] {
        if x > 0.0 {
            acc += a(x) * dt;
        }
        values.push(acc);
    }
    SamplePath { grid: s.grid, values, kind: PathKind::Clock }
}

/// `(1/2ε) Σ 1{0 ≤ S < ε} Δ⟨S⟩`.
pub fn lt_occupation(s: &SamplePath, eps: f64, qv: &SamplePath) -> Result<LocalTimeEstimate> {
    check_eps(eps)?;
    s.same_grid(qv)?;
    let mut acc = 0.0;
    let mut values = Vec::with_capacity(s.values.len());
    values.push(0.0);
    for k in 1..s.values.len() {
        let x = s.values[k - 1];
        if (0.0..eps).contains(&x) {
            acc += qv.values[k] - qv.values[k - 1];
        }
        values.push(acc / (2.0 * eps));
    }
    Ok(LocalTimeEstimate {
        method: LtMethod::Occupation,
        epsilon: Some(eps),
        path: SamplePath { grid: s.grid, values, kind: PathKind::LocalTime },
        raw: None,
    })
}

/// The regulator of the fold, reported as a local-time estimate.
pub fn lt_regulator(lambda: &SamplePath) -> LocalTimeEstimate {
    let l0 = lambda.values[0];
    LocalTimeEstimate {
        method: LtMethod::Regulator,
        epsilon: None,
        path: SamplePath {
            grid: lambda.grid,
            values: lambda.values.iter().map(|l| l - l0).collect(),
            kind: PathKind::LocalTime,
        },
        raw: None,
    }
}

/// The thinned radial process `R^A = ‖X‖ · 1{arg X ∈ A}`.
pub fn thinned_path(w: &WalshPath, set: &AngleSet) -> SamplePath {
    let values = (0..w.len())
        .map(|k| match w.angle_at(k) {
            Some(a) if set.contains(a) => w.radial[k],
            _ => 0.0,
        })
        .collect();
    SamplePath { grid: w.grid, values, kind: PathKind::Folded }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThinnedEstimate {
    /// Downcrossing estimate of the local time of `R^A`.
    pub thinned: LocalTimeEstimate,
    /// Downcrossing estimate of the local time of `‖X‖` at the same ε.
    pub total: LocalTimeEstimate,
    /// `ν(A)`.
    pub nu_a: f64,
}

impl ThinnedEstimate {
    /// `ν(A) · L^{‖X‖}(T)`, the value the thinned estimate should approach.
    pub fn reference(&self) -> f64 {
        self.nu_a * self.total.terminal()
    }
}

/// Downcrossing local time of the thinned process, alongside `ν(A)` times the full local time.
pub fn thinned_local_time(
    w: &WalshPath,
    set: &AngleSet,
    mu: &SpinningMeasure,
    eps: f64,
) -> Result<ThinnedEstimate> {
    let thinned = lt_downcrossing(&thinned_path(w, set), eps)?;
    let total = lt_downcrossing(&w.radial_path(), eps)?;
    Ok(ThinnedEstimate { thinned, total, nu_a: mu.nu_set(set) })
}

/// Right local time at zero of the coordinate `X_i` (`i ∈ {1, 2}`) by one-sided occupation
/// of `[0, ε)` with realised `Δ⟨X_i⟩ = (ΔX_i)²`.
///
/// A step leaving the origin into the negative half-plane spends no time in `[0, ε)`
/// and is not counted.
pub fn component_local_time(w: &WalshPath, i: usize, eps: f64) -> Result<LocalTimeEstimate> {
    check_eps(eps)?;
    let coord = |k: usize| match i {
        1 => w.x1(k),
        _ => w.x2(k),
    };
    if !(i == 1 || i == 2) {
        return Err(Error::Argument(format!("coordinate index {i} must be 1 or 2")));
    }
    let mut acc = 0.0;
    let mut values = Vec::with_capacity(w.len());
    values.push(0.0);
    let mut prev = coord(0);
    for k in 1..w.len() {
        let x = coord(k);
        if (0.0..eps).contains(&prev) && x >= 0.0 {
            acc += (x - prev) * (x - prev);
        }
        values.push(acc / (2.0 * eps));
        prev = x;
    }
    Ok(LocalTimeEstimate {
        method: LtMethod::Occupation,
        epsilon: Some(eps),
        path: SamplePath { grid: w.grid, values, kind: PathKind::LocalTime },
        raw: None,
    })
}

/// Batch summary of terminal local-time estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub method: LtMethod,
    pub epsilon: Option<f64>,
    #[serde(rename = "T")]
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

impl BatchSummary {
    pub fn new(method: LtMethod, epsilon: Option<f64>, t: f64, terminals: &[f64]) -> Self {
        let (mean, stderr) = mean_stderr(terminals);
        Self { method, epsilon, t, mean, stderr, n_paths: terminals.len() }
    }
}

/// Smallest ε for which the downcrossing estimator does not routinely skip the band.
pub fn recommended_min_epsilon(sigma_max: f64, dt: f64) -> f64 {
    3.0 * sigma_max * dt.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::{skorokhod_fold, TimeGrid};

    fn path(values: Vec<f64>) -> SamplePath {
        let g = TimeGrid::new(1.0, values.len() - 1).unwrap();
        SamplePath::new(g, values, PathKind::Folded).unwrap()
    }

    #[test]
    fn sawtooth_counts_exactly() {
        let eps = 0.1;
        let mut v = vec![0.0];
        for _ in 0..5 {
            v.extend([0.1, 0.2, 0.1, 0.0]);
        }
        let est = lt_downcrossing(&path(v), eps).unwrap();
        assert!((est.terminal() - 0.5).abs() < 1e-15);
        assert_eq!(est.path.values[4], eps);
        assert_eq!(est.path.values[3], 0.0);
    }

    #[test]
    fn monotone_path_has_no_downcrossing() {
        let v: Vec<f64> = (0..100).map(|k| k as f64 * 0.01).collect();
        assert_eq!(lt_downcrossing(&path(v), 0.05).unwrap().terminal(), 0.0);
        assert!(lt_downcrossing(&path(vec![0.0, 1.0]), 0.0).is_err());
    }

    #[test]
    fn crossings_start_after_first_zero() {
        let c = crossings(&[0.5, 0.7, 0.0, 0.3, 0.6, 0.2, 0.0, 0.6], 0.5);
        assert_eq!(c.first_zero, Some(2));
        assert_eq!(c.exits, vec![4, 7]);
        assert_eq!(c.returns, vec![6]);
    }

    #[test]
    fn tanaka_of_linear_drivers() {
        let g = TimeGrid::new(1.0, 100).unwrap();
        for sign in [-1.0, 1.0] {
            let u = SamplePath::from_fn(g, PathKind::Driver, |t| sign * t);
            let (s, lambda) = skorokhod_fold(&u);
            let est = lt_tanaka(&s, &u).unwrap();
            // leaving zero at speed 1 books one step of local time; sitting at zero books none
            let expect = if sign > 0.0 { g.dt() } else { 0.0 };
            assert!((est.terminal() - expect).abs() < 1e-12);
            if sign < 0.0 {
                assert!((lambda.last() - 1.0).abs() < 1e-12);
            }
        }
        let other = SamplePath::from_fn(TimeGrid::new(2.0, 100).unwrap(), PathKind::Driver, |t| t);
        assert!(lt_tanaka(&other, &SamplePath::from_fn(g, PathKind::Driver, |t| t)).is_err());
    }

    #[test]
    fn occupation_trivial_cases() {
        let s = path(vec![0.5, 0.6, 0.7]);
        assert_eq!(lt_occupation(&s, 0.1, &realized_qv(&s)).unwrap().terminal(), 0.0);
        let z = path(vec![0.0; 4]);
        assert_eq!(lt_occupation(&z, 0.1, &realized_qv(&z)).unwrap().terminal(), 0.0);
        let qv = analytic_qv(&z, |_| 1.0);
        assert_eq!(qv.last(), 0.0);
    }

    #[test]
    fn occupation_counts_band_steps() {
        let s = path(vec![0.0, 0.05, 0.2, 0.05]);
        let est = lt_occupation(&s, 0.1, &realized_qv(&s)).unwrap();
        let expect = (0.05f64.powi(2) + 0.15f64.powi(2)) / 0.2;
        assert!((est.terminal() - expect).abs() < 1e-15);
    }
}
