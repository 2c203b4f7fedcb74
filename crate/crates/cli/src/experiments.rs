//! The built-in experiments. Each one simulates a batch through a
//! [`BatchRunner`], reduces the per-path results in index order and records
//! statistics, test outcomes and CSV tables.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde_json::{json, Map, Value};
use walsh_core::batch::BatchRunner;
use walsh_core::calculus::{catalog, fs_decompose, martingale_ztest, slope_avg_process, ResidualReport, ZTest};
use walsh_core::diffusion::{
    bessel_driver_experiment, mixed_measure_experiment, per_ray_euler_terminal, polar_drift_experiment,
    scale_transform, simulate_time_changed, simulate_walsh_diffusion, uniform_lattice, walsh_diffusion_terminal,
    AngularCoefficients, EmpiricalMeasure,
};
use walsh_core::drivers::{simulate_driver, skorokhod_fold, write_fold_csv, DriverSpec, PathKind, SamplePath, TimeGrid};
use walsh_core::localtime::{
    analytic_qv, component_local_time, crossings, lt_occupation, realized_qv, recommended_min_epsilon, thinned_path,
};
use walsh_core::measures::alpha_gamma;
use walsh_core::stats::{binomial_ci, chi_square_gof, ks_two_sample, mean, mean_stderr, Histogram, TestResult, Z99};
use walsh_core::unfolding::{PolarPoint, WalshPath};
use walsh_core::{wrap_angle, AngleSet, Error, Purpose, SpinningMeasure, StreamFactory, TAU};

use crate::config::{Experiment, ExperimentConfig, FoldDriver};
use crate::output::{self, Artifacts};
use crate::AppError;

/// Significance level of the goodness-of-fit tests reported in summaries.
pub const SIGNIFICANCE: f64 = 0.01;
/// Bound on `|z|` for the martingale tests.
pub const Z_BOUND: f64 = 3.0;
/// Bins of the density part in angular tables.
const ANGLE_BINS: usize = 16;

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    runner: &'a BatchRunner,
    factory: StreamFactory,
    grid: TimeGrid,
    n_paths: usize,
    stats: Map<String, Value>,
    tests: Map<String, Value>,
    art: Artifacts,
}

impl Ctx<'_> {
    fn stat(&mut self, k: &str, v: impl Into<Value>) {
        self.stats.insert(k.into(), v.into());
    }

    fn test(&mut self, k: &str, v: Value) {
        self.tests.insert(k.into(), v);
    }

    fn log(&self, label: &str, n: usize) {
        eprintln!("[{}] {label}: {n} paths on {} workers", self.cfg.experiment.name(), self.runner.workers());
    }

    fn keep(&self, i: u64) -> bool {
        (i as usize) < self.cfg.output.paths_csv
    }

    fn add_path_csv(&mut self, i: usize, w: &WalshPath) {
        let mut buf = Vec::new();
        w.write_csv(&mut buf).expect("write to memory");
        self.art.add(format!("path_{i:03}.csv"), buf);
    }

    fn table(&mut self, name: &str, body: String) {
        if self.cfg.output.tables {
            self.art.add(name, body);
        }
    }

    fn x0(&self) -> PolarPoint {
        match self.cfg.params.x0 {
            Some([r, t]) if r > 0.0 => PolarPoint::new(r, wrap_angle(t)),
            _ => PolarPoint::origin(),
        }
    }

    fn epsilon(&self, default: f64) -> f64 {
        self.cfg.estimator.epsilons.first().copied().unwrap_or(default)
    }

    fn warn_epsilon(&self, eps: f64, sigma: f64, dt: f64) {
        let min = recommended_min_epsilon(sigma, dt);
        if eps < min {
            eprintln!(
                "[{}] warning: epsilon {eps} is below 3*sigma*sqrt(dt) = {min:.4}; crossings will be undercounted",
                self.cfg.experiment.name()
            );
        }
    }
}

/// Runs the configured experiment.
pub fn run(cfg: &ExperimentConfig, runner: &BatchRunner) -> Result<Artifacts, AppError> {
    let mut ctx = Ctx {
        cfg,
        runner,
        factory: StreamFactory::new(cfg.batch.seed),
        grid: cfg.grid.build()?,
        n_paths: cfg.batch.n_paths,
        stats: Map::new(),
        tests: Map::new(),
        art: Artifacts::default(),
    };
    match cfg.experiment {
        Experiment::FoldDemo => fold_demo(&mut ctx)?,
        Experiment::WalshBm => walsh_bm(&mut ctx)?,
        Experiment::SkewBm => skew_bm(&mut ctx)?,
        Experiment::Tripod => tripod(&mut ctx)?,
        Experiment::PolarDrift => polar_drift(&mut ctx)?,
        Experiment::Bessel => bessel(&mut ctx)?,
        Experiment::Thinning => thinning(&mut ctx)?,
        Experiment::FsResidual => fs_residual(&mut ctx)?,
        Experiment::SlopeAvg => slope_avg(&mut ctx)?,
        Experiment::TimeChange => time_change(&mut ctx)?,
        Experiment::EstimateMu => estimate_mu(&mut ctx)?,
        Experiment::MixedMu => mixed_mu(&mut ctx)?,
    }
    let summary = output::summary(cfg, ctx.n_paths, ctx.stats, ctx.tests);
    let mut art = Artifacts::default();
    art.add(output::SUMMARY, summary);
    for (name, bytes) in ctx.art.files() {
        art.add(name.clone(), bytes.clone());
    }
    Ok(art)
}

fn test_json(t: &TestResult) -> Value {
    json!({
        "statistic": t.statistic,
        "dof": t.dof,
        "p_value": t.p_value,
        "significance": SIGNIFICANCE,
        "passed": t.passes(SIGNIFICANCE),
    })
}

fn z_json(z: &ZTest) -> Value {
    json!({
        "z": z.z,
        "p_value": z.p_value,
        "mean": z.mean,
        "stderr": z.stderr,
        "n": z.n,
        "bound": Z_BOUND,
        "passed": z.passes(Z_BOUND),
    })
}

/// Union of arcs `[start, end]`.
pub fn angle_set(arcs: &[[f64; 2]]) -> Result<AngleSet, AppError> {
    let mut set = AngleSet::empty();
    for (i, a) in arcs.iter().enumerate() {
        let arc = AngleSet::arc(a[0], a[1]).map_err(|e| AppError::config(format!("params.arcs[{i}]"), e))?;
        set = set.union(&arc).map_err(|e| AppError::config(format!("params.arcs[{i}]"), e))?;
    }
    Ok(set)
}

fn complement(set: &AngleSet) -> AngleSet {
    let mut out = AngleSet::empty();
    let mut at = 0.0;
    for &(a, b) in set.intervals() {
        if a > at {
            out = out.union(&AngleSet::interval(at, a).expect("ordered gap")).expect("disjoint gaps");
        }
        at = b;
    }
    if at < TAU {
        out = out.union(&AngleSet::interval(at, TAU).expect("ordered gap")).expect("disjoint gaps");
    }
    out
}

/// Angular cells for a goodness-of-fit test against `mu`: one cell per atom,
/// plus equal bins carrying the density part.
struct AngularTable {
    cells: Vec<(f64, f64)>,
    counts: Vec<u64>,
    probs: Vec<f64>,
}

impl AngularTable {
    fn new(angles: &[f64], mu: &SpinningMeasure) -> Result<Self, Error> {
        let atoms = mu.atoms();
        let mut cells: Vec<(f64, f64)> = atoms.iter().map(|a| (a.0, a.0)).collect();
        let mut probs: Vec<f64> = atoms.iter().map(|a| a.1).collect();
        if mu.density().is_some() {
            let w = TAU / ANGLE_BINS as f64;
            for j in 0..ANGLE_BINS {
                let (a, b) = (j as f64 * w, if j + 1 == ANGLE_BINS { TAU } else { (j + 1) as f64 * w });
                let inside: f64 = atoms.iter().filter(|x| x.0 >= a && x.0 < b).map(|x| x.1).sum();
                cells.push((a, b));
                probs.push((mu.nu_mass(a, b)? - inside).max(0.0));
            }
        }
        let mut counts = vec![0u64; cells.len()];
        for &t in angles {
            let j = atoms.iter().position(|x| x.0 == t).or_else(|| {
                cells.iter().enumerate().skip(atoms.len()).find(|(_, c)| t >= c.0 && t < c.1).map(|(j, _)| j)
            });
            if let Some(j) = j {
                counts[j] += 1;
            }
        }
        Ok(Self { cells, counts, probs })
    }

    fn test(&self) -> Result<TestResult, Error> {
        chi_square_gof(&self.counts, &self.probs)
    }

    fn csv(&self) -> String {
        let mut s = String::from("cell_left,cell_right,count,expected_prob\n");
        for (j, c) in self.cells.iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{}", c.0, c.1, self.counts[j], self.probs[j]);
        }
        s
    }
}

fn radial_histogram(values: &[f64], bins: usize) -> Histogram {
    let hi = values.iter().copied().fold(0.0f64, f64::max);
    let hi = if hi > 0.0 { hi * (1.0 + 1e-12) } else { 1.0 };
    Histogram::new(values, 0.0, hi, bins)
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn rms(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

// ---------------------------------------------------------------------------

fn fold_demo(ctx: &mut Ctx) -> Result<(), AppError> {
    let p = &ctx.cfg.params;
    let u0 = p.u0.unwrap_or(0.0);
    let grid = ctx.grid;
    let paths: Vec<SamplePath> = match p.driver.unwrap_or(FoldDriver::Linear) {
        FoldDriver::Linear => {
            let slope = p.slope.unwrap_or(-1.0);
            ctx.n_paths = 1;
            vec![SamplePath::from_fn(grid, PathKind::Driver, |t| u0 + slope * t)]
        }
        FoldDriver::Diffusion => {
            let spec = DriverSpec { coeffs: ctx.cfg.coefficients.radial()?.scalar().clone(), u0 };
            let f = ctx.factory;
            let out = ctx.runner.try_map(ctx.n_paths, |i| {
                simulate_driver(&spec, grid, &mut f.stream(i, Purpose::Driver))
            })?;
            ctx.log("drivers", ctx.n_paths);
            out
        }
    };
    let (mut identity, mut monotone, mut flat) = (0u64, 0u64, 0u64);
    let mut terminal = Vec::with_capacity(paths.len());
    for (i, u) in paths.iter().enumerate() {
        let (s, l) = skorokhod_fold(u);
        for k in 0..u.values.len() {
            if s.values[k].to_bits() != (u.values[k] + l.values[k]).to_bits() {
                identity += 1;
            }
            if k > 0 {
                if l.values[k] < l.values[k - 1] {
                    monotone += 1;
                }
                if l.values[k] > l.values[k - 1] && s.values[k] != 0.0 {
                    flat += 1;
                }
            }
        }
        terminal.push(l.last());
        if i == 0 {
            let mut buf = Vec::new();
            write_fold_csv(&mut buf, u, &s, &l).expect("write to memory");
            ctx.art.add("fold.csv", buf);
        }
    }
    let (m, se) = mean_stderr(&terminal);
    ctx.stat("mean_terminal_lambda", m);
    ctx.stat("stderr_terminal_lambda", se);
    ctx.stat("identity_violations", identity);
    ctx.stat("monotonicity_violations", monotone);
    ctx.stat("flatness_violations", flat);
    ctx.test("fold_exact", json!({ "passed": identity + monotone + flat == 0 }));
    Ok(())
}

fn walsh_bm(ctx: &mut Ctx) -> Result<(), AppError> {
    let coeffs = ctx.cfg.coefficients.radial()?;
    let mu = &ctx.cfg.measure;
    let (grid, x0, f) = (ctx.grid, ctx.x0(), ctx.factory);
    let out = ctx.runner.try_map(ctx.n_paths, |i| {
        let (mut d, mut a) = f.path_streams(i);
        if ctx.keep(i) {
            let w = simulate_walsh_diffusion(&coeffs, mu, x0, grid, &mut d, &mut a)?.path;
            Ok((w.last_point(), *w.localtime.last().expect("nonempty"), Some(w)))
        } else {
            walsh_diffusion_terminal(&coeffs, mu, x0, grid, &mut d, &mut a).map(|(p, l)| (p, l, None))
        }
    })?;
    ctx.log("walsh paths", ctx.n_paths);
    let radii: Vec<f64> = out.iter().map(|o| o.0.r).collect();
    let lts: Vec<f64> = out.iter().map(|o| o.1).collect();
    let angles: Vec<f64> = out.iter().filter(|o| o.0.r > 0.0).map(|o| o.0.theta).collect();
    let (mr, sr) = mean_stderr(&radii);
    let (ml, sl) = mean_stderr(&lts);
    ctx.stat("mean_radius", mr);
    ctx.stat("stderr_radius", sr);
    ctx.stat("mean_localtime", ml);
    ctx.stat("stderr_localtime", sl);
    if ctx.cfg.coefficients == crate::config::CoefficientSpec::Brownian && x0.r == 0.0 {
        let reference = (2.0 * grid.t_end / PI).sqrt();
        ctx.stat("reference_mean", reference);
        ctx.test("mean_radius", json!({ "z": (mr - reference) / sr, "passed": (mr - reference).abs() < Z_BOUND * sr }));
    }
    let table = AngularTable::new(&angles, mu)?;
    ctx.test("angular_law", test_json(&table.test()?));
    ctx.table("angular.csv", table.csv());
    let bins = ctx.cfg.params.bins.unwrap_or(40);
    ctx.table("radial_histogram.csv", radial_histogram(&radii, bins).to_csv());
    for (i, o) in out.iter().enumerate() {
        if let Some(w) = &o.2 {
            ctx.add_path_csv(i, w);
        }
    }
    Ok(())
}

fn skew_bm(ctx: &mut Ctx) -> Result<(), AppError> {
    let coeffs = ctx.cfg.coefficients.radial()?;
    let mu = &ctx.cfg.measure;
    let (grid, x0, f) = (ctx.grid, ctx.x0(), ctx.factory);
    let p_pi = mu.atoms().iter().filter(|a| a.0 == PI).map(|a| a.1).sum::<f64>();
    let p_zero = 1.0 - p_pi;
    let out = ctx.runner.try_map(ctx.n_paths, |i| {
        let (mut d, mut a) = f.path_streams(i);
        let sample = simulate_walsh_diffusion(&coeffs, mu, x0, grid, &mut d, &mut a)?;
        let w = &sample.path;
        let u = &sample.driver.values;
        let mut stoch = 0.0;
        for k in 1..w.len() {
            stoch += sgn(w.x1(k - 1)) * (u[k] - u[k - 1]);
        }
        let n = w.len() - 1;
        let residual = w.x1(n) - w.x1(0) - stoch - (1.0 - 2.0 * p_pi) * w.localtime[n];
        Ok((w.x1(n), residual, ctx.keep(i).then(|| sample.path)))
    })?;
    ctx.log("skew paths", ctx.n_paths);
    let positive = out.iter().filter(|o| o.0 > 0.0).count();
    let off_origin = out.iter().filter(|o| o.0 != 0.0).count();
    let phat = positive as f64 / out.len() as f64;
    // the discrete path ends exactly at the origin with probability ~ (πn)^{-1/2}
    let phat_off = positive as f64 / off_origin as f64;
    let (lo, hi) = binomial_ci(p_zero, off_origin, Z99);
    let residuals: Vec<f64> = out.iter().map(|o| o.1).collect();
    ctx.stat("p_positive", phat);
    ctx.stat("p_positive_off_origin", phat_off);
    ctx.stat("at_origin", out.len() - off_origin);
    ctx.stat("p_expected", p_zero);
    ctx.stat("ci99", json!([lo, hi]));
    ctx.stat("harrison_shepp_coefficient", (1.0 - 2.0 * p_pi) / (1.0 - p_pi));
    ctx.stat("residual_mean", mean(&residuals));
    ctx.stat("residual_rms", rms(&residuals));
    ctx.test("p_positive_in_ci", json!({ "passed": phat_off >= lo && phat_off <= hi }));
    for (i, o) in out.iter().enumerate() {
        if let Some(w) = &o.2 {
            ctx.add_path_csv(i, w);
        }
    }
    Ok(())
}

fn tripod(ctx: &mut Ctx) -> Result<(), AppError> {
    let coeffs = ctx.cfg.coefficients.radial()?;
    let mu = &ctx.cfg.measure;
    let (grid, x0, f) = (ctx.grid, ctx.x0(), ctx.factory);
    let gamma = alpha_gamma(mu).gamma;
    let start = x0.cartesian();
    let out = ctx.runner.try_map(ctx.n_paths, |i| {
        let (mut d, mut a) = f.path_streams(i);
        if ctx.keep(i) {
            let w = simulate_walsh_diffusion(&coeffs, mu, x0, grid, &mut d, &mut a)?.path;
            Ok((w.last_point(), *w.localtime.last().expect("nonempty"), Some(w)))
        } else {
            walsh_diffusion_terminal(&coeffs, mu, x0, grid, &mut d, &mut a).map(|(p, l)| (p, l, None))
        }
    })?;
    ctx.log("tripod paths", ctx.n_paths);
    ctx.stat("gamma", json!(gamma));
    for c in 0..2 {
        let samples: Vec<f64> =
            out.iter().map(|o| o.0.cartesian()[c] - start[c] - gamma[c] * o.1).collect();
        let z = martingale_ztest(&samples)?;
        ctx.test(&format!("x{}_martingale", c + 1), z_json(&z));
    }
    let angles: Vec<f64> = out.iter().filter(|o| o.0.r > 0.0).map(|o| o.0.theta).collect();
    let table = AngularTable::new(&angles, mu)?;
    ctx.test("angular_law", test_json(&table.test()?));
    ctx.table("angular.csv", table.csv());
    for (i, o) in out.iter().enumerate() {
        if let Some(w) = &o.2 {
            ctx.add_path_csv(i, w);
        }
    }
    Ok(())
}

fn polar_drift(ctx: &mut Ctx) -> Result<(), AppError> {
    let lambda = ctx.cfg.coefficients.polar_rates()?;
    let g = ctx.grid;
    let r = polar_drift_experiment(&lambda, &ctx.cfg.measure, g.t_end, ctx.n_paths, g.dt(), &ctx.factory, ctx.runner)?;
    ctx.log("polar-drift paths", ctx.n_paths);
    let rel = (r.mean_radius - r.stationary_mean).abs() / r.stationary_mean;
    ctx.stat("mean_radius", r.mean_radius);
    ctx.stat("stderr_radius", r.stderr_radius);
    ctx.stat("stationary_mean", r.stationary_mean);
    ctx.stat("relative_error", rel);
    ctx.test("mean_within_3pct", json!({ "passed": rel <= 0.03 }));
    ctx.test("radial_law", test_json(&r.radial_test));
    ctx.test("angular_law", test_json(&r.angular_test));
    ctx.table("radial_histogram.csv", r.radial_histogram.to_csv());
    let mut s = String::from("cell_left,cell_right,count,expected_prob\n");
    for (j, c) in r.angular_cells.iter().enumerate() {
        let _ = writeln!(s, "{},{},{},{}", c.0, c.1, r.angular_counts[j], r.angular_probs[j]);
    }
    ctx.table("angular.csv", s);
    Ok(())
}

fn bessel(ctx: &mut Ctx) -> Result<(), AppError> {
    let delta = ctx.cfg.coefficients.bessel_deltas()?;
    let eps = if ctx.cfg.estimator.epsilons.is_empty() {
        vec![0.2, 0.1, 0.05, 0.02]
    } else {
        ctx.cfg.estimator.epsilons.clone()
    };
    let r = bessel_driver_experiment(&delta, &ctx.cfg.measure, ctx.grid, ctx.n_paths, &eps, &ctx.factory, ctx.runner)?;
    ctx.log("bessel paths", ctx.n_paths);
    ctx.stat("epsilons", json!(r.epsilons));
    ctx.stat("means", json!(r.means));
    ctx.stat("stderrs", json!(r.stderrs));
    ctx.test("decreasing_in_epsilon", json!({ "passed": r.decreasing_in_epsilon() }));
    let mut s = String::from("epsilon,mean,stderr\n");
    for j in 0..r.epsilons.len() {
        let _ = writeln!(s, "{},{},{}", r.epsilons[j], r.means[j], r.stderrs[j]);
    }
    ctx.table("epsilon_sweep.csv", s);
    Ok(())
}

fn thinning(ctx: &mut Ctx) -> Result<(), AppError> {
    let coeffs = ctx.cfg.coefficients.radial()?;
    let mu = &ctx.cfg.measure;
    let set = match &ctx.cfg.params.arcs {
        Some(a) => angle_set(a)?,
        None => AngleSet::around(mu.atoms().first().map_or(0.0, |a| a.0), 0.1).expect("valid arc"),
    };
    let rest = complement(&set);
    let nu_a = mu.nu_set(&set);
    let alpha1 = alpha_gamma(mu).alpha_plus[0];
    let eps = ctx.epsilon(0.02);
    let (grid, x0, f) = (ctx.grid, ctx.x0(), ctx.factory);
    ctx.warn_epsilon(eps, coeffs.sigma(0.0).abs(), grid.dt());
    let out = ctx.runner.try_map(ctx.n_paths, |i| {
        let (mut d, mut a) = f.path_streams(i);
        let w = simulate_walsh_diffusion(&coeffs, mu, x0, grid, &mut d, &mut a)?.path;
        let total = crossings(&w.radial, eps).returns.len();
        let in_a = crossings(&thinned_path(&w, &set).values, eps).returns.len();
        let in_rest = crossings(&thinned_path(&w, &rest).values, eps).returns.len();
        let radial = w.radial_path();
        let occ = lt_occupation(&radial, eps, &realized_qv(&radial))?.terminal();
        let comp = component_local_time(&w, 1, eps)?.terminal();
        Ok((total, in_a, in_rest, occ, comp, ctx.keep(i).then_some(w)))
    })?;
    ctx.log("thinning paths", ctx.n_paths);
    let violations = out.iter().filter(|o| o.1 + o.2 != o.0).count();
    let ratios: Vec<f64> = out.iter().filter(|o| o.0 > 0).map(|o| o.1 as f64 / o.0 as f64).collect();
    let sum_a: usize = out.iter().map(|o| o.1).sum();
    let sum_t: usize = out.iter().map(|o| o.0).sum();
    let ratio = mean(&ratios);
    let occ: Vec<f64> = out.iter().map(|o| o.3).collect();
    let comp: Vec<f64> = out.iter().map(|o| o.4).collect();
    let comp_ratio = mean(&comp) / mean(&occ);
    ctx.stat("epsilon", eps);
    ctx.stat("nu_a", nu_a);
    ctx.stat("ratio", ratio);
    ctx.stat("ratio_of_means", sum_a as f64 / sum_t as f64);
    ctx.stat("paths_with_localtime", ratios.len());
    ctx.stat("mean_localtime", eps * sum_t as f64 / out.len() as f64);
    ctx.stat("additivity_violations", violations);
    ctx.stat("component_ratio", comp_ratio);
    ctx.stat("alpha1_plus", alpha1);
    ctx.test("additivity_exact", json!({ "passed": violations == 0 }));
    ctx.test("ratio_near_nu_a", json!({ "passed": (ratio - nu_a).abs() <= 0.03 }));
    ctx.test(
        "component_ratio_near_alpha1_plus",
        json!({ "passed": (comp_ratio - alpha1).abs() <= 0.1 * alpha1 }),
    );
    for (i, o) in out.iter().enumerate() {
        if let Some(w) = &o.5 {
            ctx.add_path_csv(i, w);
        }
    }
    Ok(())
}

fn fs_residual(ctx: &mut Ctx) -> Result<(), AppError> {
    let coeffs = ctx.cfg.coefficients.radial()?;
    let mu = &ctx.cfg.measure;
    let fns = catalog(mu);
    let t_end = ctx.grid.t_end;
    let dts = ctx.cfg.params.dts.clone().unwrap_or_else(|| vec![ctx.grid.dt()]);
    let (x0, f) = (ctx.x0(), ctx.factory);
    let mut reports: Vec<ResidualReport> = Vec::new();
    let mut csv = String::from("function,dt,rms_residual,max_residual\n");
    for &dt in &dts {
        let grid = TimeGrid::with_dt(t_end, dt).map_err(|e| AppError::config("params.dts", e))?;
        let per_path: Vec<Vec<f64>> = ctx.runner.try_map(ctx.n_paths, |i| {
            let (mut d, mut a) = f.path_streams(i);
            let s = simulate_walsh_diffusion(&coeffs, mu, x0, grid, &mut d, &mut a)?;
            let qv = analytic_qv(&s.path.radial_path(), |r| coeffs.a(r));
            let lt = s.path.localtime_path();
            fns.iter()
                .map(|g| Ok(fs_decompose(&s.path, &s.driver, &qv, g, mu, Some(&lt))?.terminal_residual()))
                .collect()
        })?;
        ctx.log(&format!("dt {dt}"), ctx.n_paths);
        for (j, g) in fns.iter().enumerate() {
            let col: Vec<f64> = per_path.iter().map(|r| r[j]).collect();
            let rep = ResidualReport::new(&g.name, dt, t_end, &col);
            let _ = writeln!(csv, "{},{},{},{}", rep.g_name, rep.dt, rep.rms_residual, rep.max_residual);
            reports.push(rep);
        }
    }
    let mut by_dt = dts.clone();
    by_dt.sort_by(|a, b| b.total_cmp(a));
    for g in &fns {
        let rms: Vec<f64> = by_dt
            .iter()
            .map(|&dt| reports.iter().find(|r| r.g_name == g.name && r.dt == dt).expect("report").rms_residual)
            .collect();
        if rms.len() > 1 {
            ctx.test(
                &format!("decreasing_{}", g.name),
                json!({ "rms": rms, "passed": rms.windows(2).all(|w| w[1] < w[0]) }),
            );
        }
    }
    ctx.stat("reports", serde_json::to_value(&reports).expect("reports serialise"));
    ctx.table("residuals.csv", csv);
    Ok(())
}

type Weight = (&'static str, fn(f64) -> f64);

const SLOPE_WEIGHTS: [Weight; 3] = [
    ("theta_fraction", |t| t / TAU),
    ("cos_2theta", |t| (2.0 * t).cos()),
    ("upper_half", |t| if t < PI { 1.0 } else { 0.0 }),
];

fn slope_avg(ctx: &mut Ctx) -> Result<(), AppError> {
    let coeffs = ctx.cfg.coefficients.radial()?;
    let mu = &ctx.cfg.measure;
    let (grid, x0, f) = (ctx.grid, ctx.x0(), ctx.factory);
    let out: Vec<Vec<f64>> = ctx.runner.try_map(ctx.n_paths, |i| {
        let (mut d, mut a) = f.path_streams(i);
        let s = simulate_walsh_diffusion(&coeffs, mu, x0, grid, &mut d, &mut a)?;
        SLOPE_WEIGHTS
            .iter()
            .map(|(_, phi)| Ok(slope_avg_process(&s.path, phi, mu, &s.driver)?.terminal_increment()))
            .collect()
    })?;
    ctx.log("slope-avg paths", ctx.n_paths);
    for (j, (name, phi)) in SLOPE_WEIGHTS.iter().enumerate() {
        let col: Vec<f64> = out.iter().map(|r| r[j]).collect();
        let z = martingale_ztest(&col)?;
        ctx.stat(&format!("mean_phi_{name}"), mu.integrate(phi));
        ctx.test(&format!("martingale_{name}"), z_json(&z));
    }
    Ok(())
}

/// Radial lattice of the time-change experiment.
const TC_R_MAX: f64 = 10.0;
const TC_R_CELLS: usize = 2000;

fn time_change(ctx: &mut Ctx) -> Result<(), AppError> {
    let lambda = ctx.cfg.coefficients.polar_rates()?;
    let coeffs = AngularCoefficients::polar_drift(&lambda).map_err(|e| AppError::config("coefficients", e))?;
    let st = scale_transform(&coeffs, &lambda.starts, &uniform_lattice(TC_R_MAX, TC_R_CELLS))?;
    let mu = &ctx.cfg.measure;
    let target = ctx.grid;
    let source_dt = ctx.cfg.params.source_dt.unwrap_or(target.dt());
    let direct = TimeGrid::with_dt(target.t_end, source_dt).map_err(|e| AppError::config("params.source_dt", e))?;
    let y0 = match ctx.cfg.params.x0 {
        Some(_) => ctx.x0(),
        None => PolarPoint::new(0.5, 0.5),
    };
    let f = ctx.factory;

    let lattice = uniform_lattice(TC_R_MAX, TC_R_CELLS);
    let (mut pq, mut dp0) = (0.0f64, 0.0f64);
    for &t in &lambda.starts {
        for &r in &lattice {
            pq = pq.max((st.p(st.q(r, t), t) - r).abs());
        }
        dp0 = dp0.max((st.dp(0.0, t) - 1.0).abs());
    }
    ctx.stat("max_p_of_q_error", pq);
    ctx.stat("max_dp_origin_error", dp0);
    ctx.test("p_of_q_identity", json!({ "tolerance": 1e-8, "passed": pq <= 1e-8 }));
    ctx.test("dp_origin_unit", json!({ "tolerance": 1e-6, "passed": dp0 <= 1e-6 }));

    let out = ctx.runner.try_map(ctx.n_paths, |i| {
        let (mut d, mut a) = f.path_streams(i);
        let y = simulate_time_changed(&st, mu, y0, target, source_dt, &mut d, &mut a)?;
        let mut d2 = f.stream(i, Purpose::Restart);
        let mut a2 = f.stream(i, Purpose::Aux);
        let x = per_ray_euler_terminal(&coeffs, mu, y0, direct, &mut d2, &mut a2)?;
        Ok((y.last_point().r, x.r, ctx.keep(i).then_some(y)))
    })?;
    ctx.log("time-change paths", ctx.n_paths);
    let tc: Vec<f64> = out.iter().map(|o| o.0).collect();
    let eu: Vec<f64> = out.iter().map(|o| o.1).collect();
    let (m1, s1) = mean_stderr(&tc);
    let (m2, s2) = mean_stderr(&eu);
    ctx.stat("mean_radius_time_change", m1);
    ctx.stat("stderr_radius_time_change", s1);
    ctx.stat("mean_radius_direct", m2);
    ctx.stat("stderr_radius_direct", s2);
    ctx.test("ks_time_change_vs_direct", test_json(&ks_two_sample(&tc, &eu)?));
    let mut s = String::from("path,time_change,direct\n");
    for (i, o) in out.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{}", o.0, o.1);
    }
    ctx.table("terminal_radii.csv", s);
    for (i, o) in out.iter().enumerate() {
        if let Some(w) = &o.2 {
            ctx.add_path_csv(i, w);
        }
    }
    Ok(())
}

fn exit_angles(w: &WalshPath, eps: f64, start: usize, end: usize) -> Vec<f64> {
    crossings(&w.radial[start..end], eps).exits.iter().map(|&k| w.angle[start + k]).collect()
}

fn tv_between(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> f64 {
    let mut keys: Vec<f64> = a.atoms.iter().chain(&b.atoms).map(|x| x.0).collect();
    keys.sort_by(f64::total_cmp);
    keys.dedup();
    0.5 * keys.iter().map(|&t| (a.frequency(t) - b.frequency(t)).abs()).sum::<f64>()
}

fn estimate_csv(e: &EmpiricalMeasure) -> String {
    let mut s = String::from("angle,count,frequency\n");
    for &(t, c) in &e.atoms {
        let _ = writeln!(s, "{t},{c},{}", c as f64 / e.count as f64);
    }
    s
}

fn estimate_mu(ctx: &mut Ctx) -> Result<(), AppError> {
    let coeffs = ctx.cfg.coefficients.radial()?;
    let mu = &ctx.cfg.measure;
    let eps = ctx.epsilon(0.05);
    let (grid, x0, f) = (ctx.grid, ctx.x0(), ctx.factory);
    ctx.warn_epsilon(eps, coeffs.sigma(0.0).abs(), grid.dt());
    let out = ctx.runner.try_map(ctx.n_paths, |i| {
        let (mut d, mut a) = f.path_streams(i);
        let w = simulate_walsh_diffusion(&coeffs, mu, x0, grid, &mut d, &mut a)?.path;
        Ok((exit_angles(&w, eps, 0, w.len()), ctx.keep(i).then_some(w)))
    })?;
    ctx.log("estimate-mu paths", ctx.n_paths);
    let angles: Vec<f64> = out.iter().flat_map(|o| o.0.iter().copied()).collect();
    if angles.is_empty() {
        return Err(Error::InsufficientData(format!("no exit to level {eps} in any path")).into());
    }
    let est = EmpiricalMeasure::from_angles(angles.clone());
    ctx.stat("epsilon", eps);
    ctx.stat("excursions", est.count);
    if mu.is_atomic() {
        let tv = est.tv_to(mu)?;
        ctx.stat("tv", tv);
        ctx.test("tv_below_0.05", json!({ "passed": tv < 0.05 && est.count >= 2000 }));
        ctx.table("estimate.csv", estimate_csv(&est));
    } else {
        let table = AngularTable::new(&angles, mu)?;
        ctx.test("angular_law", test_json(&table.test()?));
        ctx.table("estimate.csv", table.csv());
    }
    for (i, o) in out.iter().enumerate() {
        if let Some(w) = &o.1 {
            ctx.add_path_csv(i, w);
        }
    }
    Ok(())
}

fn mixed_mu(ctx: &mut Ctx) -> Result<(), AppError> {
    let p = &ctx.cfg.params;
    let mu1 = &ctx.cfg.measure;
    let default2 = SpinningMeasure::atomic(vec![(PI / 2.0, 0.5), (1.5 * PI, 0.5)]).expect("valid measure");
    let mu2 = p.measure2.as_ref().unwrap_or(&default2);
    let [r, t] = p.switch_point.unwrap_or([0.5, 0.0]);
    let point = PolarPoint::new(r, t);
    let tol = p.switch_tol.unwrap_or(0.01);
    let eps = ctx.epsilon(0.05);
    let (grid, f) = (ctx.grid, ctx.factory);
    ctx.warn_epsilon(eps, 1.0, grid.dt());
    let out = ctx.runner.try_map(ctx.n_paths, |i| {
        match mixed_measure_experiment(mu1, mu2, point, tol, grid, &f, i) {
            Ok(m) => {
                let k = m.switch_index;
                let pre = exit_angles(&m.path, eps, 0, k + 1);
                let post = exit_angles(&m.path, eps, k, m.path.len());
                Ok(Ok((k, pre, post, ctx.keep(i).then_some(m.path))))
            }
            Err(Error::SwitchNotReached { closest }) => Ok(Err(closest)),
            Err(e) => Err(e),
        }
    })?;
    ctx.log("mixed-mu paths", ctx.n_paths);
    let switched: Vec<_> = out.iter().filter_map(|o| o.as_ref().ok()).collect();
    if switched.is_empty() {
        let closest = out.iter().filter_map(|o| o.as_ref().err().copied()).fold(f64::INFINITY, f64::min);
        return Err(Error::SwitchNotReached { closest }.into());
    }
    let pre = EmpiricalMeasure::from_angles(switched.iter().flat_map(|s| s.1.iter().copied()).collect());
    let post = EmpiricalMeasure::from_angles(switched.iter().flat_map(|s| s.2.iter().copied()).collect());
    let times: Vec<f64> = switched.iter().map(|s| grid.time(s.0)).collect();
    ctx.stat("switched_paths", switched.len());
    ctx.stat("not_reached", out.len() - switched.len());
    ctx.stat("mean_switch_time", mean(&times));
    ctx.stat("pre_excursions", pre.count);
    ctx.stat("post_excursions", post.count);
    if pre.count == 0 || post.count == 0 {
        return Err(Error::InsufficientData("a window has no exits to level epsilon".into()).into());
    }
    let gap = tv_between(&pre, &post);
    ctx.stat("tv_gap", gap);
    if mu1.is_atomic() {
        ctx.stat("tv_pre_mu1", pre.tv_to(mu1)?);
    }
    if mu2.is_atomic() {
        ctx.stat("tv_post_mu2", post.tv_to(mu2)?);
    }
    ctx.test("tv_gap_above_0.3", json!({ "passed": gap > 0.3 }));
    ctx.table("estimate_pre.csv", estimate_csv(&pre));
    ctx.table("estimate_post.csv", estimate_csv(&post));
    for (i, o) in out.iter().enumerate() {
        if let Ok((_, _, _, Some(w))) = o {
            ctx.add_path_csv(i, w);
        }
    }
    Ok(())
}
