//! Experiment configuration: a single JSON document per run.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use walsh_core::diffusion::{AngularCoefficients, AngularStep};
use walsh_core::drivers::{RadialCoefficients, TimeGrid};
use walsh_core::localtime::LtMethod;
use walsh_core::SpinningMeasure;

use crate::AppError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    FoldDemo,
    WalshBm,
    SkewBm,
    Tripod,
    PolarDrift,
    Bessel,
    Thinning,
    FsResidual,
    SlopeAvg,
    TimeChange,
    EstimateMu,
    MixedMu,
}

impl Experiment {
    pub const ALL: [Experiment; 12] = [
        Experiment::FoldDemo,
        Experiment::WalshBm,
        Experiment::SkewBm,
        Experiment::Tripod,
        Experiment::PolarDrift,
        Experiment::Bessel,
        Experiment::Thinning,
        Experiment::FsResidual,
        Experiment::SlopeAvg,
        Experiment::TimeChange,
        Experiment::EstimateMu,
        Experiment::MixedMu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::FoldDemo => "fold-demo",
            Experiment::WalshBm => "walsh-bm",
            Experiment::SkewBm => "skew-bm",
            Experiment::Tripod => "tripod",
            Experiment::PolarDrift => "polar-drift",
            Experiment::Bessel => "bessel",
            Experiment::Thinning => "thinning",
            Experiment::FsResidual => "fs-residual",
            Experiment::SlopeAvg => "slope-avg",
            Experiment::TimeChange => "time-change",
            Experiment::EstimateMu => "estimate-mu",
            Experiment::MixedMu => "mixed-mu",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }

    pub fn description(self) -> &'static str {
        match self {
            Experiment::FoldDemo => "Skorokhod fold of a driver, with exactness checks",
            Experiment::WalshBm => "Walsh Brownian motion: radius, local time and angular law at T",
            Experiment::SkewBm => "two opposite rays: skew Brownian motion on the first axis",
            Experiment::Tripod => "three equal rays: coordinates as martingales",
            Experiment::PolarDrift => "drift -lambda(theta) toward the origin and its stationary law",
            Experiment::Bessel => "Bessel radial part: local time vanishes as epsilon shrinks",
            Experiment::Thinning => "local time of the radius restricted to an angle set",
            Experiment::FsResidual => "change-of-variable residual over the function catalog and a dt sweep",
            Experiment::SlopeAvg => "slope-averaging martingales for three angular weights",
            Experiment::TimeChange => "angular coefficients by scale function and time change vs direct Euler",
            Experiment::EstimateMu => "recover the spinning measure from exit angles",
            Experiment::MixedMu => "switch the spinning measure at a point and re-estimate per window",
        }
    }

    /// The bundled default configuration.
    pub fn default_config(self) -> &'static str {
        match self {
            Experiment::FoldDemo => include_str!("../configs/fold-demo.json"),
            Experiment::WalshBm => include_str!("../configs/walsh-bm.json"),
            Experiment::SkewBm => include_str!("../configs/skew-bm.json"),
            Experiment::Tripod => include_str!("../configs/tripod.json"),
            Experiment::PolarDrift => include_str!("../configs/polar-drift.json"),
            Experiment::Bessel => include_str!("../configs/bessel.json"),
            Experiment::Thinning => include_str!("../configs/thinning.json"),
            Experiment::FsResidual => include_str!("../configs/fs-residual.json"),
            Experiment::SlopeAvg => include_str!("../configs/slope-avg.json"),
            Experiment::TimeChange => include_str!("../configs/time-change.json"),
            Experiment::EstimateMu => include_str!("../configs/estimate-mu.json"),
            Experiment::MixedMu => include_str!("../configs/mixed-mu.json"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub measure: SpinningMeasure,
    #[serde(default)]
    pub coefficients: CoefficientSpec,
    pub grid: GridSpec,
    pub batch: BatchSpec,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub params: Params,
}

/// Coefficients by family. Radial families depend on `r` only; angular
/// families are piecewise constant in the angle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoefficientSpec {
    #[default]
    Brownian,
    Constant {
        b: f64,
        sigma: f64,
    },
    /// `b(r) = −κr`, constant `σ`.
    OrnsteinUhlenbeck {
        kappa: f64,
        sigma: f64,
    },
    /// `b = −λ(θ)`, `σ = 1`, with `λ = rates[j]` from `starts[j]`.
    PolarDrift {
        starts: Vec<f64>,
        rates: Vec<f64>,
    },
    /// Squared Bessel radial part of dimension `deltas[j]` from `starts[j]`.
    Bessel {
        starts: Vec<f64>,
        deltas: Vec<f64>,
    },
}

impl CoefficientSpec {
    pub fn family(&self) -> &'static str {
        match self {
            CoefficientSpec::Brownian => "brownian",
            CoefficientSpec::Constant { .. } => "constant",
            CoefficientSpec::OrnsteinUhlenbeck { .. } => "ornstein-uhlenbeck",
            CoefficientSpec::PolarDrift { .. } => "polar-drift",
            CoefficientSpec::Bessel { .. } => "bessel",
        }
    }

    pub fn radial(&self) -> Result<RadialCoefficients, AppError> {
        let r = match *self {
            CoefficientSpec::Brownian => Ok(RadialCoefficients::brownian()),
            CoefficientSpec::Constant { b, sigma } => RadialCoefficients::constant(b, sigma),
            CoefficientSpec::OrnsteinUhlenbeck { kappa, sigma } => {
                RadialCoefficients::general(move |r| -kappa * r, move |_| sigma)
            }
            _ => {
                return Err(AppError::config(
                    "coefficients.family",
                    format!("family '{}' is not radial", self.family()),
                ))
            }
        };
        r.map_err(|e| AppError::config("coefficients", e))
    }

    /// The rate step function of the polar-drift family.
    pub fn polar_rates(&self) -> Result<AngularStep, AppError> {
        match self {
            CoefficientSpec::PolarDrift { starts, rates } => {
                let step = AngularStep::new(starts.clone(), rates.clone())
                    .map_err(|e| AppError::config("coefficients", e))?;
                AngularCoefficients::polar_drift(&step).map_err(|e| AppError::config("coefficients.rates", e))?;
                Ok(step)
            }
            _ => Err(AppError::config(
                "coefficients.family",
                format!("expected 'polar-drift', got '{}'", self.family()),
            )),
        }
    }

    /// The dimension step function of the Bessel family.
    pub fn bessel_deltas(&self) -> Result<AngularStep, AppError> {
        match self {
            CoefficientSpec::Bessel { starts, deltas } => {
                let step = AngularStep::new(starts.clone(), deltas.clone())
                    .map_err(|e| AppError::config("coefficients", e))?;
                AngularCoefficients::bessel(&step).map_err(|e| AppError::config("coefficients.deltas", e))?;
                Ok(step)
            }
            _ => Err(AppError::config(
                "coefficients.family",
                format!("expected 'bessel', got '{}'", self.family()),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub t_end: f64,
    pub n_steps: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<TimeGrid, AppError> {
        TimeGrid::new(self.t_end, self.n_steps).map_err(|e| AppError::config("grid", e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSpec {
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<LtMethod>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Number of leading paths written as per-path CSV files.
    #[serde(default = "one")]
    pub paths_csv: usize,
    /// Histogram and table CSV files.
    #[serde(default = "yes")]
    pub tables: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: None, paths_csv: 1, tables: true }
    }
}

/// Driver of the fold demonstration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FoldDriver {
    /// `U(t) = u0 + slope·t`.
    Linear,
    /// Euler path of the radial coefficients started at `u0`.
    Diffusion,
}

/// Experiment-specific parameters; each experiment reads the ones it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Starting point `(r, θ)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver: Option<FoldDriver>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    /// Angle set as arcs `[start, end]`, wrapping through 0 when `start > end`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arcs: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dts: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_point: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure2: Option<SpinningMeasure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
}

/// Parses a config, reporting the JSON path of the first offending field.
pub fn parse(text: &str) -> Result<ExperimentConfig, AppError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        AppError::config(if path.is_empty() { ".".into() } else { path }, e.into_inner())
    })?;
    validate(&cfg)?;
    Ok(cfg)
}

fn positive(path: &str, v: f64) -> Result<(), AppError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(AppError::config(path, format!("must be positive and finite, got {v}")))
    }
}

/// Checks that go beyond the schema: ranges and family/experiment compatibility.
pub fn validate(cfg: &ExperimentConfig) -> Result<(), AppError> {
    cfg.grid.build()?;
    if cfg.batch.n_paths == 0 {
        return Err(AppError::config("batch.n_paths", "must be positive"));
    }
    if cfg.batch.workers == Some(0) {
        return Err(AppError::config("batch.workers", "must be positive"));
    }
    for (i, &e) in cfg.estimator.epsilons.iter().enumerate() {
        positive(&format!("estimator.epsilons[{i}]"), e)?;
    }
    let p = &cfg.params;
    if let Some([r, t]) = p.x0 {
        if !(r >= 0.0 && r.is_finite() && t.is_finite()) {
            return Err(AppError::config("params.x0", "needs r >= 0 and a finite angle"));
        }
    }
    if let Some(dts) = &p.dts {
        if dts.is_empty() {
            return Err(AppError::config("params.dts", "must not be empty"));
        }
        for (i, &d) in dts.iter().enumerate() {
            positive(&format!("params.dts[{i}]"), d)?;
        }
    }
    if let Some(d) = p.source_dt {
        positive("params.source_dt", d)?;
    }
    if let Some(t) = p.switch_tol {
        positive("params.switch_tol", t)?;
    }
    if p.bins == Some(0) {
        return Err(AppError::config("params.bins", "must be positive"));
    }
    if let Some(arcs) = &p.arcs {
        crate::experiments::angle_set(arcs)?;
    }
    match cfg.experiment {
        Experiment::PolarDrift | Experiment::TimeChange => {
            cfg.coefficients.polar_rates()?;
        }
        Experiment::Bessel => {
            cfg.coefficients.bessel_deltas()?;
        }
        _ => {
            cfg.coefficients.radial()?;
        }
    }
    match cfg.experiment {
        Experiment::SkewBm => {
            let ok = cfg.measure.density().is_none()
                && cfg.measure.atoms().iter().all(|a| a.0 == 0.0 || a.0 == std::f64::consts::PI);
            if !ok {
                return Err(AppError::config("measure", "skew-bm needs atoms at 0 and pi only"));
            }
        }
        Experiment::MixedMu => {
            let [r, _] = p.switch_point.unwrap_or([0.5, 0.0]);
            positive("params.switch_point", r)?;
        }
        Experiment::FoldDemo if p.driver == Some(FoldDriver::Linear) => {
            if !p.slope.unwrap_or(-1.0).is_finite() || !p.u0.unwrap_or(0.0).is_finite() {
                return Err(AppError::config("params.slope", "linear driver needs finite u0 and slope"));
            }
        }
        _ => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_parse_and_name_themselves() {
        for e in Experiment::ALL {
            let cfg = parse(e.default_config()).unwrap_or_else(|err| panic!("{}: {err}", e.name()));
            assert_eq!(cfg.experiment, e);
            assert_eq!(Experiment::from_name(e.name()), Some(e));
        }
    }

    #[test]
    fn family_must_match_experiment() {
        let text = Experiment::PolarDrift.default_config().replace("\"polar-drift\", \"starts\"", "\"bessel\", \"starts\"");
        let text = text.replace("\"rates\"", "\"deltas\"");
        match parse(&text) {
            Err(AppError::Config { path, .. }) => assert!(path.starts_with("coefficients"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn skew_bm_rejects_off_axis_atoms() {
        let text = Experiment::SkewBm.default_config().replace("3.141592653589793", "3.0");
        assert!(matches!(parse(&text), Err(AppError::Config { .. })));
    }
}
