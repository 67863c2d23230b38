use std::fmt;
use std::path::{Path, PathBuf};

use dicke_core::chaos::{Axis, Crossing, LyapunovConfig};
use dicke_core::esqpt::EsqptConfig;
use dicke_core::otoc::EnsembleConfig;
use dicke_core::sweep::Workers;
use dicke_core::tsa::RosensteinConfig;
use dicke_core::{Error as CoreError, IntegratorConfig, ModelParams, PhaseState};
use serde::{Deserialize, Serialize};

/// A configuration problem; the message names the offending field.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Prefixes a core validation error with the block it came from.
fn scoped(block: &str, e: CoreError) -> ConfigError {
    match e {
        CoreError::InvalidParameter { field, reason } => bad(format!("{block}.{field}: {reason}")),
        other => bad(format!("{block}: {other}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    Equilibria,
    Gspt,
    LyapunovMap,
    QpMap,
    Rosenstein,
    Otoc,
    Esqpt,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Equilibria => "equilibria",
            Experiment::Gspt => "gspt",
            Experiment::LyapunovMap => "lyapunov-map",
            Experiment::QpMap => "qp-map",
            Experiment::Rosenstein => "rosenstein",
            Experiment::Otoc => "otoc",
            Experiment::Esqpt => "esqpt",
        }
    }

    pub fn stochastic(self) -> bool {
        matches!(
            self,
            Experiment::LyapunovMap | Experiment::QpMap | Experiment::Otoc | Experiment::Esqpt
        )
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    pub params: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<Workers>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibria: Option<EquilibriaBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gspt: Option<GsptBlock>,
    #[serde(default, rename = "lyapunov-map", skip_serializing_if = "Option::is_none")]
    pub lyapunov_map: Option<LyapunovMapBlock>,
    #[serde(default, rename = "qp-map", skip_serializing_if = "Option::is_none")]
    pub qp_map: Option<QpMapBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rosenstein: Option<RosensteinBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub otoc: Option<OtocBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub esqpt: Option<EsqptBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub initial: PhaseState,
    pub t_end: f64,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    /// Also write `p = 0` crossings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section: Option<Crossing>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriaBlock {
    pub gamma_ratios: Grid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GsptBlock {
    pub gamma_ratios: Grid,
}

/// Either explicit values or an inclusive `min..=max` range with a step.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { min: f64, max: f64, step: f64 },
}

impl Grid {
    pub fn values(&self, field: &str) -> Result<Vec<f64>, ConfigError> {
        match *self {
            Grid::List(ref v) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(bad(format!("{field}: values must be finite")));
                }
                Ok(v.clone())
            }
            Grid::Range { min, max, step } => {
                if !(min.is_finite() && max.is_finite() && max >= min) {
                    return Err(bad(format!("{field}: need finite min <= max")));
                }
                if !(step.is_finite() && step > 0.0) {
                    return Err(bad(format!("{field}.step: must be > 0")));
                }
                let n = ((max - min) / step + 1e-9).floor() as usize;
                Ok((0..=n).map(|i| min + i as f64 * step).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn axis(&self, name: &str, field: &str) -> Result<Axis, ConfigError> {
        Axis::new(name, self.min, self.max, self.count).map_err(|e| scoped(field, e))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovMapBlock {
    pub energy: AxisSpec,
    pub gamma_ratio: AxisSpec,
    #[serde(default = "default_n_ic")]
    pub n_ic: usize,
    #[serde(default)]
    pub lyapunov: LyapunovConfig,
}

fn default_n_ic() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QpMapBlock {
    pub energy: f64,
    #[serde(rename = "Q")]
    pub atom_q: AxisSpec,
    #[serde(rename = "P")]
    pub atom_p: AxisSpec,
    #[serde(default = "default_n_per_cell")]
    pub n_per_cell: usize,
    #[serde(default)]
    pub lyapunov: LyapunovConfig,
}

fn default_n_per_cell() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosensteinBlock {
    /// CSV file with a leading `t` column; relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
    /// Simulate the series instead of reading it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SeriesSource>,
    /// Moving-average window in seconds applied before the estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<f64>,
    #[serde(default)]
    pub estimator: RosensteinConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSource {
    pub initial: PhaseState,
    #[serde(default = "default_series_length")]
    pub t_end: f64,
    #[serde(default)]
    pub integrator: IntegratorConfig,
}

fn default_series_length() -> f64 {
    120.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OtocBlock {
    /// The top-level seed replaces `ensemble.seed`.
    pub ensemble: EnsembleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_range: Option<(f64, f64)>,
    /// Mean Benettin exponent over the ensemble; `null` skips it.
    #[serde(default = "default_compare")]
    pub lyapunov: Option<LyapunovConfig>,
}

fn default_compare() -> Option<LyapunovConfig> {
    Some(LyapunovConfig::default())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EsqptBlock {
    pub gamma_ratios: Grid,
    /// The top-level seed replaces `probe.seed`.
    #[serde(default)]
    pub probe: EsqptConfig,
    /// Write the worst repetition of every coupling as a trajectory CSV.
    #[serde(default)]
    pub dump_trajectories: bool,
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub workers: Option<Workers>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// A validated run.
#[derive(Debug, Clone)]
pub struct Plan {
    pub experiment: Experiment,
    pub config: RunConfig,
    pub seed: Option<u64>,
    pub workers: Workers,
    pub out: PathBuf,
    /// Independent work items (trajectories or grid points).
    pub work_items: usize,
}

pub const DEFAULT_OUT: &str = "dicke-out";

pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            bad(format!("config: {inner}"))
        } else {
            bad(format!("{path}: {inner}"))
        }
    })
}

pub fn load(path: &Path, experiment: Experiment, ov: &Overrides) -> Result<Plan, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| bad(format!("config: cannot read {}: {e}", path.display())))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    plan(parse(&text)?, experiment, ov, base_dir)
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(bad(format!("{field}: must be > 0, got {v}")))
    }
}

fn ratios_ok(field: &str, v: &[f64]) -> Result<(), ConfigError> {
    if v.is_empty() {
        return Err(bad(format!("{field}: must not be empty")));
    }
    if let Some(x) = v.iter().find(|x| **x < 0.0) {
        return Err(bad(format!("{field}: values must be >= 0, got {x}")));
    }
    Ok(())
}

pub fn plan(mut config: RunConfig, experiment: Experiment, ov: &Overrides, base_dir: PathBuf) -> Result<Plan, ConfigError> {
    if let Some(e) = config.experiment {
        if e != experiment {
            return Err(bad(format!("experiment: config is for `{e}`, not `{experiment}`")));
        }
    }
    config.experiment = Some(experiment);
    config.params.validate().map_err(|e| scoped("params", e))?;

    let populated: Vec<&str> = [
        (config.simulate.is_some(), "simulate"),
        (config.equilibria.is_some(), "equilibria"),
        (config.gspt.is_some(), "gspt"),
        (config.lyapunov_map.is_some(), "lyapunov-map"),
        (config.qp_map.is_some(), "qp-map"),
        (config.rosenstein.is_some(), "rosenstein"),
        (config.otoc.is_some(), "otoc"),
        (config.esqpt.is_some(), "esqpt"),
    ]
    .into_iter()
    .filter_map(|(set, name)| set.then_some(name))
    .collect();
    if let Some(other) = populated.iter().find(|n| **n != experiment.name()) {
        return Err(bad(format!("{other}: only the `{experiment}` block may be present")));
    }
    if populated.is_empty() {
        return Err(bad(format!("{experiment}: block is missing")));
    }

    let seed = ov.seed.or(config.seed);
    if experiment.stochastic() && seed.is_none() {
        return Err(bad(format!("seed: required for `{experiment}`")));
    }
    config.seed = seed;
    let workers = ov.workers.or(config.workers).unwrap_or_default();
    let out = ov
        .out
        .clone()
        .or_else(|| config.output_dir.as_ref().map(|d| base_dir.join(d)))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

    let work_items = validate_block(&mut config, experiment, seed.unwrap_or(0), &base_dir)?;
    Ok(Plan {
        experiment,
        config,
        seed,
        workers,
        out,
        work_items,
    })
}

fn validate_block(config: &mut RunConfig, experiment: Experiment, seed: u64, base_dir: &Path) -> Result<usize, ConfigError> {
    match experiment {
        Experiment::Simulate => {
            let b = config.simulate.as_ref().expect("checked");
            positive("simulate.t_end", b.t_end)?;
            b.integrator.validate().map_err(|e| scoped("simulate.integrator", e))?;
            if b.initial.boundary_margin() <= 0.0 {
                return Err(bad("simulate.initial: on the atomic boundary"));
            }
            Ok(1)
        }
        Experiment::Equilibria => {
            let v = config.equilibria.as_ref().expect("checked").gamma_ratios.values("equilibria.gamma_ratios")?;
            ratios_ok("equilibria.gamma_ratios", &v)?;
            if v.windows(2).any(|w| w[1] < w[0]) {
                return Err(bad("equilibria.gamma_ratios: must be sorted ascending"));
            }
            Ok(v.len())
        }
        Experiment::Gspt => {
            let v = config.gspt.as_ref().expect("checked").gamma_ratios.values("gspt.gamma_ratios")?;
            ratios_ok("gspt.gamma_ratios", &v)?;
            if v.windows(2).any(|w| w[1] < w[0]) {
                return Err(bad("gspt.gamma_ratios: must be sorted ascending"));
            }
            Ok(v.len())
        }
        Experiment::LyapunovMap => {
            let b = config.lyapunov_map.as_ref().expect("checked");
            let e = b.energy.axis("E", "lyapunov-map.energy")?;
            let g = b.gamma_ratio.axis("gamma_ratio", "lyapunov-map.gamma_ratio")?;
            if g.min < 0.0 {
                return Err(bad("lyapunov-map.gamma_ratio.min: must be >= 0"));
            }
            if b.n_ic == 0 {
                return Err(bad("lyapunov-map.n_ic: must be >= 1"));
            }
            b.lyapunov.validate().map_err(|e| scoped("lyapunov-map.lyapunov", e))?;
            Ok(e.count * g.count * b.n_ic)
        }
        Experiment::QpMap => {
            let b = config.qp_map.as_ref().expect("checked");
            if !b.energy.is_finite() {
                return Err(bad("qp-map.energy: must be finite"));
            }
            let q = b.atom_q.axis("Q", "qp-map.Q")?;
            let p = b.atom_p.axis("P", "qp-map.P")?;
            if b.n_per_cell == 0 {
                return Err(bad("qp-map.n_per_cell: must be >= 1"));
            }
            b.lyapunov.validate().map_err(|e| scoped("qp-map.lyapunov", e))?;
            Ok(q.count * p.count * b.n_per_cell)
        }
        Experiment::Rosenstein => {
            let b = config.rosenstein.as_mut().expect("checked");
            match (&b.input, &b.simulate) {
                (Some(_), Some(_)) => return Err(bad("rosenstein.simulate: give either `input` or `simulate`, not both")),
                (None, None) => return Err(bad("rosenstein.input: one of `input` or `simulate` is required")),
                (Some(p), None) => {
                    let p = base_dir.join(p);
                    if !p.is_file() {
                        return Err(bad(format!("rosenstein.input: no such file {}", p.display())));
                    }
                    b.input = Some(p);
                }
                (None, Some(s)) => {
                    positive("rosenstein.simulate.t_end", s.t_end)?;
                    s.integrator.validate().map_err(|e| scoped("rosenstein.simulate.integrator", e))?;
                }
            }
            if let Some(w) = b.smoothing {
                positive("rosenstein.smoothing", w)?;
            }
            let est = &b.estimator;
            positive("rosenstein.estimator.horizon", est.horizon)?;
            if let Some(w) = est.fit_window {
                positive("rosenstein.estimator.fit_window", w)?;
            }
            if let Some(t) = est.theiler {
                if !(t.is_finite() && t >= 0.0) {
                    return Err(bad("rosenstein.estimator.theiler: must be >= 0"));
                }
            }
            Ok(1)
        }
        Experiment::Otoc => {
            let b = config.otoc.as_mut().expect("checked");
            b.ensemble.seed = seed;
            b.ensemble.validate().map_err(|e| scoped("otoc.ensemble", e))?;
            if let Some((a, z)) = b.fit_range {
                if !(a >= 0.0 && z > a && z <= b.ensemble.t_end) {
                    return Err(bad("otoc.fit_range: need 0 <= start < end <= ensemble.t_end"));
                }
            }
            if let Some(l) = &b.lyapunov {
                l.validate().map_err(|e| scoped("otoc.lyapunov", e))?;
            }
            Ok(b.ensemble.n_traj)
        }
        Experiment::Esqpt => {
            let b = config.esqpt.as_mut().expect("checked");
            let v = b.gamma_ratios.values("esqpt.gamma_ratios")?;
            ratios_ok("esqpt.gamma_ratios", &v)?;
            b.probe.seed = seed;
            b.probe.validate().map_err(|e| scoped("esqpt.probe", e))?;
            Ok(v.len() * b.probe.n_rep)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn try_plan(text: &str, e: Experiment) -> Result<Plan, ConfigError> {
        plan(parse(text)?, e, &Overrides::default(), PathBuf::new())
    }

    #[test]
    fn range_grid_is_inclusive() {
        let g = Grid::Range { min: 0.0, max: 3.0, step: 0.05 };
        let v = g.values("g").unwrap();
        assert_eq!(v.len(), 61);
        assert!((v[60] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn names_offending_fields() {
        let base = r#""params": {"omega": 1, "omega0": 1, "gamma": 1}"#;
        let err = |t: &str, e| try_plan(t, e).unwrap_err().0;
        let neg = r#"{"params": {"omega": -1, "omega0": 1, "gamma": 1}, "gspt": {"gamma_ratios": [1]}}"#;
        assert!(err(neg, Experiment::Gspt).starts_with("params.omega"));
        let typo = format!(r#"{{{base}, "gspt": {{"gamma_ratio": [1]}}}}"#);
        assert!(err(&typo, Experiment::Gspt).contains("gamma_ratio"));
        let wrong_type = format!(r#"{{{base}, "simulate": {{"initial": [0,0,0,0], "t_end": "x"}}}}"#);
        assert!(err(&wrong_type, Experiment::Simulate).starts_with("simulate.t_end"));
        let no_seed = format!(r#"{{{base}, "esqpt": {{"gamma_ratios": [1]}}}}"#);
        assert!(err(&no_seed, Experiment::Esqpt).starts_with("seed"));
        let two = format!(r#"{{{base}, "gspt": {{"gamma_ratios": [1]}}, "equilibria": {{"gamma_ratios": [1]}}}}"#);
        assert!(err(&two, Experiment::Gspt).starts_with("equilibria"));
        let outside = format!(r#"{{{base}, "simulate": {{"initial": [0,0,0,3], "t_end": 1}}}}"#);
        assert!(err(&outside, Experiment::Simulate).starts_with("simulate.initial"));
        let mismatch = format!(r#"{{"experiment": "otoc", {base}, "gspt": {{"gamma_ratios": [1]}}}}"#);
        assert!(err(&mismatch, Experiment::Gspt).starts_with("experiment"));
    }

    #[test]
    fn counts_work_items() {
        let t = r#"{"params": {"omega": 1, "omega0": 1, "gamma": 1}, "seed": 1,
            "qp-map": {"energy": -1.5, "Q": {"min": -2, "max": 2, "count": 4}, "P": {"min": -2, "max": 2, "count": 3}, "n_per_cell": 2}}"#;
        assert_eq!(try_plan(t, Experiment::QpMap).unwrap().work_items, 24);
    }
}
