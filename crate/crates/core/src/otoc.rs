//! Ensemble variance growth of a scalar observable (classical OTOC proxy)
//! and its comparison with the mean largest Lyapunov exponent.

use std::io::Write;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::chaos::{lyapunov_largest, LyapunovConfig};
use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegratorConfig};
use crate::model::{hamiltonian_raw, ModelParams, PhaseState, BOUNDARY_EPS};
use crate::rng;
use crate::sweep::{schedule, Workers};

/// Scalar read off a state. Circuit names are accepted as aliases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Channel {
    #[serde(rename = "v_c1", alias = "p")]
    P,
    #[default]
    #[serde(rename = "i_l1", alias = "q")]
    Q,
    #[serde(rename = "v_c2", alias = "P")]
    AtomP,
    #[serde(rename = "i_l2", alias = "Q")]
    AtomQ,
    #[serde(rename = "energy", alias = "E")]
    Energy,
}

impl Channel {
    pub fn eval(self, s: &PhaseState, mp: &ModelParams) -> f64 {
        match self {
            Channel::P => s.p(),
            Channel::Q => s.q(),
            Channel::AtomP => s.atom_p(),
            Channel::AtomQ => s.atom_q(),
            Channel::Energy => hamiltonian_raw(s.as_array(), mp),
        }
    }
}

impl std::str::FromStr for Channel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown channel {s:?}"))
    }
}

/// Per-coordinate variance `2/N` for `N` atoms.
pub fn width_for_atoms(n_atoms: f64) -> f64 {
    2.0 / n_atoms
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub center: PhaseState,
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    /// Per-coordinate Gaussian variance.
    #[serde(default = "default_width")]
    pub width_variance: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default)]
    pub observable: Channel,
    #[serde(default)]
    pub integrator: IntegratorConfig,
}

fn default_n_traj() -> usize {
    256
}
fn default_width() -> f64 {
    width_for_atoms(100.0)
}
fn default_t_end() -> f64 {
    60.0
}

impl EnsembleConfig {
    pub fn new(center: PhaseState) -> Self {
        EnsembleConfig {
            center,
            n_traj: default_n_traj(),
            width_variance: default_width(),
            seed: 0,
            t_end: default_t_end(),
            observable: Channel::default(),
            integrator: IntegratorConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        PhaseState::from_array(self.center.to_array())?;
        if self.n_traj < 2 {
            return Err(Error::invalid("n_traj", "must be >= 2"));
        }
        if !(self.width_variance.is_finite() && self.width_variance > 0.0) {
            return Err(Error::invalid("width_variance", "must be > 0"));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::invalid("t_end", "must be > 0"));
        }
        self.integrator.validate()
    }
}

/// Draws `n_traj` Gaussian perturbations of the center, redrawing those that
/// leave the atomic disk.
pub fn sample_ensemble(cfg: &EnsembleConfig) -> Result<Vec<PhaseState>> {
    cfg.validate()?;
    let normal = Normal::new(0.0, cfg.width_variance.sqrt()).map_err(|e| Error::invalid("width_variance", e.to_string()))?;
    let mut rng = rng::stream(cfg.seed, &[0x07_0c]);
    let c = cfg.center.to_array();
    let mut out = Vec::with_capacity(cfg.n_traj);
    let (mut drawn, mut rejected) = (0usize, 0usize);
    while out.len() < cfg.n_traj {
        let s = [
            c[0] + normal.sample(&mut rng),
            c[1] + normal.sample(&mut rng),
            c[2] + normal.sample(&mut rng),
            c[3] + normal.sample(&mut rng),
        ];
        drawn += 1;
        if 4.0 - s[2] * s[2] - s[3] * s[3] > BOUNDARY_EPS {
            out.push(PhaseState::raw(s));
        } else {
            rejected += 1;
            if rejected > 9 * cfg.n_traj {
                return Err(Error::RejectionOverflow { rejected, drawn });
            }
        }
    }
    if rejected * 10 > drawn * 9 {
        return Err(Error::RejectionOverflow { rejected, drawn });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSeries {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    /// Unbiased (n − 1) variance.
    pub variance: Vec<f64>,
}

impl EnsembleSeries {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,mean,variance")?;
        for ((t, m), v) in self.times.iter().zip(&self.mean).zip(&self.variance) {
            writeln!(w, "{t:.16e},{m:.16e},{v:.16e}")?;
        }
        Ok(())
    }
}

/// Evolves every sample and reduces the observable in trajectory order.
pub fn evolve_ensemble(
    samples: &[PhaseState],
    mp: &ModelParams,
    cfg: &EnsembleConfig,
    workers: Workers,
) -> Result<EnsembleSeries> {
    cfg.validate()?;
    if samples.len() < 2 {
        return Err(Error::invalid("samples", "need at least two trajectories"));
    }
    let runs = schedule(samples, workers, |i, s| {
        let traj = integrate(s, mp, cfg.t_end, &cfg.integrator).map_err(|e| Error::Trajectory {
            index: i,
            source: Box::new(e),
        })?;
        let obs: Vec<f64> = traj.states.iter().map(|st| cfg.observable.eval(st, mp)).collect();
        Ok((traj.times, obs))
    })
    .map_err(|e| match e {
        Error::WorkItem { source, .. } => *source,
        other => other,
    })?;
    let times = runs[0].0.clone();
    // Welford update in trajectory order.
    let mut mean = vec![0.0; times.len()];
    let mut variance = vec![0.0; times.len()];
    for (k, (_, obs)) in runs.iter().enumerate() {
        let w = (k + 1) as f64;
        for ((m, v), &x) in mean.iter_mut().zip(variance.iter_mut()).zip(obs) {
            let d = x - *m;
            *m += d / w;
            *v += d * (x - *m);
        }
    }
    let n = runs.len() as f64;
    variance.iter_mut().for_each(|v| *v /= n - 1.0);
    Ok(EnsembleSeries { times, mean, variance })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    /// Λ, slope of `ln σ²` in s⁻¹.
    pub rate: f64,
    pub fit_range: (f64, f64),
    /// Decades of growth between `σ²(0)` and the saturation level.
    pub decades: f64,
    pub auto_range: bool,
}

/// Least-squares slope of `ln σ²(t)`.
///
/// The automatic range starts where `σ²` first exceeds ten times its initial
/// value and ends where it first reaches 80% of its late-time mean (mean
/// over the final 20% of the series). A late-time mean below ten times the
/// initial value counts as no growth.
pub fn fit_growth_rate(times: &[f64], variance: &[f64], fit_range: Option<(f64, f64)>) -> Result<GrowthFit> {
    let n = times.len();
    if n != variance.len() || n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n.min(variance.len()) });
    }
    let tail = &variance[(4 * n) / 5..];
    let late = tail.iter().sum::<f64>() / tail.len() as f64;
    let v0 = variance[0];
    let decades = if v0 > 0.0 && late > 0.0 { (late / v0).log10() } else { 0.0 };
    let (i0, i1, auto) = match fit_range {
        Some((a, b)) => {
            if !(a < b) || a < times[0] || b > times[n - 1] {
                return Err(Error::invalid("fit_range", "must satisfy t_start < t_end within the series"));
            }
            let i0 = times.partition_point(|&t| t < a);
            let i1 = times.partition_point(|&t| t <= b).saturating_sub(1);
            (i0, i1, false)
        }
        None => {
            if !(late > 10.0 * v0) {
                return Err(Error::NoGrowth);
            }
            let i0 = variance.iter().position(|&v| v > 10.0 * v0 && v > 0.0).ok_or(Error::NoGrowth)?;
            let i1 = (i0..n).find(|&i| variance[i] >= 0.8 * late).unwrap_or(n - 1);
            (i0, i1.max(i0 + 2).min(n - 1), true)
        }
    };
    if i1 < i0 + 2 {
        return Err(Error::InsufficientData { needed: 3, got: i1 + 1 - i0.min(i1 + 1) });
    }
    if variance[i0..=i1].iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Degenerate("variance must be positive on the fit range".into()));
    }
    let xs = &times[i0..=i1];
    let ys: Vec<f64> = variance[i0..=i1].iter().map(|v| v.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(GrowthFit {
        rate: sxy / sxx,
        fit_range: (xs[0], xs[xs.len() - 1]),
        decades,
        auto_range: auto,
    })
}

/// Mean of the largest Lyapunov exponent over the ensemble members.
pub fn mean_lyapunov(samples: &[PhaseState], mp: &ModelParams, cfg: &LyapunovConfig, workers: Workers) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("samples", "empty ensemble"));
    }
    let lambdas = schedule(samples, workers, |i, s| {
        lyapunov_largest(s, mp, cfg)
            .map(|e| e.lambda)
            .map_err(|e| Error::Trajectory {
                index: i,
                source: Box::new(e),
            })
    })?;
    Ok(lambdas.iter().sum::<f64>() / lambdas.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtocResult {
    pub series: EnsembleSeries,
    pub growth: GrowthFit,
    pub lambda_mean: Option<f64>,
    /// `Λ / (2 λ̂)`.
    pub ratio: Option<f64>,
}

impl OtocResult {
    pub fn report_json(&self, mp: &ModelParams, cfg: &EnsembleConfig) -> serde_json::Value {
        serde_json::json!({
            "Lambda": self.growth.rate,
            "fit_range": [self.growth.fit_range.0, self.growth.fit_range.1],
            "fit_range_auto": self.growth.auto_range,
            "decades": self.growth.decades,
            "lambda_mean": self.lambda_mean,
            "ratio": self.ratio,
            "seed": cfg.seed,
            "params": mp,
            "config": cfg,
            "saturation": "finite size of the accessible phase space",
        })
    }
}

/// Sample, evolve, fit and optionally compare with the mean exponent.
pub fn run_otoc(
    mp: &ModelParams,
    cfg: &EnsembleConfig,
    fit_range: Option<(f64, f64)>,
    lyapunov: Option<&LyapunovConfig>,
    workers: Workers,
) -> Result<OtocResult> {
    mp.validate()?;
    let samples = sample_ensemble(cfg)?;
    let series = evolve_ensemble(&samples, mp, cfg, workers)?;
    let growth = fit_growth_rate(&series.times, &series.variance, fit_range)?;
    let lambda_mean = lyapunov
        .map(|lc| mean_lyapunov(&samples, mp, lc, workers))
        .transpose()?;
    let ratio = lambda_mean.map(|l| growth.rate / (2.0 * l));
    Ok(OtocResult {
        series,
        growth,
        lambda_mean,
        ratio,
    })
}
