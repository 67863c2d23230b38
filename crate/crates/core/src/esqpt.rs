//! Noise probe of the `(0,0,0,0)` equilibrium across the coupling.

use std::io::Write;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegratorConfig, Trajectory};
use crate::model::{ModelParams, PhaseState};
use crate::rng;
use crate::sweep::{schedule, Workers};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stationary,
    Marginal,
    Escaping,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Stationary => "stationary",
            Verdict::Marginal => "marginal",
            Verdict::Escaping => "escaping",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EsqptConfig {
    /// Standard deviation of the per-coordinate perturbation.
    pub sigma_noise: f64,
    pub t_end: f64,
    pub n_rep: usize,
    /// Stationary below `k_stat · sigma_noise`.
    pub k_stat: f64,
    /// Escaping above this absolute excursion.
    pub k_esc: f64,
    pub seed: u64,
    pub integrator: IntegratorConfig,
}

impl Default for EsqptConfig {
    fn default() -> Self {
        EsqptConfig {
            sigma_noise: 1e-3,
            t_end: 100.0,
            n_rep: 8,
            k_stat: 20.0,
            k_esc: 0.5,
            seed: 0,
            integrator: IntegratorConfig::default(),
        }
    }
}

impl EsqptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_noise.is_finite() && self.sigma_noise >= 0.0 && self.sigma_noise < 0.5) {
            return Err(Error::invalid("sigma_noise", "must be in [0, 0.5)"));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::invalid("t_end", "must be > 0"));
        }
        if self.n_rep == 0 {
            return Err(Error::invalid("n_rep", "must be >= 1"));
        }
        if !(self.k_stat > 0.0 && self.k_esc > 0.0) {
            return Err(Error::invalid("k_stat", "thresholds must be > 0"));
        }
        self.integrator.validate()
    }

    pub fn classify(&self, max_excursion: f64) -> Verdict {
        if max_excursion > self.k_esc {
            Verdict::Escaping
        } else if max_excursion == 0.0 || max_excursion < self.k_stat * self.sigma_noise {
            Verdict::Stationary
        } else {
            Verdict::Marginal
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub max_excursion: f64,
    pub verdict: Verdict,
}

/// Worst case over the noise draws at one coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsqptVerdict {
    pub gamma_ratio: f64,
    pub max_excursion: f64,
    pub verdict: Verdict,
    /// Repetition that produced the worst case.
    pub worst_rep: usize,
    pub reps: Vec<RepOutcome>,
    /// Path of a dumped trajectory, when one was written.
    pub trajectory_ref: Option<String>,
}

/// Perturbed initial state for repetition `rep`; depends only on the seed,
/// the coupling ratio and `rep`.
pub fn initial_state(gamma_ratio: f64, rep: usize, cfg: &EsqptConfig) -> Result<PhaseState> {
    if cfg.sigma_noise == 0.0 {
        return Ok(PhaseState::ORIGIN);
    }
    let normal = Normal::new(0.0, cfg.sigma_noise).map_err(|e| Error::invalid("sigma_noise", e.to_string()))?;
    let mut rng = rng::stream(cfg.seed, &[gamma_ratio.to_bits(), rep as u64]);
    let x = [(); 4].map(|_| normal.sample(&mut rng));
    PhaseState::from_array(x)
}

/// Trajectory of one repetition, for dumps.
pub fn probe_trajectory(gamma_ratio: f64, rep: usize, mp_base: &ModelParams, cfg: &EsqptConfig) -> Result<Trajectory> {
    let mp = mp_base.with_gamma_ratio(gamma_ratio);
    mp.validate()?;
    integrate(&initial_state(gamma_ratio, rep, cfg)?, &mp, cfg.t_end, &cfg.integrator)
}

fn max_excursion(traj: &Trajectory) -> f64 {
    traj.states
        .iter()
        .map(|s| s.distance(&PhaseState::ORIGIN))
        .fold(0.0, f64::max)
}

pub fn probe(gamma_ratio: f64, mp_base: &ModelParams, cfg: &EsqptConfig, workers: Workers) -> Result<EsqptVerdict> {
    probe_grid(&[gamma_ratio], mp_base, cfg, workers).map(|mut v| v.remove(0))
}

/// Every `(γ/γ_c, rep)` pair is an independent work item.
pub fn probe_grid(ratios: &[f64], mp_base: &ModelParams, cfg: &EsqptConfig, workers: Workers) -> Result<Vec<EsqptVerdict>> {
    mp_base.validate()?;
    cfg.validate()?;
    if let Some(r) = ratios.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(Error::invalid("gamma_ratio", format!("must be finite and >= 0, got {r}")));
    }
    let items: Vec<(usize, usize)> = (0..ratios.len())
        .flat_map(|g| (0..cfg.n_rep).map(move |r| (g, r)))
        .collect();
    let excursions = schedule(&items, workers, |_, &(g, rep)| {
        probe_trajectory(ratios[g], rep, mp_base, cfg).map(|t| max_excursion(&t))
    })?;
    Ok(ratios
        .iter()
        .enumerate()
        .map(|(g, &gamma_ratio)| {
            let reps: Vec<RepOutcome> = excursions[g * cfg.n_rep..(g + 1) * cfg.n_rep]
                .iter()
                .enumerate()
                .map(|(rep, &x)| RepOutcome {
                    rep,
                    max_excursion: x,
                    verdict: cfg.classify(x),
                })
                .collect();
            let worst = reps
                .iter()
                .max_by(|a, b| a.max_excursion.total_cmp(&b.max_excursion))
                .copied()
                .expect("n_rep >= 1");
            EsqptVerdict {
                gamma_ratio,
                max_excursion: worst.max_excursion,
                verdict: worst.verdict,
                worst_rep: worst.rep,
                reps,
                trajectory_ref: None,
            }
        })
        .collect())
}

/// One row per repetition: `gamma_ratio,rep,max_excursion,verdict`.
pub fn write_csv<W: Write>(mut w: W, verdicts: &[EsqptVerdict]) -> std::io::Result<()> {
    writeln!(w, "gamma_ratio,rep,max_excursion,verdict")?;
    for v in verdicts {
        for r in &v.reps {
            writeln!(w, "{},{},{:.16e},{}", v.gamma_ratio, r.rep, r.max_excursion, r.verdict)?;
        }
    }
    Ok(())
}
