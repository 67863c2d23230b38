//! Largest Lyapunov exponent from tangent dynamics, chaoticity maps, energy
//! shell geometry, and Poincaré sections.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::equilibria::ground_state_energy;
use crate::error::{Error, Result};
use crate::integrator::{integrate_with_tangents, IntegratorConfig, TangentState, Trajectory};
use crate::model::{solve_q_on_shell, ModelParams, PhaseState, BOUNDARY_EPS};
use crate::rng;
use crate::sweep::{schedule, Workers};

/// Exponents below this are indistinguishable from zero.
pub const NULL_THRESHOLD: f64 = 0.004;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LyapunovConfig {
    /// Total integration time `T` (s).
    pub t_total: f64,
    pub renorm_dt: f64,
    /// Initial span excluded from the average (s).
    pub transient: f64,
    pub null_threshold: f64,
    /// Record the running estimate every this many renormalizations.
    pub history_stride: usize,
    pub integrator: IntegratorConfig,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig {
            t_total: 2000.0,
            renorm_dt: 0.1,
            transient: 100.0,
            null_threshold: NULL_THRESHOLD,
            history_stride: 10,
            integrator: IntegratorConfig::default(),
        }
    }
}

impl LyapunovConfig {
    pub fn validate(&self) -> Result<()> {
        self.integrator.validate()?;
        if !(self.t_total.is_finite() && self.t_total > 0.0) {
            return Err(Error::invalid("t_total", "must be > 0"));
        }
        if !(self.transient >= 0.0 && self.transient < self.t_total) {
            return Err(Error::invalid("transient", "must satisfy 0 <= transient < t_total"));
        }
        if !(self.renorm_dt > 0.0 && self.renorm_dt <= self.t_total) {
            return Err(Error::invalid("renorm_dt", "must be in (0, t_total]"));
        }
        if self.history_stride == 0 {
            return Err(Error::invalid("history_stride", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    /// Exponent in s⁻¹.
    pub lambda: f64,
    /// `(t, running estimate)` pairs after the transient.
    pub history: Vec<(f64, f64)>,
    pub converged: bool,
    pub is_null: bool,
}

impl LyapunovEstimate {
    pub(crate) fn new(lambda: f64, history: Vec<(f64, f64)>, converged: bool, null_threshold: f64) -> Self {
        LyapunovEstimate {
            lambda,
            history,
            converged,
            is_null: lambda < null_threshold,
        }
    }
}

/// Relative change of the running estimate over the last 10% of the run.
const CONVERGENCE_TOL: f64 = 5e-3;

/// Benettin estimate of the largest exponent along the orbit of `s0`, with
/// a single tangent vector started along `p`.
pub fn lyapunov_largest(s0: &PhaseState, mp: &ModelParams, cfg: &LyapunovConfig) -> Result<LyapunovEstimate> {
    cfg.validate()?;
    let ts = TangentState {
        base: *s0,
        deltas: vec![[1.0, 0.0, 0.0, 0.0]],
    };
    let t_check = cfg.transient + 0.9 * (cfg.t_total - cfg.transient);
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut at_check: Option<f64> = None;
    let mut history = Vec::new();
    integrate_with_tangents(&ts, mp, cfg.t_total, cfg.renorm_dt, &cfg.integrator, |ev| {
        // Intervals ending inside the transient are discarded.
        if ev.time <= cfg.transient + 1e-9 * cfg.renorm_dt {
            return;
        }
        sum += ev.log_stretch[0];
        count += 1;
        let running = sum / (ev.time - cfg.transient);
        if at_check.is_none() && ev.time >= t_check - 1e-9 {
            at_check = Some(running);
        }
        if count.is_multiple_of(cfg.history_stride) {
            history.push((ev.time, running));
        }
    })?;
    let lambda = sum / (cfg.t_total - cfg.transient);
    if history.last().is_none_or(|&(t, _)| t < cfg.t_total - 1e-9) {
        history.push((cfg.t_total, lambda));
    }
    let converged = at_check.is_some_and(|c| (lambda - c).abs() <= CONVERGENCE_TOL * lambda.abs());
    Ok(LyapunovEstimate::new(lambda, history, converged, cfg.null_threshold))
}

/// Uniform grid: `count` nodes spanning `[min, max]` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(name: impl Into<String>, min: f64, max: f64, count: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && max >= min) {
            return Err(Error::invalid("axis", format!("bad range [{min}, {max}]")));
        }
        if count == 0 {
            return Err(Error::invalid("axis", "count must be >= 1"));
        }
        Ok(Axis {
            name: name.into(),
            min,
            max,
            count,
        })
    }

    /// Node `i`; nodes of an axis symmetric about zero are exact negatives
    /// of each other.
    pub fn value(&self, i: usize) -> f64 {
        if self.count == 1 {
            return self.min;
        }
        let n1 = (self.count - 1) as f64;
        let center = 0.5 * (self.min + self.max);
        let half = 0.5 * (self.max - self.min);
        center + half * (2.0 * i as f64 - n1) / n1
    }

    pub fn spacing(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.max - self.min) / (self.count - 1) as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }
}

/// Cells of a 2-D grid at which the energy shell (with fixed `p`) has a
/// real `q`, and the number of 4-connected components they form.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessibleRegion {
    pub q_axis: Axis,
    pub p_axis: Axis,
    /// Row-major, one row per `P` node.
    pub mask: Vec<bool>,
    pub components: usize,
}

fn accessible_at(energy: f64, p: f64, atom_p: f64, atom_q: f64, mp: &ModelParams) -> Option<Vec<f64>> {
    if 4.0 - atom_p * atom_p - atom_q * atom_q < BOUNDARY_EPS {
        return None;
    }
    let roots = solve_q_on_shell(energy, p, atom_p, atom_q, mp);
    (!roots.is_empty()).then_some(roots)
}

pub fn accessible_region(
    energy: f64,
    mp: &ModelParams,
    q_axis: &Axis,
    p_axis: &Axis,
    p_fixed: f64,
) -> Result<AccessibleRegion> {
    mp.validate()?;
    let (nx, ny) = (q_axis.count, p_axis.count);
    let mut mask = vec![false; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            mask[iy * nx + ix] = accessible_at(energy, p_fixed, p_axis.value(iy), q_axis.value(ix), mp).is_some();
        }
    }
    let components = count_components(&mask, nx, ny);
    Ok(AccessibleRegion {
        q_axis: q_axis.clone(),
        p_axis: p_axis.clone(),
        mask,
        components,
    })
}

/// 4-neighbour flood fill.
fn count_components(mask: &[bool], nx: usize, ny: usize) -> usize {
    let mut seen = vec![false; mask.len()];
    let mut stack = Vec::new();
    let mut components = 0;
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(c) = stack.pop() {
            let (x, y) = (c % nx, c / nx);
            let mut visit = |n: usize| {
                if mask[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            };
            if x > 0 {
                visit(c - 1);
            }
            if x + 1 < nx {
                visit(c + 1);
            }
            if y > 0 {
                visit(c - nx);
            }
            if y + 1 < ny {
                visit(c + nx);
            }
        }
    }
    components
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    pub params: ModelParams,
    /// Fixed energy of a `(Q, P)` map; absent for energy–coupling maps.
    pub energy: Option<f64>,
    pub n_ic: usize,
    pub seed: u64,
    pub t_total: f64,
    pub renorm_dt: f64,
    pub transient: f64,
}

/// Averaged largest exponents on a 2-D grid; `None` marks masked cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaoticityMap {
    pub x_axis: Axis,
    pub y_axis: Axis,
    /// Row-major, `y_axis.count` rows of `x_axis.count` cells.
    pub values: Vec<Option<f64>>,
    pub meta: MapMeta,
}

impl ChaoticityMap {
    pub fn get(&self, ix: usize, iy: usize) -> Option<f64> {
        self.values[iy * self.x_axis.count + ix]
    }

    pub fn mask(&self) -> Vec<bool> {
        self.values.iter().map(Option::is_some).collect()
    }

    /// Row-major grid; masked cells are left empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for row in self.values.chunks(self.x_axis.count) {
            let line: Vec<String> = row
                .iter()
                .map(|v| v.map(|x| format!("{x:.16e}")).unwrap_or_default())
                .collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Axes, parameters and sampling metadata.
    pub fn sidecar_json(&self) -> serde_json::Value {
        serde_json::json!({
            "x_axis": self.x_axis,
            "y_axis": self.y_axis,
            "params": self.meta.params,
            "energy": self.meta.energy,
            "seed": self.meta.seed,
            "n_ic": self.meta.n_ic,
            "T": self.meta.t_total,
            "renorm_dt": self.meta.renorm_dt,
            "transient": self.meta.transient,
            "layout": "row-major, one row per y_axis node; empty cells are masked",
        })
    }
}

/// Rejection draws allowed per initial condition before a cell gives up.
const MAX_IC_ATTEMPTS: usize = 200_000;

/// Uniform point of the `p = 0` shell section: `(Q, P)` uniform over the
/// accessible region, `q` one of the real roots chosen with equal odds.
fn sample_shell_point<R: Rng>(rng: &mut R, energy: f64, mp: &ModelParams) -> Option<PhaseState> {
    for _ in 0..MAX_IC_ATTEMPTS {
        let qa = rng.random_range(-2.0..2.0);
        let pa = rng.random_range(-2.0..2.0);
        if let Some(roots) = accessible_at(energy, 0.0, pa, qa, mp) {
            let pick = if roots.len() > 1 { rng.random_range(0..roots.len()) } else { 0 };
            return Some(PhaseState::raw([0.0, roots[pick], pa, qa]));
        }
    }
    None
}

/// Mean largest exponent over `n_ic` random shell points for every
/// `(γ/γ_c, E)` cell. Cells below the ground-state energy are masked.
pub fn chaoticity_map_energy_gamma(
    energy_axis: &Axis,
    ratio_axis: &Axis,
    mp_base: &ModelParams,
    n_ic: usize,
    cfg: &LyapunovConfig,
    seed: u64,
    workers: Workers,
) -> Result<ChaoticityMap> {
    mp_base.validate()?;
    cfg.validate()?;
    if n_ic == 0 {
        return Err(Error::invalid("n_ic", "must be >= 1"));
    }
    let (nx, ny) = (ratio_axis.count, energy_axis.count);
    let mut items = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let mp = mp_base.with_gamma_ratio(ratio_axis.value(ix));
            let e = energy_axis.value(iy);
            if e >= ground_state_energy(mp.gamma, &mp) {
                items.extend((0..n_ic).map(|k| (iy * nx + ix, k)));
            }
        }
    }
    let lambdas = schedule(&items, workers, |_, &(cell, k)| {
        let (ix, iy) = (cell % nx, cell / nx);
        let mp = mp_base.with_gamma_ratio(ratio_axis.value(ix));
        let mut rng = rng::stream(seed, &[cell as u64, k as u64]);
        let Some(s0) = sample_shell_point(&mut rng, energy_axis.value(iy), &mp) else {
            return Ok(None);
        };
        Ok(lyapunov_largest(&s0, &mp, cfg).ok().map(|est| est.lambda))
    })?;
    let values = reduce_cells(nx * ny, &items, &lambdas);
    Ok(ChaoticityMap {
        x_axis: ratio_axis.clone(),
        y_axis: energy_axis.clone(),
        values,
        meta: MapMeta {
            params: *mp_base,
            energy: None,
            n_ic,
            seed,
            t_total: cfg.t_total,
            renorm_dt: cfg.renorm_dt,
            transient: cfg.transient,
        },
    })
}

/// Ordered per-cell mean of the successful samples.
fn reduce_cells(n_cells: usize, items: &[(usize, usize)], lambdas: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut sums = vec![0.0; n_cells];
    let mut counts = vec![0usize; n_cells];
    for (&(cell, _), lam) in items.iter().zip(lambdas) {
        if let Some(l) = lam {
            sums[cell] += l;
            counts[cell] += 1;
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| (c > 0).then(|| s / c as f64))
        .collect()
}

/// Exponent map over the `(Q, P)` plane at fixed energy with `p = 0` and
/// `q` the smaller-magnitude shell root.
///
/// The first initial condition of a cell sits on its node; further ones
/// (when `n_per_cell > 1`) are jittered within half a grid spacing.
#[allow(clippy::too_many_arguments)]
pub fn chaoticity_map_qp(
    energy: f64,
    mp: &ModelParams,
    q_axis: &Axis,
    p_axis: &Axis,
    n_per_cell: usize,
    cfg: &LyapunovConfig,
    seed: u64,
    workers: Workers,
) -> Result<ChaoticityMap> {
    mp.validate()?;
    cfg.validate()?;
    if n_per_cell == 0 {
        return Err(Error::invalid("n_per_cell", "must be >= 1"));
    }
    let (nx, ny) = (q_axis.count, p_axis.count);
    let (hx, hy) = (0.5 * q_axis.spacing(), 0.5 * p_axis.spacing());
    let mut items = Vec::new();
    for cell in 0..nx * ny {
        let (ix, iy) = (cell % nx, cell / nx);
        if accessible_at(energy, 0.0, p_axis.value(iy), q_axis.value(ix), mp).is_some() {
            items.extend((0..n_per_cell).map(|k| (cell, k)));
        }
    }
    let lambdas = schedule(&items, workers, |_, &(cell, k)| {
        let (ix, iy) = (cell % nx, cell / nx);
        let (mut qa, mut pa) = (q_axis.value(ix), p_axis.value(iy));
        if k > 0 {
            let mut rng = rng::stream(seed, &[cell as u64, k as u64]);
            qa += hx * rng.random_range(-1.0..1.0);
            pa += hy * rng.random_range(-1.0..1.0);
        }
        let Some(roots) = accessible_at(energy, 0.0, pa, qa, mp) else {
            return Ok(None);
        };
        let s0 = PhaseState::raw([0.0, roots[0], pa, qa]);
        Ok(lyapunov_largest(&s0, mp, cfg).ok().map(|est| est.lambda))
    })?;
    let values = reduce_cells(nx * ny, &items, &lambdas);
    Ok(ChaoticityMap {
        x_axis: q_axis.clone(),
        y_axis: p_axis.clone(),
        values,
        meta: MapMeta {
            params: *mp,
            energy: Some(energy),
            n_ic: n_per_cell,
            seed,
            t_total: cfg.t_total,
            renorm_dt: cfg.renorm_dt,
            transient: cfg.transient,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Crossing {
    /// `p` goes from negative to non-negative.
    Upward,
    Downward,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPoint {
    pub t: f64,
    pub q: f64,
    pub atom_p: f64,
    pub atom_q: f64,
}

/// Linearly interpolated crossings of the `p = 0` plane.
pub fn poincare_section(traj: &Trajectory, direction: Crossing) -> Vec<SectionPoint> {
    let mut out = Vec::new();
    for i in 1..traj.len() {
        let (a, b) = (&traj.states[i - 1], &traj.states[i]);
        let up = a.p() < 0.0 && b.p() >= 0.0;
        let down = a.p() > 0.0 && b.p() <= 0.0;
        let hit = match direction {
            Crossing::Upward => up,
            Crossing::Downward => down,
            Crossing::Both => up || down,
        };
        if !hit {
            continue;
        }
        let f = a.p() / (a.p() - b.p());
        let lerp = |x: f64, y: f64| x + f * (y - x);
        out.push(SectionPoint {
            t: lerp(traj.times[i - 1], traj.times[i]),
            q: lerp(a.q(), b.q()),
            atom_p: lerp(a.atom_p(), b.atom_p()),
            atom_q: lerp(a.atom_q(), b.atom_q()),
        });
    }
    out
}
