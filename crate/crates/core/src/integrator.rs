//! Adaptive Dormand–Prince 5(4) integration of the canonical flow, with
//! optional co-evolved tangent vectors.
//!
//! Output sampling uses the method's fourth-order continuous extension, so
//! the recorded grid is independent of the step sizes actually taken.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{hamiltonian_raw, jacobian_raw, vector_field_raw, ModelParams, PhaseState, BOUNDARY_EPS};

/// Smallest step the controller may shrink to, relative to `max(1, |t|)`.
const MIN_STEP_REL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on any single step (s).
    pub max_step: f64,
    /// Output sampling interval (s).
    pub record_dt: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            max_step: 0.01,
            record_dt: 0.015,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step", self.max_step),
            ("record_dt", self.record_dt),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(field, format!("must be > 0, got {v}")));
            }
        }
        if self.record_dt < MIN_STEP_REL {
            return Err(Error::invalid("record_dt", "below the minimum step"));
        }
        Ok(())
    }
}

/// Uniformly sampled solution with the energy at every sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
    pub energies: Vec<f64>,
}

impl Trajectory {
    fn push(&mut self, t: f64, x: [f64; 4], mp: &ModelParams) {
        self.times.push(t);
        self.states.push(PhaseState::raw(x));
        self.energies.push(hamiltonian_raw(&x, mp));
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `max |E_i − E_0| / max(1, |E_0|)`.
    pub fn max_relative_energy_drift(&self) -> f64 {
        let Some(&e0) = self.energies.first() else {
            return 0.0;
        };
        let scale = e0.abs().max(1.0);
        self.energies
            .iter()
            .map(|e| (e - e0).abs() / scale)
            .fold(0.0, f64::max)
    }

    pub fn last_state(&self) -> Option<PhaseState> {
        self.states.last().copied()
    }

    /// Writes `t,p,q,P,Q,E` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,p,q,P,Q,E")?;
        for ((t, s), e) in self.times.iter().zip(&self.states).zip(&self.energies) {
            let [p, q, pa, qa] = *s.as_array();
            writeln!(
                w,
                "{t:.16e},{p:.16e},{q:.16e},{pa:.16e},{qa:.16e},{e:.16e}"
            )?;
        }
        Ok(())
    }
}

/// Base point plus tangent directions.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentState {
    pub base: PhaseState,
    pub deltas: Vec<[f64; 4]>,
}

/// Reported to the renormalization callback once per interval.
#[derive(Debug)]
pub struct RenormEvent<'a> {
    pub time: f64,
    /// `ln(‖δ‖)` gained by each vector over the interval just finished.
    pub log_stretch: &'a [f64],
    /// Running sum of `log_stretch` since t = 0.
    pub accumulated: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct TangentOutcome {
    /// Final state; non-zero tangent vectors have unit norm.
    pub state: TangentState,
    pub log_norms: Vec<f64>,
}

// Dormand–Prince tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Right-hand side of an autonomous ODE of fixed dimension.
pub(crate) trait Rhs {
    fn eval(&mut self, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

struct BaseFlow<'a>(&'a ModelParams);

impl Rhs for BaseFlow<'_> {
    fn eval(&mut self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let x = [y[0], y[1], y[2], y[3]];
        dy.copy_from_slice(&vector_field_raw(&x, self.0)?);
        Ok(())
    }
}

struct TangentFlow<'a>(&'a ModelParams);

impl Rhs for TangentFlow<'_> {
    fn eval(&mut self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let x = [y[0], y[1], y[2], y[3]];
        dy[..4].copy_from_slice(&vector_field_raw(&x, self.0)?);
        let jac = jacobian_raw(&x, self.0)?;
        for (d, out) in y[4..].chunks_exact(4).zip(dy[4..].chunks_exact_mut(4)) {
            for (row, o) in jac.iter().zip(out.iter_mut()) {
                *o = row[0] * d[0] + row[1] * d[1] + row[2] * d[2] + row[3] * d[3];
            }
        }
        Ok(())
    }
}

/// Dormand–Prince stepper state with preallocated stage buffers.
pub(crate) struct Dopri5 {
    pub t: f64,
    pub y: Vec<f64>,
    h: f64,
    cfg: IntegratorConfig,
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    y_new: Vec<f64>,
    cont: [Vec<f64>; 5],
    t_prev: f64,
    h_prev: f64,
    fsal_valid: bool,
}

impl Dopri5 {
    pub fn new(y0: &[f64], cfg: IntegratorConfig) -> Self {
        let n = y0.len();
        let z = || vec![0.0; n];
        Dopri5 {
            t: 0.0,
            y: y0.to_vec(),
            h: cfg.max_step.min(1e-3),
            cfg,
            k: [z(), z(), z(), z(), z(), z(), z()],
            stage: z(),
            y_new: z(),
            cont: [z(), z(), z(), z(), z()],
            t_prev: 0.0,
            h_prev: 0.0,
            fsal_valid: false,
        }
    }

    /// Invalidates the cached first stage after `y` was edited externally.
    pub fn reset_derivative(&mut self) {
        self.fsal_valid = false;
    }

    fn stages<R: Rhs>(&mut self, rhs: &mut R, h: f64) -> Result<f64> {
        let n = self.y.len();
        let y = &self.y;
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let stage = &mut self.stage;
        for i in 0..n {
            stage[i] = y[i] + h * A21 * k1[i];
        }
        rhs.eval(stage, k2)?;
        for i in 0..n {
            stage[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs.eval(stage, k3)?;
        for i in 0..n {
            stage[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs.eval(stage, k4)?;
        for i in 0..n {
            stage[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs.eval(stage, k5)?;
        for i in 0..n {
            stage[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs.eval(stage, k6)?;
        let y_new = &mut self.y_new;
        for i in 0..n {
            y_new[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs.eval(y_new, k7)?;

        let mut acc = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = self.cfg.abs_tol + self.cfg.rel_tol * y[i].abs().max(y_new[i].abs());
            acc += (e / sc) * (e / sc);
        }
        Ok((acc / n as f64).sqrt())
    }

    /// Advances by one accepted step that does not pass `t_limit`.
    pub fn step<R: Rhs>(&mut self, rhs: &mut R, t_limit: f64) -> Result<()> {
        if !self.fsal_valid {
            rhs.eval(&self.y, &mut self.k[0])?;
            self.fsal_valid = true;
        }
        let mut rejected = false;
        loop {
            let remaining = t_limit - self.t;
            let h = self.h.min(self.cfg.max_step).min(remaining);
            let h_min = MIN_STEP_REL * self.t.abs().max(1.0);
            if h < h_min && h < remaining {
                return Err(Error::StepFailure { time: self.t, step: h });
            }
            let err = match self.stages(rhs, h) {
                Ok(err) if err.is_finite() => err,
                Ok(_) | Err(Error::Boundary { .. }) => {
                    // A stage stepped into the singular band; retry smaller.
                    if h <= h_min {
                        let margin = 4.0 - self.y[2] * self.y[2] - self.y[3] * self.y[3];
                        return Err(Error::Boundary { margin });
                    }
                    self.h = 0.25 * h;
                    rejected = true;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if err <= 1.0 {
                self.accept(h);
                if h == remaining {
                    self.t = t_limit;
                }
                let mut fac = if err == 0.0 { 5.0 } else { 0.9 * err.powf(-0.2) };
                fac = fac.clamp(0.2, 5.0);
                if rejected {
                    fac = fac.min(1.0);
                }
                // A step clipped to `t_limit` says nothing about the natural size.
                if h == self.h.min(self.cfg.max_step) {
                    self.h = (h * fac).min(self.cfg.max_step);
                }
                return Ok(());
            }
            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            self.h = h * fac;
            rejected = true;
        }
    }

    fn accept(&mut self, h: f64) {
        let n = self.y.len();
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        for i in 0..n {
            let y0 = self.y[i];
            let y1 = self.y_new[i];
            let ydiff = y1 - y0;
            let bspl = h * k1[i] - ydiff;
            self.cont[0][i] = y0;
            self.cont[1][i] = ydiff;
            self.cont[2][i] = bspl;
            self.cont[3][i] = ydiff - h * k7[i] - bspl;
            self.cont[4][i] = h
                * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        self.t_prev = self.t;
        self.h_prev = h;
        self.t += h;
        std::mem::swap(&mut self.y, &mut self.y_new);
        let (first, rest) = self.k.split_at_mut(1);
        std::mem::swap(&mut first[0], &mut rest[5]);
    }

    /// Continuous extension over the last accepted step.
    pub fn dense(&self, t: f64, out: &mut [f64]) {
        let theta = if self.h_prev > 0.0 {
            (t - self.t_prev) / self.h_prev
        } else {
            1.0
        };
        let theta1 = 1.0 - theta;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.cont[0][i]
                + theta
                    * (self.cont[1][i]
                        + theta1
                            * (self.cont[2][i]
                                + theta * (self.cont[3][i] + theta1 * self.cont[4][i])));
        }
    }
}

fn check_t_end(t_end: f64) -> Result<()> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::invalid("t_end", format!("must be > 0, got {t_end}")));
    }
    Ok(())
}

fn interior(y: &[f64]) -> bool {
    4.0 - y[2] * y[2] - y[3] * y[3] >= BOUNDARY_EPS
}

/// Integrates from `s0` over `[0, t_end]`, sampling every `record_dt`.
///
/// Fails with [`Error::BoundaryReached`] (carrying the samples collected so
/// far) if the atomic sector comes within [`BOUNDARY_EPS`] of its rim.
pub fn integrate(
    s0: &PhaseState,
    mp: &ModelParams,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    mp.validate()?;
    check_t_end(t_end)?;
    let x0 = *s0.as_array();
    if !interior(&x0) {
        return Err(Error::Boundary {
            margin: s0.boundary_margin(),
        });
    }

    let n_rec = (t_end / cfg.record_dt * (1.0 + 1e-12)).floor() as usize;
    let mut traj = Trajectory {
        times: Vec::with_capacity(n_rec + 1),
        states: Vec::with_capacity(n_rec + 1),
        energies: Vec::with_capacity(n_rec + 1),
    };
    traj.push(0.0, x0, mp);

    let mut rhs = BaseFlow(mp);
    let mut solver = Dopri5::new(&x0, *cfg);
    let mut next = 1usize;
    let mut buf = [0.0; 4];
    let t_stop = (n_rec as f64 * cfg.record_dt).max(0.0);
    while next <= n_rec {
        match solver.step(&mut rhs, t_stop) {
            Ok(()) => {}
            Err(Error::Boundary { .. }) => {
                return Err(Error::BoundaryReached {
                    time: solver.t,
                    partial: Box::new(traj),
                })
            }
            Err(e) => return Err(e),
        }
        while next <= n_rec {
            let tr = next as f64 * cfg.record_dt;
            if tr > solver.t {
                break;
            }
            if tr == solver.t {
                buf.copy_from_slice(&solver.y);
            } else {
                solver.dense(tr, &mut buf);
            }
            traj.push(tr, buf, mp);
            next += 1;
        }
        if !interior(&solver.y) {
            return Err(Error::BoundaryReached {
                time: solver.t,
                partial: Box::new(traj),
            });
        }
    }
    Ok(traj)
}

/// Evolves the base point and tangent vectors `δ̇ = J(x(t)) δ`, rescaling
/// every vector to unit norm each `renorm_dt` seconds.
///
/// `on_renorm` sees the log-stretch of each vector over every interval.
/// Zero vectors are left untouched and contribute nothing.
pub fn integrate_with_tangents<F>(
    ts0: &TangentState,
    mp: &ModelParams,
    t_end: f64,
    renorm_dt: f64,
    cfg: &IntegratorConfig,
    mut on_renorm: F,
) -> Result<TangentOutcome>
where
    F: FnMut(&RenormEvent<'_>),
{
    cfg.validate()?;
    mp.validate()?;
    check_t_end(t_end)?;
    if !(renorm_dt.is_finite() && renorm_dt > 0.0) {
        return Err(Error::invalid("renorm_dt", format!("must be > 0, got {renorm_dt}")));
    }
    if ts0.deltas.is_empty() {
        return Err(Error::invalid("deltas", "at least one tangent vector is required"));
    }
    if ts0.deltas.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("deltas", "non-finite tangent component"));
    }
    let x0 = *ts0.base.as_array();
    if !interior(&x0) {
        return Err(Error::Boundary {
            margin: ts0.base.boundary_margin(),
        });
    }

    let m = ts0.deltas.len();
    let mut y = Vec::with_capacity(4 + 4 * m);
    y.extend_from_slice(&x0);
    for d in &ts0.deltas {
        let norm = norm4(d);
        if norm > 0.0 {
            y.extend(d.iter().map(|v| v / norm));
        } else {
            y.extend_from_slice(d);
        }
    }

    let mut rhs = TangentFlow(mp);
    let mut solver = Dopri5::new(&y, *cfg);
    let mut stretch = vec![0.0; m];
    let mut accumulated = vec![0.0; m];
    let n_seg = ((t_end / renorm_dt) - 1e-9).ceil().max(1.0) as usize;
    for seg in 1..=n_seg {
        let t_seg = if seg == n_seg {
            t_end
        } else {
            seg as f64 * renorm_dt
        };
        while solver.t < t_seg {
            match solver.step(&mut rhs, t_seg) {
                Ok(()) => {}
                Err(Error::Boundary { .. }) => {
                    return Err(boundary_with_state(&solver, mp));
                }
                Err(e) => return Err(e),
            }
            if !interior(&solver.y) {
                return Err(boundary_with_state(&solver, mp));
            }
        }
        solver.t = t_seg;
        for (i, chunk) in solver.y[4..].chunks_exact_mut(4).enumerate() {
            let norm = (chunk.iter().map(|v| v * v).sum::<f64>()).sqrt();
            if norm > 0.0 && norm.is_finite() {
                chunk.iter_mut().for_each(|v| *v /= norm);
                stretch[i] = norm.ln();
            } else {
                stretch[i] = 0.0;
            }
            accumulated[i] += stretch[i];
        }
        solver.reset_derivative();
        on_renorm(&RenormEvent {
            time: t_seg,
            log_stretch: &stretch,
            accumulated: &accumulated,
        });
    }

    let base = PhaseState::raw([solver.y[0], solver.y[1], solver.y[2], solver.y[3]]);
    let deltas = solver.y[4..]
        .chunks_exact(4)
        .map(|c| [c[0], c[1], c[2], c[3]])
        .collect();
    Ok(TangentOutcome {
        state: TangentState { base, deltas },
        log_norms: accumulated,
    })
}

fn boundary_with_state(solver: &Dopri5, mp: &ModelParams) -> Error {
    let mut partial = Trajectory::default();
    partial.push(solver.t, [solver.y[0], solver.y[1], solver.y[2], solver.y[3]], mp);
    Error::BoundaryReached {
        time: solver.t,
        partial: Box::new(partial),
    }
}

pub(crate) fn norm4(d: &[f64; 4]) -> f64 {
    d.iter().map(|v| v * v).sum::<f64>().sqrt()
}
