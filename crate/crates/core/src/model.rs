//! Classical Dicke Hamiltonian per particle and its canonical flow.
//!
//! State ordering is always `(p, q, P, Q)`: the field pair first, the
//! atomic pair second. The atomic sector lives on the disk `P² + Q² ≤ 4`;
//! the flow is singular on its rim, so evaluation refuses states closer
//! than [`BOUNDARY_EPS`] to it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum admissible value of `4 − P² − Q²` for flow evaluation.
pub const BOUNDARY_EPS: f64 = 1e-9;

/// Slack allowed on `P² + Q² ≤ 4` when validating states.
pub const DOMAIN_TOL: f64 = 1e-9;

/// Frequencies and coupling, all in s⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega: f64,
    pub omega0: f64,
    pub gamma: f64,
}

impl ModelParams {
    pub fn new(omega: f64, omega0: f64, gamma: f64) -> Result<Self> {
        let mp = ModelParams {
            omega,
            omega0,
            gamma,
        };
        mp.validate()?;
        Ok(mp)
    }

    /// Resonant parameters `ω = ω₀ = 1` at coupling `ratio · γ_c`.
    pub fn resonant(ratio: f64) -> Self {
        ModelParams {
            omega: 1.0,
            omega0: 1.0,
            gamma: 0.5 * ratio,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::invalid("omega", format!("must be > 0, got {}", self.omega)));
        }
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(Error::invalid("omega0", format!("must be > 0, got {}", self.omega0)));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::invalid("gamma", format!("must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Critical coupling `√(ωω₀)/2`.
    pub fn gamma_c(&self) -> f64 {
        (self.omega * self.omega0).sqrt() / 2.0
    }

    pub fn gamma_ratio(&self) -> f64 {
        self.gamma / self.gamma_c()
    }

    /// Same frequencies, coupling set to `ratio · γ_c`.
    pub fn with_gamma_ratio(&self, ratio: f64) -> Self {
        ModelParams {
            gamma: ratio * self.gamma_c(),
            ..*self
        }
    }
}

/// Canonical coordinates `(p, q, P, Q)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct PhaseState([f64; 4]);

impl PhaseState {
    pub const ORIGIN: PhaseState = PhaseState([0.0; 4]);

    /// Builds a state, rejecting non-finite values and `P² + Q² > 4`.
    pub fn new(p: f64, q: f64, atom_p: f64, atom_q: f64) -> Result<Self> {
        Self::from_array([p, q, atom_p, atom_q])
    }

    pub fn from_array(x: [f64; 4]) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("state", format!("non-finite component in {x:?}")));
        }
        let s = PhaseState(x);
        let r2 = s.atomic_radius_sq();
        if r2 > 4.0 + DOMAIN_TOL {
            return Err(Error::Domain { radius_sq: r2 });
        }
        Ok(s)
    }

    pub(crate) fn raw(x: [f64; 4]) -> Self {
        PhaseState(x)
    }

    pub fn p(&self) -> f64 {
        self.0[0]
    }
    pub fn q(&self) -> f64 {
        self.0[1]
    }
    /// Atomic momentum `P`.
    pub fn atom_p(&self) -> f64 {
        self.0[2]
    }
    /// Atomic coordinate `Q`.
    pub fn atom_q(&self) -> f64 {
        self.0[3]
    }

    pub fn as_array(&self) -> &[f64; 4] {
        &self.0
    }

    pub fn to_array(self) -> [f64; 4] {
        self.0
    }

    pub fn atomic_radius_sq(&self) -> f64 {
        self.0[2] * self.0[2] + self.0[3] * self.0[3]
    }

    /// `4 − P² − Q²`.
    pub fn boundary_margin(&self) -> f64 {
        4.0 - self.atomic_radius_sq()
    }

    /// `(q, Q) → (−q, −Q)`, which leaves the Hamiltonian unchanged.
    pub fn parity(&self) -> Self {
        let [p, q, pa, qa] = self.0;
        PhaseState([p, -q, pa, -qa])
    }

    /// `(p, P) → (−p, −P)`: reverses the direction of time.
    pub fn time_reversed(&self) -> Self {
        let [p, q, pa, qa] = self.0;
        PhaseState([-p, q, -pa, qa])
    }

    pub fn distance(&self, other: &PhaseState) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl From<PhaseState> for [f64; 4] {
    fn from(s: PhaseState) -> Self {
        s.0
    }
}

impl TryFrom<[f64; 4]> for PhaseState {
    type Error = Error;
    fn try_from(x: [f64; 4]) -> Result<Self> {
        PhaseState::from_array(x)
    }
}

fn checked_root(x: &[f64; 4]) -> Result<f64> {
    let margin = 4.0 - x[2] * x[2] - x[3] * x[3];
    if margin < BOUNDARY_EPS || !margin.is_finite() {
        return Err(Error::Boundary { margin });
    }
    Ok(margin.sqrt())
}

/// Energy per particle (units of ω₀).
pub fn hamiltonian(s: &PhaseState, mp: &ModelParams) -> Result<f64> {
    let r2 = s.atomic_radius_sq();
    if r2 > 4.0 + DOMAIN_TOL {
        return Err(Error::Domain { radius_sq: r2 });
    }
    Ok(hamiltonian_raw(s.as_array(), mp))
}

/// Unchecked energy; the square root argument is clamped at zero.
pub(crate) fn hamiltonian_raw(x: &[f64; 4], mp: &ModelParams) -> f64 {
    let [p, q, pa, qa] = *x;
    let r = (4.0 - pa * pa - qa * qa).max(0.0).sqrt();
    0.5 * mp.omega * (p * p + q * q) + 0.5 * mp.omega0 * (pa * pa + qa * qa) + mp.gamma * q * qa * r
        - mp.omega0
}

/// Right-hand side of the equations of motion.
pub fn vector_field(s: &PhaseState, mp: &ModelParams) -> Result<[f64; 4]> {
    vector_field_raw(s.as_array(), mp)
}

pub(crate) fn vector_field_raw(x: &[f64; 4], mp: &ModelParams) -> Result<[f64; 4]> {
    let r = checked_root(x)?;
    let [p, q, pa, qa] = *x;
    let g = mp.gamma;
    Ok([
        -g * qa * r - q * mp.omega,
        p * mp.omega,
        g * q * qa * qa / r - g * q * r - qa * mp.omega0,
        pa * mp.omega0 - g * pa * q * qa / r,
    ])
}

/// Analytic Jacobian of [`vector_field`] with respect to `(p, q, P, Q)`.
pub fn jacobian_at(s: &PhaseState, mp: &ModelParams) -> Result<[[f64; 4]; 4]> {
    jacobian_raw(s.as_array(), mp)
}

pub(crate) fn jacobian_raw(x: &[f64; 4], mp: &ModelParams) -> Result<[[f64; 4]; 4]> {
    let r = checked_root(x)?;
    let [_, q, pa, qa] = *x;
    let g = mp.gamma;
    let inv_r = 1.0 / r;
    let inv_r3 = inv_r * inv_r * inv_r;
    Ok([
        [0.0, -mp.omega, g * qa * pa * inv_r, -g * r + g * qa * qa * inv_r],
        [mp.omega, 0.0, 0.0, 0.0],
        [
            0.0,
            g * qa * qa * inv_r - g * r,
            g * q * pa * (qa * qa * inv_r3 + inv_r),
            g * q * (3.0 * qa * inv_r + qa * qa * qa * inv_r3) - mp.omega0,
        ],
        [
            0.0,
            -g * pa * qa * inv_r,
            mp.omega0 - g * q * qa * (inv_r + pa * pa * inv_r3),
            -g * pa * q * (inv_r + qa * qa * inv_r3),
        ],
    ])
}

/// Classical photon number and atomic excitation `((p²+q²)/2, (P²+Q²)/2)`.
pub fn observables(s: &PhaseState) -> (f64, f64) {
    let [p, q, pa, qa] = *s.as_array();
    (0.5 * (p * p + q * q), 0.5 * (pa * pa + qa * qa))
}

/// Solves `H(p, q, P, Q) = energy` for `q`.
///
/// The energy is quadratic in `q`; real roots are returned ordered by
/// increasing `|q|`. An empty vector means the shell does not reach
/// this `(p, P, Q)`.
pub fn solve_q_on_shell(energy: f64, p: f64, atom_p: f64, atom_q: f64, mp: &ModelParams) -> Vec<f64> {
    let r2 = atom_p * atom_p + atom_q * atom_q;
    if r2 > 4.0 {
        return Vec::new();
    }
    let a = 0.5 * mp.omega;
    let b = mp.gamma * atom_q * (4.0 - r2).sqrt();
    let c = 0.5 * mp.omega * p * p + 0.5 * mp.omega0 * r2 - mp.omega0 - energy;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    if disc == 0.0 {
        return vec![-b / (2.0 * a)];
    }
    // Numerically stable pair: avoid cancellation in −b ± √disc.
    let sq = disc.sqrt();
    let t = -0.5 * (b + b.signum() * sq);
    let (r1, r2) = if t == 0.0 {
        (sq / (2.0 * a), -sq / (2.0 * a))
    } else {
        (t / a, c / t)
    };
    let mut roots = vec![r1, r2];
    roots.sort_by(|x, y| x.abs().total_cmp(&y.abs()).then(x.total_cmp(y)));
    roots
}

/// Glauber (`α`) and Bloch (`z`) coherent-state labels of a classical state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentParams {
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub z_re: f64,
    pub z_im: f64,
    /// Pseudo-spin length.
    pub j: f64,
}

pub fn coherent_to_phase(c: &CoherentParams) -> Result<PhaseState> {
    if !(c.j > 0.0) {
        return Err(Error::invalid("j", format!("must be > 0, got {}", c.j)));
    }
    let scale = (c.j / 2.0).sqrt();
    let q = c.alpha_re / scale;
    let p = c.alpha_im / scale;
    // |z|² = ρ²/(4 − ρ²)  ⇒  √(4 − ρ²) = 2/√(1 + |z|²)
    let root = 2.0 / (1.0 + c.z_re * c.z_re + c.z_im * c.z_im).sqrt();
    PhaseState::new(p, q, -c.z_im * root, c.z_re * root)
}

pub fn phase_to_coherent(s: &PhaseState, j: f64) -> Result<CoherentParams> {
    if !(j > 0.0) {
        return Err(Error::invalid("j", format!("must be > 0, got {j}")));
    }
    let root = checked_root(s.as_array())?;
    let scale = (j / 2.0).sqrt();
    Ok(CoherentParams {
        alpha_re: scale * s.q(),
        alpha_im: scale * s.p(),
        z_re: s.atom_q() / root,
        z_im: -s.atom_p() / root,
        j,
    })
}

/// Normalized capacitor voltages and inductor currents of the two coupled
/// LC oscillators. Related to [`PhaseState`] by a pure renaming.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectricalState {
    pub v_c1: f64,
    pub i_l1: f64,
    pub v_c2: f64,
    pub i_l2: f64,
}

pub fn phase_to_electrical(s: &PhaseState) -> ElectricalState {
    let [p, q, pa, qa] = *s.as_array();
    ElectricalState {
        v_c1: p,
        i_l1: q,
        v_c2: pa,
        i_l2: qa,
    }
}

pub fn electrical_to_phase(e: &ElectricalState) -> Result<PhaseState> {
    PhaseState::new(e.v_c1, e.i_l1, e.v_c2, e.i_l2)
}

impl ElectricalState {
    /// Circuit energy written in electrical variables.
    pub fn energy(&self, mp: &ModelParams) -> f64 {
        let root = (4.0 - self.v_c2 * self.v_c2 - self.i_l2 * self.i_l2).max(0.0).sqrt();
        mp.omega / 2.0 * (self.v_c1 * self.v_c1 + self.i_l1 * self.i_l1)
            + mp.omega0 / 2.0 * (self.v_c2 * self.v_c2 + self.i_l2 * self.i_l2)
            + mp.gamma * self.i_l1 * self.i_l2 * root
            - mp.omega0
    }

    /// Circuit equations `C V̇ = …`, `L İ = …` with `|L_j| = |C_j| = 1/ω_j`.
    pub fn derivative(&self, mp: &ModelParams) -> Result<ElectricalState> {
        let margin = 4.0 - self.v_c2 * self.v_c2 - self.i_l2 * self.i_l2;
        if margin < BOUNDARY_EPS {
            return Err(Error::Boundary { margin });
        }
        let root = margin.sqrt();
        let (c1, l1) = (1.0 / mp.omega, 1.0 / mp.omega);
        let (c2, l2) = (1.0 / mp.omega0, 1.0 / mp.omega0);
        let g = mp.gamma;
        Ok(ElectricalState {
            v_c1: (-g * c1 * self.i_l2 * root - self.i_l1) / c1,
            i_l1: self.v_c1 / l1,
            v_c2: (g * c2 * self.i_l1 * self.i_l2 * self.i_l2 / root
                - g * c2 * self.i_l1 * root
                - self.i_l2)
                / c2,
            i_l2: (self.v_c2 - g * l2 * self.v_c2 * self.i_l1 * self.i_l2 / root) / l2,
        })
    }
}
