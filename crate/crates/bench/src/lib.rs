//! Shared inputs for the benchmarks.

use dicke_core::{ModelParams, PhaseState};

/// `ω = ω₀ = 1` at twice the critical coupling.
pub fn reference_params() -> ModelParams {
    ModelParams::resonant(2.0)
}

/// A strongly chaotic state on the `E = −0.5` shell.
pub fn chaotic_state() -> PhaseState {
    PhaseState::new(0.0, -0.13372, 0.0, 1.22474).expect("interior state")
}

/// A regular state on the `E = −1.8` shell.
pub fn regular_state() -> PhaseState {
    PhaseState::new(0.0, -1.0996, 0.0, 1.0).expect("interior state")
}
