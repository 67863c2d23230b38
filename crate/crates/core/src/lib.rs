//! Simulation and analysis of the classical Dicke model.
//!
//! The crate covers the Hamiltonian flow and its equilibria, Lyapunov
//! indicators (tangent-space and from raw time series), ensemble variance
//! growth, and the perturbation probe of the `(0,0,0,0)` equilibrium.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chaos;
pub mod equilibria;
pub mod error;
pub mod esqpt;
pub mod integrator;
pub mod model;
pub mod otoc;
pub mod rng;
pub mod sweep;
pub mod tsa;

pub use error::{Error, Result};
pub use integrator::{integrate, integrate_with_tangents, IntegratorConfig, TangentState, Trajectory};
pub use model::{
    hamiltonian, jacobian_at, observables, solve_q_on_shell, vector_field, CoherentParams, ElectricalState,
    ModelParams, PhaseState,
};
