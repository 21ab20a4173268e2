//! Single-field solvers composed by the coupled iteration: the proximal and
//! catching-up stress steps, the viscous velocity step, and Moreau–Yosida
//! resolvents.

mod stress;
mod velocity;

pub use stress::{
    stress_step_catchup, stress_step_regularized, yosida_gradient, yosida_resolvent, ProxOutcome,
    StressStepProblem,
};
pub use velocity::{velocity_step, CgOutcome, VelocityStepProblem};
