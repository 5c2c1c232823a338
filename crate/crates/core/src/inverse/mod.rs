//! Reconstruction of point sources (and optionally `u₀`) from partial observations.

mod lm;
mod params;
mod setup;

pub use lm::{
    intensity_rel_error, linearized_objective, lm_step, location_error, penalty_matrix,
    regularized_step, run_lm, Betas, IterateHistory, IterateRecord, LmConfig, LmFailure, LmOutcome,
    LmSolver, StopReason,
};
pub use params::{ParamLayout, ParamVector};
pub use setup::{forward_map, h1_gram, jacobian_lambda, jacobian_u0, jacobian_x, InverseSetup};
