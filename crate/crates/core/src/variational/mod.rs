//! Optimization-view solvers.
//!
//! * [`tikhonov_stacked_solve`]: damped least squares on the stacked system `[A; αD] x ≈ [b; 0]`.
//! * [`gradient_reconstruct`]: fixed-step gradient descent on `‖Ax − b‖² + λ R(x)` for an analytic `R`.
//! * [`map_blind_deblur`]: alternating estimation of image and kernel under a sparse-edge prior.

mod gradient;
mod map;
mod regularizer;
mod stacked;

pub use gradient::{gradient_reconstruct, GdConfig, GdOutcome, Initialization, TraceEntry};
pub use map::{
    kernel_similarity, lambda_schedule, map_blind_deblur, map_blind_deblur_image, MapConfig, MapOutcome, MapTraceEntry,
    StepControl,
};
pub use regularizer::{p_norm_pow, DiffOperator, RegularizerSpec, EDGE_EPSILON};
pub use stacked::tikhonov_stacked_solve;
