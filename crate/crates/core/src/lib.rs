//! Model-based image deblurring built on spectral regularization.
//!
//! The crate covers the whole pipeline from blur synthesis to reconstruction:
//!
//! * [`imagegrid`]: pixel grids, PSFs, boundary padding, 2-D convolution, noise and file I/O.
//! * [`operator`]: the forward blur operator in separable, dense and transform-diagonalized form.
//! * [`spectral`]: SVDs of the operator, spectral coefficients, Picard diagnostics.
//! * [`filters`]: TSVD / Tikhonov filter factors and the error decomposition.
//! * [`paramselect`]: GCV, L-curve, discrepancy principle and the noise-driven λ estimate.
//! * [`variational`]: stacked least squares, gradient-descent reconstruction and MAP blind deblurring.
//! * [`metrics`]: MSE, PSNR, SSIM and the combined similarity loss.
//!
//! Images are stored as column-major `nalgebra` matrices, so the natural storage
//! order of a channel is exactly its column-stacked vectorization.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod export;
pub mod filters;
pub mod imagegrid;
pub mod metrics;
pub mod operator;
pub mod paramselect;
pub mod spectral;
pub mod variational;

pub use error::{DeblurError, Result};
pub use imagegrid::{BoundaryCondition, Image, NoiseLevel, NoiseSpec, Psf};
