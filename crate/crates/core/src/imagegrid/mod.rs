//! Pixel grids, point-spread functions, boundary handling and 2-D convolution.

mod boundary;
mod convolve;
mod image;
pub mod io;
mod noise;
mod psf;

pub use boundary::{pad, BoundaryCondition};
pub use convolve::{convolve2d, Convolution};
pub use image::{unvectorize, vectorize, Image};
pub use noise::{add_noise, add_noise_image, NoiseLevel, NoiseSpec};
pub use psf::{gaussian_psf, gaussian_sigma_for_kernel, motion_psf, Psf};
