//! Time-discrete metamorphosis of images in a (deep) feature space.
//!
//! Given two images, optionally augmented by multiscale feature tensors, the
//! solver computes a discrete geodesic path of `K + 1` feature maps together
//! with the `K` deformations transporting consecutive frames and the `K`
//! edge-aware anisotropy weights that modulate the elastic regularization.
//!
//! The crate is `no_std` (it only needs `alloc`); image decoding, the tensor
//! interchange format and the command line live in the `metamorph` crate.
//!
//! Layout:
//! * [`grid`]: raster containers, finite differences, Sobel, Gaussian and
//!   bilinear resampling.
//! * [`warp`]: cubic B-spline prefiltering, warping and its exact adjoint.
//! * [`energy`]: elastic density, anisotropy, mismatch, regularizer, path
//!   energy and their analytic gradients.
//! * [`optimizer`]: the inertial proximal alternating scheme on one level.
//! * [`multilevel`]: coarse-to-fine drivers for the RGB and deep models.
//! * [`features`]: feature-map assembly from images and deep tensors.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
mod math;

pub mod energy;
pub mod features;
pub mod grid;
pub mod multilevel;
pub mod optimizer;
pub mod warp;

pub use error::{Error, Result};
pub use math::Mat2;
