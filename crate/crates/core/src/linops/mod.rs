//! Linear operators of the block-averaging measurement model.
//!
//! `A` sums `L x L` blocks, `A^T` replicates coarse pixels into blocks,
//! `A / L^2` is the forward model and `B` is a cubic-convolution upsampler
//! used as a relaxed backprojector.

mod bicubic;
mod block;
mod dense;
mod fourier;
mod image;

use thiserror::Error;

pub use bicubic::{bicubic_upsample, BicubicUpsampler, Boundary, DEFAULT_CUBIC_A};
pub use block::{block_average, block_replicate, block_sum, BlockOperator};
pub use dense::{materialize, MAX_DENSE_PIXELS};
pub use fourier::{fft2, fft2_in_place, signed_bin};
pub use image::{Image, Shape};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinopsError {
    #[error("image dimensions must be positive")]
    EmptyImage,
    #[error("image buffer has {got} values, shape requires {expected}")]
    DataLength { expected: usize, got: usize },
    #[error("image value at flat index {index} is not finite")]
    NonFinite { index: usize },
    #[error("image rows have unequal lengths")]
    RaggedRows,
    #[error("expected image of shape {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Shape, got: Shape },
    #[error("scale factor must be a positive integer, got {0}")]
    InvalidFactor(usize),
    #[error("shape {shape:?} is not divisible by scale factor {factor}")]
    NotDivisible { shape: Shape, factor: usize },
    #[error("cubic kernel coefficient must be finite, got {0}")]
    InvalidKernel(f64),
    #[error("operator side with {pixels} pixels exceeds the dense limit of {limit}")]
    TooLargeForDense { pixels: usize, limit: usize },
}
