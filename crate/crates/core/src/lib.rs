//! Super-resolution by multi-agent consensus equilibrium.
//!
//! Low-resolution measurements are fused with a denoising prior by solving
//! the equilibrium `F(v) = G(v)` with Mann iterations. The data agent can use
//! the exact adjoint of the block-averaging forward model or a smoother
//! relaxed backprojector (bicubic upsampling).

pub mod agents;
pub mod linops;
pub mod mace;

pub mod metrics;
pub mod pipeline;
pub mod theory;

pub use linops::{Image, Shape};
