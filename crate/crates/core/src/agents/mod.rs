//! Consensus agents: the data-fidelity proximal map, the relaxed adjoint
//! projection (RAP) update and the denoiser priors.

mod affine;
mod denoise;
mod external;
mod forward;
mod params;
pub mod protocol;

use thiserror::Error;

use crate::linops::{Image, LinopsError, Shape};

pub use affine::{AffineAgent, FnAgent};
pub use denoise::{
    gaussian_denoise, gaussian_kernel, nlm_denoise, total_variation, tv_denoise, tv_energy, DenoiserAgent,
    DenoiserSpec, DenoiserVariant, DEFAULT_SIGMA_N,
};
pub use external::{external_denoise, Endpoint, ExternalDenoiser};
pub use forward::{data_fidelity_apply, rap_apply, Backprojector, ForwardAgent};
pub use params::NoiseParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    DataFidelity,
    Rap,
    Denoiser,
    /// Anything else: dense affine maps, closures used in analysis.
    Generic,
}

/// One map `F_i` of the consensus equilibrium.
///
/// `apply` must preserve the image shape and be deterministic.
pub trait Agent: Send + Sync {
    fn name(&self) -> &str;
    fn kind(&self) -> AgentKind;
    fn apply(&self, x: &Image) -> Result<Image, AgentError>;
}

impl<A: Agent + ?Sized> Agent for Box<A> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn kind(&self) -> AgentKind {
        (**self).kind()
    }

    fn apply(&self, x: &Image) -> Result<Image, AgentError> {
        (**self).apply(x)
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Linops(#[from] LinopsError),
    #[error("measurements have shape {got:?}, expected {expected:?}")]
    Shape { expected: Shape, got: Shape },
    #[error("upsampler factor {got} does not match scale factor {expected}")]
    FactorMismatch { expected: usize, got: usize },
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("image of shape {shape:?} is smaller than the {window}x{window} patch window")]
    ImageTooSmall { shape: Shape, window: usize },
    #[error("cannot parse denoiser spec {0:?}")]
    BadDenoiserSpec(String),
    #[error("bad endpoint descriptor {0:?} (expected stdio:<command> or tcp:<host>:<port>)")]
    BadEndpoint(String),
    #[error("external denoiser {endpoint} unreachable: {source}")]
    EndpointUnreachable {
        endpoint: String,
        #[source]
        source: std::io::Error,
    },
    #[error("external denoiser {endpoint} protocol violation: {source}")]
    Protocol {
        endpoint: String,
        #[source]
        source: protocol::ProtocolError,
    },
    #[error("external denoiser {endpoint} replied with shape {got:?}, expected {expected:?}")]
    ReplyShape {
        endpoint: String,
        expected: Shape,
        got: Shape,
    },
    #[error("agent {name} failed: {message}")]
    Custom { name: String, message: String },
}
