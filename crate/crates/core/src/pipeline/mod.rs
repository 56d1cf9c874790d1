//! Experiment orchestration: configuration, image files, synthetic data and
//! reconstruction runs that persist their artifacts.

mod config;
mod io;
mod phantom;
mod run;

use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::agents::AgentError;
use crate::linops::LinopsError;
use crate::mace::MaceError;
use crate::metrics::MetricsError;

pub use config::{ConfigOverrides, ExperimentConfig, ForwardKind, SCHEMA_VERSION};
pub use io::{load_image, save_image};
pub use phantom::{bandlimited_noise, make_phantom, normalize, PhantomKind, TEXTURE_CUTOFF};
pub use run::{
    build_agents, data_residual, reconstruct, run_batch, run_reconstruction, simulate_lr, Artifacts, Reconstruction,
    RunRecord,
};

/// Step of a reconstruction run, used to label errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Simulate,
    Agents,
    Solve,
    Metrics,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Config => "config",
            Self::Load => "load",
            Self::Simulate => "simulate",
            Self::Agents => "agents",
            Self::Solve => "solve",
            Self::Metrics => "metrics",
            Self::Write => "write",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot parse {path}: {detail}")]
    ConfigParse { path: PathBuf, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: unsupported image format: {detail}")]
    UnsupportedFormat { path: PathBuf, detail: String },
    #[error("{path}: corrupt image: {detail}")]
    CorruptImage { path: PathBuf, detail: String },
    #[error("{path}: cannot encode image: {detail}")]
    Encode { path: PathBuf, detail: String },
    #[error(transparent)]
    Linops(#[from] LinopsError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Solver(#[from] MaceError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{stage} stage: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<PipelineError>,
    },
}

impl PipelineError {
    /// Labels the error with `stage` unless it already carries a label.
    pub fn at(self, stage: Stage) -> Self {
        match self {
            e @ Self::Stage { .. } => e,
            e => Self::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            Self::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// The error without its stage label.
    pub fn inner(&self) -> &PipelineError {
        match self {
            Self::Stage { source, .. } => source,
            e => e,
        }
    }
}
