//! Configuration, pipeline orchestration, snapshots and the command-line
//! front end.

mod commands;
mod config;
mod pipeline;
mod snapshot;

pub use commands::{execute, Cli, Command, Direction};
pub use config::{parse_config, HSpec, Overrides, RunConfig, H_EXPRESSION};
pub use pipeline::{path_seed, random_profile, run_pipeline, RunSummary, CONVERGENCE_FILE, PATH_FILE, RESIDUAL_FILE, RPDE_SNAPSHOT, SPDE_SNAPSHOT};
pub use snapshot::{read_snapshot, snapshot_stem, write_flow, write_mhd, write_subsolution, Sidecar, Snapshot, SnapshotKind, MAGIC, VERSION};

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::iteration::IterationError;
use crate::perturbation::PerturbationError;
use crate::stochastic::StochasticError;
use crate::verification::VerificationError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Perturbation(#[from] PerturbationError),
    #[error(transparent)]
    Iteration(IterationError),
    #[error(transparent)]
    Stochastic(StochasticError),
    #[error(transparent)]
    Verification(#[from] VerificationError),
    #[error("snapshot format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<IterationError> for CliError {
    fn from(e: IterationError) -> Self {
        match e {
            IterationError::Config(msg) => Self::Config(msg),
            IterationError::Geometry(g) => Self::Geometry(g),
            IterationError::Perturbation(p) => Self::Perturbation(p),
            other => Self::Iteration(other),
        }
    }
}

impl From<StochasticError> for CliError {
    fn from(e: StochasticError) -> Self {
        match e {
            StochasticError::Io(io) => Self::Io(io),
            StochasticError::Csv(c) => Self::Csv(c),
            other => Self::Stochastic(other),
        }
    }
}

impl CliError {
    /// Process exit status per failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Geometry(_) => 3,
            Self::Perturbation(_) => 4,
            Self::Iteration(_) => 5,
            Self::Stochastic(_) => 6,
            Self::Verification(_) => 7,
            Self::Format(_) | Self::Io(_) | Self::Csv(_) | Self::Json(_) => 8,
        }
    }
}
