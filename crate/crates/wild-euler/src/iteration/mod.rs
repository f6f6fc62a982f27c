//! The constructive convex-integration schedule over discretized subsolution
//! fields: covers, patch superposition, the energy inequality and the
//! mollified-proximity bookkeeping.

mod cover;
mod field;
mod mollify;
mod step;

pub use cover::{select_cover, Cover, CoverBall};
pub use field::{deficit, Grid, HProfile, SubsolutionField};
pub use mollify::{l2_norm, mollification_gap, mollify, Convolver};
pub use step::{
    beta_constant, check_invariants, choose_delta, init_field, iteration_step, margin_at, run, run_from,
    ConvergenceRow, InvariantReport, IterationConfig, OracleBank, RunOutput, StepReport,
};

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::perturbation::PerturbationError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IterationError {
    #[error("invalid iteration configuration: {0}")]
    Config(String),
    #[error("mollifier: {0}")]
    Mollifier(String),
    #[error("cover reached {achieved:.4e} of the required {required:.4e}; refine the grid or raise r_max")]
    CoverFailed { achieved: f64, required: f64 },
    #[error("step rejected: {0}")]
    StepRejected(String),
    #[error("run aborted at k = {k}: {reason}")]
    RunAborted { k: usize, reason: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Perturbation(#[from] PerturbationError),
}
