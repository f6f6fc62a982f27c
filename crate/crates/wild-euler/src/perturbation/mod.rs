//! Localized, exactly divergence-free oscillatory patches along Λ-directions,
//! their placement, and measured patch properties.

mod cover;
mod cutoff;
mod patch;
mod report;

pub use cover::{cover_by_balls, BallCover};
pub use cutoff::{CutoffSpec, RadialJet};
pub use patch::{
    coordinate_change, euler_patch, rescale_patch, tracer_patch, PerturbationPatch, ANNIHILATION_TOL,
};
pub use report::{
    ball_volume, calibrate_alpha, divergence_order, divergence_residual, min_frequency, segment_distance,
    verify_patch, AlphaCalibration, PatchReport, VerifyOptions,
};

use thiserror::Error;

use crate::geometry::GeometryError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbationError {
    #[error("invalid patch direction: {0}")]
    InvalidDirection(String),
    #[error("degenerate frame: {0}")]
    Degenerate(String),
    #[error("ball cover reached only {achieved:.3} of the unit ball")]
    CoveringFailed { achieved: f64 },
    #[error("frequency cap {frequency} reached with segment distance {distance:.3e}")]
    FrequencyCap { frequency: u32, distance: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
