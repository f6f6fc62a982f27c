//! Quantitative checks on fields: weak residuals of the relaxed system,
//! constraint saturation, the sphere moment operator and the MHD embedding.

mod mhd;
mod moments;
mod residual;

pub use mhd::{divergence_2d, divergence_3d, mhd_embed, mhd_embed_field, planar_slice_norms, MhdFields};
pub use moments::{gauss_legendre, moment_operator, surjectivity_check, SphereQuadrature, SurjectivityReport};
pub use residual::{
    bump_tests, constraint_saturation, relaxed_system_residual, signed_rows, BumpTest, Equation, ResidualEntry, ResidualReport,
    SaturationReport,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerificationError {
    #[error("rank {rank} below the expected {expected}")]
    RankDeficient { rank: usize, expected: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
}
