//! Brownian paths, the SPDE ↔ random-PDE transforms for transport and linear
//! multiplicative noise, the time change and the pathwise Itô weak forms.

mod fields;
mod path;
mod pchip;
mod registry;
mod transform;
mod weak;

pub use fields::{FlowFields, RelaxedFlux};
pub use path::{rescaled_profile, sample_brownian, sample_paths, time_change, BrownianPath, TimeChange};
pub use pchip::pchip_resample;
pub use registry::{NoiseRegistry, NoiseTransform};
pub use transform::{multiplicative_forward, multiplicative_inverse, transport_forward, transport_inverse};
pub use weak::{
    checkpoint_indices, space_bump_tests, spde_weak_residual, spde_weak_residual_with, WeakFormOptions,
    DEFAULT_CHECKPOINTS,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StochasticError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("shift {shift:.4} at t = {time:.4} leaves the padded domain")]
    DomainExceeded { time: f64, shift: f64 },
    #[error("test {0} is not compactly supported in the grid box")]
    TestSupport(usize),
    #[error("unknown noise kind {0:?}")]
    UnknownNoise(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    None,
    Transport,
    Multiplicative,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Transport => "transport",
            Self::Multiplicative => "multiplicative",
        }
    }

    /// Brownian dimension for spatial dimension n (0 without noise).
    pub fn path_dim(self, n: usize) -> usize {
        match self {
            Self::None => 0,
            Self::Transport => n,
            Self::Multiplicative => 1,
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = StochasticError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "transport" => Ok(Self::Transport),
            "multiplicative" => Ok(Self::Multiplicative),
            other => Err(StochasticError::UnknownNoise(other.into())),
        }
    }
}
