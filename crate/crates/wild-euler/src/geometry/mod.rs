//! Relaxed-state types, the constraint set and its hull, the wave cone and
//! the quantitative Λ-segment construction.

mod cone;
mod hull;
pub mod nnls;
mod state;

pub use cone::{
    difference_matrix, segment_direction, segment_direction_with, wave_cone_member, xi_vector,
    LambdaDirection,
};
pub use hull::{
    caratheodory_decompose, constraint_set_member, hull_interior_member, min_net_size, sphere_net,
    CaratheodoryDecomposition, ConstraintContext, HullOracle, NetVertex, FEASIBILITY_TOL,
    MAX_NET_REFINEMENTS, RECONSTRUCTION_TOL,
};
pub use state::{
    e_value, e_value_raw, flat_from_tartar, flat_len, segment_constant, tartar_dim, tartar_from_flat,
    Layout, StatePoint, Tolerances,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("matrix is not trace-free (trace {0:.3e})")]
    NotTraceFree(f64),
    #[error("inconsistent shapes for dimension n = {n}")]
    ShapeMismatch { n: usize },
    #[error("invalid constraint context: {0}")]
    InvalidContext(String),
    #[error("vertex net of size {size} is below the minimum {min}")]
    DegenerateNet { size: usize, min: usize },
    #[error("margin must be positive, got {0}")]
    InvalidMargin(f64),
    #[error("Carathéodory decomposition failed (best residual {residual:.3e})")]
    DecompositionFailed { residual: f64 },
    #[error("velocities coincide; no Λ-direction between them")]
    DegenerateDirection,
    #[error("point is not in the hull interior")]
    NotInterior,
    #[error("segment amplitude {amplitude:.4e} below the bound {bound:.4e}")]
    BoundViolation { amplitude: f64, bound: f64 },
    #[error("internal consistency check failed: {0}")]
    Internal(String),
}
