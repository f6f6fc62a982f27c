//! Convex-integration engine for the incompressible Euler equations with a
//! passive tracer, with a pathwise stochastic transform layer.

pub mod geometry;
pub mod perturbation;
pub mod iteration;
pub mod verification;
pub mod stochastic;
pub mod cli;
