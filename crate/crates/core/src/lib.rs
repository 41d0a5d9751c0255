//! Asynchronous block successive convex approximation for sparse regression.
//!
//! The crate solves composite problems `F(x) = f(x) + G(x)` where `f` is a
//! quadratic loss `s‖Ax − b‖²` (s = ½ or 1, recorded per instance) and `G` is
//! either an ℓ1 penalty or a nonconvex separable penalty (exponential or
//! logarithmic) handled through its DC decomposition. Coordinates are updated
//! by parallel workers that read possibly stale shared state and write back
//! relaxed scalar best responses; no locks are taken on the hot path.
//!
//! Modules:
//! - [`model`]: problem instances, objective and gradient evaluation.
//! - [`kernels`]: closed-form scalar best responses and quality measures.
//! - [`engine`]: the shared-memory solver (plus two baselines) and the
//!   synchronous reference loop.
//! - [`theory`]: step-size and iteration-complexity bound calculators.
//! - [`generators`]: synthetic instance families.
//! - [`io`]: instance/config/trace file formats.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root pin the common `f64` instantiations.

pub mod engine;
pub mod generators;
pub mod io;
pub mod kernels;
pub mod matrix;
pub mod model;
pub mod scalar;
pub mod theory;

pub use scalar::{AtomicCell, Scalar};

/// f64 instantiations; the CLI and benchmarks use these.
pub type Problem64 = model::CompositeProblem<f64>;
pub type Loss64 = model::QuadraticLoss<f64>;
pub type Regularizer64 = model::Regularizer<f64>;
pub type Matrix64 = matrix::DesignMatrix<f64>;
pub type Instance64 = generators::GeneratedInstance<f64>;
pub type SolverConfig64 = engine::SolverConfig<f64>;
pub type Constants64 = theory::ComplexityConstants<f64>;

/// f32 instantiations, for memory-bound experiments.
pub type Problem32 = model::CompositeProblem<f32>;
pub type Loss32 = model::QuadraticLoss<f32>;
pub type Regularizer32 = model::Regularizer<f32>;
pub type Matrix32 = matrix::DesignMatrix<f32>;

/// Errors surfaced by fallible operations (construction, I/O, run setup).
/// Contract violations in pure numeric kernels (dimension mismatches,
/// negative thresholds, family mismatches) panic instead; they are bugs in
/// the caller, not recoverable states.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("instance file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
