//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by mesh handling, local operator construction, and solvers.
#[derive(Error, Debug)]
pub enum Error {
    /// Malformed mesh file.
    #[error("parse error: {0}")]
    Parse(String),
    /// Self-intersecting, zero-area, or otherwise degenerate geometry.
    #[error("geometry error: {0}")]
    Geometry(String),
    /// A face claimed by more than two elements.
    #[error("non-manifold face between vertices {0} and {1}")]
    Nonmanifold(usize, usize),
    /// No interior point sees every face at positive distance.
    #[error("element {0} is not star-shaped")]
    StarShape(usize),
    /// Quadrature exactness above the supported cap.
    #[error("unsupported quadrature degree {0} (max {1})")]
    UnsupportedDegree(usize, usize),
    /// A local Gram matrix could not be factored.
    #[error("singular Gram matrix: {0}")]
    SingularGram(String),
    /// Invalid (k, l) combination or incompatible configuration.
    #[error("invalid space specification: {0}")]
    Spec(String),
    /// The constrained global matrix is singular.
    #[error("singular system: {0}")]
    SingularSystem(String),
    /// Sparse factorization or triangular solve failed.
    #[error("linear solver failure: {0}")]
    Solver(String),
    /// Newton iteration hit the iteration cap without converging.
    #[error("Newton did not converge in {0} iterations (residual {1:.3e})")]
    MaxIterations(usize, f64),
    /// Backtracking line search could not reduce the residual.
    #[error("line search stalled at iteration {0}")]
    LineSearchStall(usize),
    /// Eigenvalue iteration failed to converge.
    #[error("eigenvalue computation failed: {0}")]
    EigenFailure(String),
    /// I/O error while reading or writing mesh files.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
