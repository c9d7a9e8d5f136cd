use thiserror::Error;

/// Failure modes shared by every stage of the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate element {element} (area {area:e})")]
    DegenerateElement { element: usize, area: f64 },

    #[error("vertex {0} lies on the boundary")]
    BoundaryVertex(usize),

    #[error("vertex {0} is an interior vertex")]
    InteriorVertex(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid coefficient field: {0}")]
    InvalidCoefficient(String),

    #[error("conjugate gradients stopped after {iterations} iterations at relative residual {residual:e}")]
    IterationCap { iterations: usize, residual: f64 },

    #[error("solver breakdown: {0}")]
    Breakdown(String),

    #[error("singular local system: {0}")]
    Singular(String),

    #[error("degenerate patch around vertex {vertex}: {reason}")]
    DegeneratePatch { vertex: usize, reason: String },

    #[error("input is not in the kernel of the quasi-interpolation (|Qv| = {0:e})")]
    NotInKernel(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigenvalue iteration did not converge: estimate {estimate:e}, relative change {change:e}")]
    NotConverged { estimate: f64, change: f64 },

    #[error("spectrum estimate did not converge: lambda_min {lambda_min:e}, lambda_max {lambda_max:e}, residual {residual:e}")]
    SpectrumNotConverged {
        lambda_min: f64,
        lambda_max: f64,
        residual: f64,
    },

    #[error("empty Galerkin system")]
    EmptySystem,
}

pub type Result<T> = std::result::Result<T, Error>;
