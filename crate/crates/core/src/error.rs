use thiserror::Error;

/// Errors produced anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum AmgError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid CSR structure: {0}")]
    InvalidStructure(String),
    #[error("negative quadratic form {value:e}: matrix is not SPD")]
    NegativeQuadraticForm { value: f64 },
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("zero diagonal entry in row {row}")]
    ZeroDiagonal { row: usize },
    #[error("singular matrix at pivot {pivot}")]
    SingularMatrix { pivot: usize },
    #[error("matrix market line {line}: {message}")]
    MatrixMarket { line: usize, message: String },
    #[error("graph with {n} vertices exceeds the exhaustive-search limit {max}")]
    GraphTooLarge { n: usize, max: usize },
    #[error("unmatched vertex {vertex} has a zero smooth-vector entry")]
    ZeroSmoothEntry { vertex: usize },
    #[error("smooth vector is identically zero")]
    ZeroSmoothVector,
    #[error("coarsening stagnated at level {level}: matching produced no pairs")]
    Stagnation { level: usize },
    #[error("jacobi SVD did not converge for aggregate {aggregate} within {sweeps} sweeps")]
    SvdNoConvergence { aggregate: usize, sweeps: usize },
    #[error("krylov breakdown at iteration {iteration}: curvature {curvature:e}")]
    Breakdown { iteration: usize, curvature: f64 },
    #[error("solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("composite AMG has no components")]
    EmptyComposite,
    #[error("bootstrap aborted at stage {stage}: {reason}")]
    BootstrapAborted { stage: usize, reason: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl AmgError {
    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_usage_error(&self) -> bool {
        matches!(
            self,
            AmgError::Config(_)
                | AmgError::InvalidParameter(_)
                | AmgError::MatrixMarket { .. }
                | AmgError::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, AmgError>;
