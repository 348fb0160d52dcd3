use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("symmetric eigensolver did not converge within {iterations} iterations")]
    EigenNoConvergence { iterations: usize },

    #[error("not PSD: eigenvalue {min_eigenvalue:e} below tolerance")]
    NotPsd { min_eigenvalue: f64 },

    #[error("weight matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),

    #[error("penalty kind `{0}` is not sublinear; no conjugate polyhedron")]
    NotSublinear(&'static str),

    #[error("unsupported penalty kind `{kind}` for {operation}")]
    Unsupported {
        kind: &'static str,
        operation: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver did not converge after {iterations} iterations (KKT residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error(
        "unpenalized least squares on a rank-deficient design has no unique solution; \
         use ridgeless mode instead"
    )]
    RankDeficient,

    #[error("extended penalty not convex: W̄ − Q has eigenvalue {min_eigenvalue:e}")]
    ExtendedPenaltyNotConvex { min_eigenvalue: f64 },

    #[error("insufficient samples: {rows} rows (need at least {required})")]
    InsufficientSamples { rows: usize, required: usize },

    #[error("empty report")]
    EmptyReport,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
