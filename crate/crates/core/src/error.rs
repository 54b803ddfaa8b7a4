use thiserror::Error;

#[derive(Debug, Error)]
pub enum DeblurError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("kernel of size {kernel} exceeds image dimension {dim}")]
    KernelTooLarge { kernel: usize, dim: usize },

    #[error("problem size N = {n} exceeds the dense cap of {cap}; use the separable or transform path")]
    DenseCapExceeded { n: usize, cap: usize },

    #[error("doubly symmetric PSF required")]
    NotDoublySymmetric,

    #[error("zero singular value at index {0} has a nonzero filter factor")]
    ZeroSingularValue(usize),

    #[error("no corner: L-curve is degenerate")]
    NoCorner,

    #[error("discrepancy target {target} outside feasible residual range [{min}, {max}]")]
    InfeasibleTarget { target: f64, min: f64, max: f64 },

    #[error("regularizer is evaluation-only and has no gradient")]
    EvaluationOnly,

    #[error("step size too large: objective grew from {initial} to {current}")]
    Diverged { initial: f64, current: f64 },

    #[error("non-finite objective at iteration {0}")]
    NonFinite(usize),

    #[error("stacked least-squares matrix is rank deficient")]
    RankDeficient,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DeblurError>;

pub(crate) fn invalid(msg: impl Into<String>) -> DeblurError {
    DeblurError::InvalidArgument(msg.into())
}

pub(crate) fn shape_err(expected: (usize, usize), actual: (usize, usize)) -> DeblurError {
    DeblurError::ShapeMismatch {
        expected: format!("{}x{}", expected.0, expected.1),
        actual: format!("{}x{}", actual.0, actual.1),
    }
}
