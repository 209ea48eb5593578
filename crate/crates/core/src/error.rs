use thiserror::Error;

/// Errors produced by the Matérn numerics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MaternError {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller-side contract was violated (wrong parametrization, wrong order, ...).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The result is larger than the largest finite `f64`.
    #[error("overflow evaluating {what}; use the log-domain variant instead")]
    Overflow { what: String },

    /// A covariance construction is not valid for the requested metric and parameters.
    #[error("invalid covariance: {0}")]
    Validity(String),

    /// Cholesky factorization failed even at the largest allowed jitter.
    #[error("matrix is not positive definite (tried jitter up to {max_jitter:e})")]
    NotPositiveDefinite { max_jitter: f64 },

    /// Operand shapes do not agree.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// A location grid does not satisfy the layout an operation needs.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// A guarantee of the construction itself did not hold; indicates a bug.
    #[error("internal error: {0}")]
    Internal(String),
}

impl MaternError {
    /// True when the error stems from bad inputs rather than from numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            MaternError::Domain(_)
                | MaternError::Precondition(_)
                | MaternError::Validity(_)
                | MaternError::DimensionMismatch { .. }
                | MaternError::InvalidGrid(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, MaternError>;

pub(crate) fn domain(msg: impl Into<String>) -> MaternError {
    MaternError::Domain(msg.into())
}
