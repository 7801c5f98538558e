//! Error taxonomy shared by all modules.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on plain arguments was violated (non-finite bounds,
    /// non-positive coefficients, empty meshes, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested (family, degree, dimension) combination is not available.
    #[error("unsupported space: {0}")]
    UnsupportedSpace(String),

    /// Two spaces do not satisfy the compatibility required by the operation.
    #[error("compatibility violation: {0}")]
    CompatibilityViolation(String),

    /// A scheme state does not match the layout or staggering an integrator expects.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// No comparison mapping is defined for the requested formulation pair.
    #[error("invalid pair: {0}")]
    InvalidPair(String),

    /// An iterative or direct solve failed to meet its residual contract.
    #[error("solver failure in {what}: residual {residual:.3e} after {iterations} iterations")]
    SolverFailure {
        what: String,
        residual: f64,
        iterations: usize,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn unsupported_space(msg: impl Into<String>) -> Self {
        Error::UnsupportedSpace(msg.into())
    }

    pub fn compatibility(msg: impl Into<String>) -> Self {
        Error::CompatibilityViolation(msg.into())
    }

    pub fn invalid_state(msg: impl Into<String>) -> Self {
        Error::InvalidState(msg.into())
    }

    /// Machine-readable code used in JSON reports and process exit status.
    /// 2 = validation, 3 = assertion, 4 = solver, 1 = other.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SolverFailure { .. } => 4,
            Error::InvalidArgument(_)
            | Error::UnsupportedSpace(_)
            | Error::CompatibilityViolation(_)
            | Error::InvalidState(_)
            | Error::InvalidPair(_) => 2,
            Error::Io { .. } => 1,
        }
    }

    /// Short stable identifier for reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::UnsupportedSpace(_) => "unsupported-space",
            Error::CompatibilityViolation(_) => "compatibility-violation",
            Error::InvalidState(_) => "invalid-state",
            Error::InvalidPair(_) => "invalid-pair",
            Error::SolverFailure { .. } => "solver-failure",
            Error::Io { .. } => "io",
        }
    }
}
