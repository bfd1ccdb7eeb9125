use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("conductivity tensor is not symmetric positive definite at {location}")]
    NonSpdTensor { location: String },

    #[error("density must be positive and finite at {location}, got {value}")]
    NonPositiveDensity { location: String, value: f64 },

    #[error(
        "grid grading needs {required} cells per axis but the budget allows {budget}; \
         raise the budget to at least {required} or coarsen n_defect/n_bulk"
    )]
    InfeasibleGrid { required: usize, budget: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("{solver} did not converge after {iterations} iterations (best residual {residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("linear solve failed at time step {step}: {source}")]
    StepFailure {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("decay fit rejected: {0}")]
    DecayFit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Factorization(_)
                | Error::Singular(_)
                | Error::NonConvergence { .. }
                | Error::StepFailure { .. }
                | Error::DecayFit(_)
                | Error::NonSpdTensor { .. }
                | Error::NonPositiveDensity { .. }
        )
    }
}
