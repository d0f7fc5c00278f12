use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("runaway simulation: more than {cap} claims on one path")]
    Runaway { cap: usize },

    #[error("time {t} lies outside the simulated window [0, {covered}]")]
    OutOfWindow { t: f64, covered: f64 },

    #[error("kernel density vanishes at interarrival {w}")]
    SingularDensity { w: f64 },

    #[error("kernel survival vanishes at residual {residual}")]
    SingularResidual { residual: f64 },

    #[error("model validation failed: {0}")]
    ModelValidation(String),

    #[error("tilt validation inconclusive: {0}")]
    ValidationInconclusive(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("unreliable estimate: {0}")]
    Unreliable(String),

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl Error {
    /// True for errors that mean "the data could not decide", as opposed to a
    /// wrong input or a failed check.
    pub fn is_inconclusive(&self) -> bool {
        matches!(
            self,
            Error::Inconclusive(_) | Error::Unreliable(_) | Error::ValidationInconclusive(_)
        )
    }
}
