use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown unit conversion {from} -> {to}")]
    UnknownUnit { from: String, to: String },

    /// The selected engine cannot evaluate this model/waveform combination.
    #[error("unsupported model for engine `{engine}`: {reason}")]
    UnsupportedModel {
        engine: &'static str,
        reason: String,
    },

    #[error("no attenuation engine registered under `{0}`")]
    UnknownEngine(String),

    #[error("no restriction geometry registered under `{0}`")]
    UnknownGeometry(String),

    #[error(
        "quadrature did not converge: estimate {estimate:e}, error {error:e} after {evaluations} evaluations"
    )]
    Quadrature {
        estimate: f64,
        error: f64,
        evaluations: usize,
    },

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("no optimum: {0}")]
    NoOptimum(String),

    #[error("Monte-Carlo configuration error: {0}")]
    McConfig(String),

    #[error("internal consistency error: {0}")]
    Consistency(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of a numerical method (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Quadrature { .. }
                | Error::RootFinding(_)
                | Error::NoOptimum(_)
                | Error::Consistency(_)
        )
    }
}
