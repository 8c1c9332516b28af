use thiserror::Error;

/// Errors raised by the simulation and diagnostics layers.
///
/// Times and magnitudes are carried as `f64` regardless of the scalar type
/// used for the computation so that callers can report them uniformly.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("step size underflow at t = {t} (h = {h:e}, error estimate {err:e})")]
    StepUnderflow { t: f64, h: f64, err: f64 },

    #[error(
        "truncation too small: boundary mode L reached {ratio:e} of the state norm at t = {t}"
    )]
    BoundaryReached { t: f64, ratio: f64 },

    #[error("quadrature did not converge on [{a}, {b}] (estimate {estimate:e}, error {error:e})")]
    Quadrature {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
    },

    #[error("trajectory has no sample at t = {t}")]
    MissingSample { t: f64 },

    #[error("zero reference amplitude: {0}")]
    ZeroReference(String),

    #[error("initial data does not match the required form: {0}")]
    MismatchedInit(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::StepUnderflow { .. }
                | Error::BoundaryReached { .. }
                | Error::Quadrature { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
