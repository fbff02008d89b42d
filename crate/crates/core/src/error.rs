//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A rate or weight evaluation produced NaN, an infinity, or a negative
    /// value where a nonnegative one is required.
    #[error("non-finite evaluation of {context} at ({x}, {y})")]
    NonFiniteEvaluation { context: String, x: f64, y: f64 },

    /// The weight handed to the gelling-kernel builder failed its sampled
    /// structural check.
    #[error("invalid weight `{label}`: {reason}")]
    InvalidWeight { label: String, reason: String },

    /// Mesh construction parameters out of range.
    #[error("invalid mesh parameters: {0}")]
    InvalidMeshParams(String),

    /// Initial data evaluated below zero at a quadrature node.
    #[error("negative initial data: u0({x}) = {value}")]
    NegativeInitialData { x: f64, value: f64 },

    /// An explicit step would have driven a cell average negative.
    #[error("step rejected: cell {cell} would reach g = {value}")]
    StepRejected { cell: usize, value: f64 },

    /// Repeated step halving drove dt below the underflow guard.
    #[error("stiffness failure: dt = {dt} below {floor} at t = {t}")]
    StiffnessFailure { dt: f64, floor: f64, t: f64 },

    /// Config file did not parse.
    #[error("config parse error: {0}")]
    ConfigParse(String),

    /// Config parsed but a field failed validation.
    #[error("config validation error at `{field}`: {message}")]
    ConfigValidation { field: String, message: String },

    /// A series-based check was handed an empty series.
    #[error("empty series")]
    EmptySeries,

    /// Not enough stored samples around the requested time.
    #[error("insufficient samples around t = {t}")]
    InsufficientSamples { t: f64 },

    /// Scalar arguments out of their documented domain.
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    /// The particle-system initializer cannot sample the requested density.
    #[error("invalid sampler: {0}")]
    InvalidSampler(String),

    /// The total event rate of the stochastic system stopped being finite.
    #[error("event rate overflow at t = {t}")]
    RateOverflow { t: f64 },

    /// A fitted inequality ratio was NaN or infinite.
    #[error("non-finite ratio at ({x}, {y})")]
    NonFiniteRatio { x: f64, y: f64 },

    /// The sampled midpoint-concavity test failed.
    #[error("concavity not detected for weight `{0}`")]
    ConcavityNotDetected(String),

    /// Expression parse or evaluation failure.
    #[error("expression error: {0}")]
    Expr(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Validation-class errors map to CLI exit code 1, numerical failures to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ConfigParse(_)
                | Error::ConfigValidation { .. }
                | Error::InvalidMeshParams(_)
                | Error::InvalidParameters(_)
                | Error::InvalidWeight { .. }
                | Error::InvalidSampler(_)
                | Error::Expr(_)
        )
    }
}
