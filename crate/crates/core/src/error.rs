use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Hilbert space: {0}")]
    InvalidSpace(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("subsystem index {index} out of range for a space with {count} subsystems")]
    SubsystemIndex { index: usize, count: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("density matrix invariant violated at t = {time}: {detail}")]
    Invariant { time: f64, detail: String },

    #[error("operation requires a time-independent model")]
    TimeDependent,

    #[error("steady state is not unique: null space has dimension {0}")]
    DegenerateSteadyState(usize),

    #[error("no steady state: smallest singular value {sigma:e} above threshold {threshold:e}")]
    NoSteadyState { sigma: f64, threshold: f64 },

    #[error("steady state residual {0:e} exceeds 1e-9")]
    SteadyStateResidual(f64),

    #[error("negative delay τ = {0}; compute the reversed ordering and conjugate")]
    NegativeDelay(f64),

    #[error("delays must be sorted ascending")]
    UnsortedDelays,

    #[error("readout time {time} lies outside the grid horizon [0, {horizon}]")]
    BeyondHorizon { time: f64, horizon: f64 },

    #[error("readout time {time} is not a node of the time grid (spacing {spacing})")]
    OffGrid { time: f64, spacing: f64 },

    #[error("quadrature produced a negative spectrum value {value:e} (max {max:e})")]
    NegativeSpectrum { value: f64, max: f64 },

    #[error("total jump probability {dp:e} exceeds 0.1 at t = {time}; reduce dt")]
    StepTooLarge { dp: f64, time: f64 },

    #[error("excitation records do not share a time grid")]
    MismatchedGrids,

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
