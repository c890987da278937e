use thiserror::Error;

/// Errors raised by the numerical and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no sign change of the drift on [0, {upper}] for n = {n}: g(0) = {g_low}, g(upper) = {g_high}")]
    BracketFailure {
        n: u64,
        upper: f64,
        g_low: f64,
        g_high: f64,
    },

    #[error("model exposes no dissipativity bounds; run validate_assumptions and pass them explicitly")]
    MissingBounds,

    #[error("closed-form equilibrium only applies to the reference parameter set")]
    NotReferenceParameters,

    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("zero total jump rate in state n = {n} > 0")]
    ZeroTotalRate { n: u64 },

    #[error("birth rate vanishes at state {state} (needed below i = {index})")]
    ZeroBirthRate { state: u64, index: u64 },

    #[error("singular linear system at row {row}")]
    SingularSystem { row: usize },

    #[error("absorption is not certain from m = {m}; set an explicit maximum time")]
    CutoffRequired { m: u64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
