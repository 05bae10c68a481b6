use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-differentiable kernel: degree-0 B-spline has no derivative")]
    NonDifferentiable,

    #[error("continuity required: degree-0 B-spline signals are discontinuous")]
    ContinuityRequired,

    #[error("unsupported: {0}")]
    Unsupported(&'static str),

    #[error("empty coefficient sequence")]
    EmptyCoefficients,

    #[error("density undefined: need at least 2 time instants, got {0}")]
    DensityUndefined(usize),

    #[error("insufficient events: need at least {needed} samples, got {got}")]
    InsufficientEvents { needed: usize, got: usize },

    #[error("invalid event stream: {0}")]
    InvalidEvents(String),

    #[error("window of length {length} is shorter than the requested span {span}")]
    WindowTooShort { length: f64, span: f64 },

    #[error("ill-conditioned system (condition number {cond:.3e}); use the L_p path")]
    IllConditioned { cond: f64 },

    #[error("degenerate system: {0}")]
    Degenerate(&'static str),

    #[error("zero-energy reference signal")]
    ZeroEnergy,

    #[error("signals are not comparable: {0}")]
    Incompatible(&'static str),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
