use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("non-finite input {0}")]
    NonFinite(f64),

    #[error("negative argument {0} where a non-negative value is required")]
    Negative(f64),

    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("cannot parse rule `{input}`: {reason}")]
    RuleParse { input: String, reason: String },

    #[error("rule `{0}` has no closed-form stepsize-adjusted threshold")]
    UnsupportedStepsize(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error(
        "scaling rho = {rho} is below the spectral norm {norm}; \
         descent of the iteration requires rho >= ||X||_2"
    )]
    RhoTooSmall { rho: f64, norm: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value encountered at iteration {iter}: {what}")]
    Diverged { iter: usize, what: &'static str },

    #[error("ground truth beta* is required for {0}")]
    MissingTruth(&'static str),

    #[error("support enumeration refused: p = {p} exceeds the limit of {limit}")]
    TooLarge { p: usize, limit: usize },

    #[error("invalid experiment spec: {0}")]
    Spec(String),

    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
