use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown preset `{0}` (expected one of: linear-quadratic, uncertain-volatility, dynkin-flat, bsb-convex)")]
    UnknownPreset(String),

    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },

    #[error("missing parameter `{0}`")]
    MissingParameter(String),

    #[error("obstacle separation violated at t={t}, x={x:?}: lower {lower} is not below upper {upper}")]
    ObstacleSeparation {
        t: f64,
        x: Vec<f64>,
        lower: f64,
        upper: f64,
    },

    #[error("terminal value {value} at x={x:?} lies outside the terminal obstacles [{lower}, {upper}]")]
    TerminalOutsideObstacles {
        x: Vec<f64>,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("non-finite {what}: {detail}")]
    NonFinite { what: String, detail: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("CFL condition violated: {0}")]
    Cfl(String),

    #[error("negative transition probability {prob} at step {step}, node {node}")]
    NegativeProbability { prob: f64, step: usize, node: usize },

    #[error("rank-deficient regression at step {step}: {reason}")]
    RankDeficient { step: usize, reason: String },

    #[error("path sets overlap at path {0}")]
    OverlappingPaths(usize),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("power series did not converge within {terms} terms (last term norm {last_term:e})")]
    SeriesNonConvergent { terms: usize, last_term: f64 },

    #[error("tree depth {0} exceeds the enumeration bound of 4")]
    DepthTooLarge(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status for the CLI: 2 for numerical failures, 3 for
    /// configuration and parameter errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. }
            | Error::Cfl(_)
            | Error::NegativeProbability { .. }
            | Error::RankDeficient { .. }
            | Error::SeriesNonConvergent { .. } => 2,
            _ => 3,
        }
    }

    pub(crate) fn config(line: usize, msg: impl Into<String>) -> Self {
        Error::Config {
            line: Some(line),
            msg: msg.into(),
        }
    }

    pub(crate) fn param(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}
