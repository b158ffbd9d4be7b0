use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular design after maximum jitter; near-duplicate points: {pairs:?}")]
    SingularDesign { pairs: Vec<(usize, usize)> },

    #[error("covariance matrix of size {size} not factorizable after maximum jitter")]
    NotFactorizable { size: usize },

    #[error("objective evaluation failed at {point:?}: {message}")]
    Objective { point: Vec<f64>, message: String },

    /// A strategy run stopped early; the partial record was still written.
    #[error("run aborted at iteration {iteration}: {message}")]
    RunAborted { iteration: usize, message: String },

    #[error("criterion evaluation failed at candidate {candidate:?}: {source}")]
    Criterion {
        candidate: Vec<Vec<f64>>,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Process exit code used by the CLI: 2 for configuration/input problems,
    /// 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SingularDesign { .. } | Error::NotFactorizable { .. } => 3,
            Error::Criterion { source, .. } => source.exit_code(),
            Error::Objective { .. } | Error::RunAborted { .. } => 3,
            _ => 2,
        }
    }
}
