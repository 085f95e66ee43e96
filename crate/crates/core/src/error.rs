use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid material: {0}")]
    InvalidMaterial(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("non-finite state at step {step}: {context}")]
    Instability { step: usize, context: String },

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: String, iterations: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("solve failed for {provenance}: {source}")]
    Sample {
        provenance: String,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed container: {0}")]
    Format(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotPositiveDefinite { .. } | Error::Instability { .. } | Error::NoConvergence { .. } => true,
            Error::Sample { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
