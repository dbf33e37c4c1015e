use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("environment does not support {0}")]
    Unsupported(&'static str),
    #[error("replay buffer holds {have} transitions, {need} required")]
    InsufficientData { need: usize, have: usize },
    #[error("missing required config fields: {}", .0.join(", "))]
    MissingFields(Vec<String>),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("training failed at step {step}: {source}")]
    Training {
        step: u64,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
