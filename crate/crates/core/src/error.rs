use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("internal error: {0}")]
    Internal(String),

    /// A verification routine was asked to do something it deliberately does not support.
    #[error("refused: {0}")]
    Refused(String),

    #[error("arithmetic overflow in {0}")]
    Overflow(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("environment fault: {0}")]
    Environment(String),

    #[error("checkpoint version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint truncated: expected {expected} payload bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("tensor `{name}` is inconsistent: shape {shape:?} implies {expected} elements, found {found}")]
    ShapeMismatch {
        name: String,
        shape: Vec<usize>,
        expected: usize,
        found: usize,
    },

    #[error("checkpoint was written for task `{found}`, not `{expected}`")]
    DescriptorMismatch { expected: String, found: String },

    #[error("malformed checkpoint: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn ensure_len(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Config(format!(
            "{what}: expected length {expected}, found {found}"
        )));
    }
    Ok(())
}
