use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("dropout probability must be in [0, 1), got {0}")]
    InvalidProbability(f64),
    #[error("non-finite gradient in parameter tensor {tensor}")]
    NonFiniteGradient { tensor: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("checkpoint section {0:?} missing")]
    MissingSection(String),
    #[error("checkpoint section {0:?} not used by the model")]
    UnexpectedSection(String),
    #[error("checkpoint section {name:?} has shape {found:?}, model expects {expected:?}")]
    SectionShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("invalid UTF-8 in section name")]
    BadName,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
