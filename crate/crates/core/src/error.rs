use thiserror::Error;

#[derive(Debug, Error)]
pub enum EcgError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("malformed signal data: {0}")]
    Signal(String),
    #[error("unsupported WFDB signal format {0}")]
    UnsupportedFormat(String),
    #[error("malformed annotation stream: {0}")]
    Annotation(String),
    #[error("input has {len} samples, at least {min} are required")]
    InputTooShort { len: usize, min: usize },
    #[error("csv error at row {row}: {msg}")]
    Csv { row: usize, msg: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged: {0}")]
    NonFinite(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error(transparent)]
    Nn(#[from] ecgseg_nn::NnError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EcgError> = std::result::Result<T, E>;
