use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed record at {location}: {message}")]
    Malformed { location: String, message: String },

    #[error("timestamp regression at event index {index}: {t} < {previous}")]
    TimestampRegression { index: usize, t: i64, previous: i64 },

    #[error("event at ({x}, {y}) is outside the {width}x{height} sensor")]
    OutOfBounds { x: i64, y: i64, width: u32, height: u32 },

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("loss became non-finite at epoch {epoch}, step {step} (loss = {loss})")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },

    #[error("insufficient samples for class {class}: wanted {wanted}, have {available}")]
    InsufficientSamples { class: &'static str, wanted: usize, available: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("decisions differ between sequential and batch mode at event {index}")]
    ModeMismatch { index: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let location = err
            .position()
            .map(|p| format!("line {}", p.line()))
            .unwrap_or_else(|| "unknown position".to_string());
        match err.into_kind() {
            csv::ErrorKind::Io(e) => Error::Io(e),
            kind => Error::Malformed { location, message: format!("{kind:?}") },
        }
    }
}
