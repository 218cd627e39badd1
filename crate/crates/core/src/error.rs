use thiserror::Error;

use crate::detector::DetectorModel;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: malformed JSON: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("sample {sample_id}: {field}: {message}")]
    Schema {
        sample_id: String,
        field: String,
        message: String,
    },

    #[error("CSV error: {0}")]
    Csv(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("token {index}: offsets [{start}, {end}) out of range for text of {len} bytes")]
    TokenOutOfRange {
        index: usize,
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("labels contain a single class; both hallucination and non-hallucination samples are required")]
    SingleClass,

    #[error("zero variance in {0}")]
    ZeroVariance(String),

    #[error("logistic fit did not converge after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        last: Box<DetectorModel>,
    },

    #[error("singular system in IRLS update")]
    Singular,

    #[error("sample {0} has no value for attribute")]
    MissingAttribute(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
