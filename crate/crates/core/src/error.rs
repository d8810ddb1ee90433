use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {factor}: {detail}")]
    Shape { factor: String, detail: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("degenerate hypothesis set: {0}")]
    Degenerate(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported family: {0}")]
    UnsupportedFamily(String),

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("empty summary: {0}")]
    EmptySummary(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(factor: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Shape {
            factor: factor.into(),
            detail: detail.into(),
        }
    }
}
