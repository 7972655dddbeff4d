use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed life law: {0}")]
    MalformedLaw(String),

    #[error("not a probability sequence: {0}")]
    NonProbability(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("degenerate estimate: mean {mean:e} is within 10 standard errors ({std_error:e}) of zero")]
    DegenerateEstimate { mean: f64, std_error: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("inconsistent plan: {0}")]
    Plan(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
