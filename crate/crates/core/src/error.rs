use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("tensor shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("moment tensors of order {0} are not supported (maximum is 4)")]
    UnsupportedOrder(usize),

    #[error("invalid distribution spec at `{field}`: {reason}")]
    InvalidSpec { field: String, reason: String },

    #[error("non-finite derivative for output {output} at theta = {theta:?}")]
    NonFinite { output: usize, theta: Vec<f64> },

    #[error("parameter outside model domain: {0}")]
    Domain(String),

    #[error("ODE integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("output {index} has non-positive variance after conditioning")]
    DegenerateOutput { index: usize },

    #[error("covariance matrix could not be conditioned: {0}")]
    Conditioning(String),

    #[error("gamma surrogate supports at most two outputs per observation time (got {0}); use the normal surrogate")]
    TooManyOutputs(usize),

    #[error("copula table not loaded; build one with `copula-table` or `CopulaTable::build`")]
    MissingCopulaTable,

    #[error("copula table build failed: {0}")]
    TableBuild(String),

    #[error("invalid copula table file: {0}")]
    TableFormat(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model evaluation failed for sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn spec(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidSpec {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
