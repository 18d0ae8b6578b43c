use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the identification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("grid error: {0}")]
    Grid(String),
    #[error("data error at row {row}, column `{column}`: {reason}")]
    Data { row: usize, column: String, reason: String },
    #[error("degenerate column `{0}`: zero variance")]
    DegenerateColumn(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("term `{0}` evaluates to non-finite values")]
    Evaluation(String),
    #[error("R² undefined: target has zero variance")]
    UndefinedR2,
    #[error("selection error: {0}")]
    Selection(String),
    #[error("trajectory diverged at t = {time}")]
    Divergence { time: f64 },
    #[error("t = {t} outside signal span [0, {span}]")]
    Range { t: f64, span: f64 },
    #[error("models are not comparable: {0}")]
    Comparability(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps the error with a note about which stage produced it.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// True for failures of the numerics (divergence, undefined metrics),
    /// as opposed to invalid input or configuration.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Divergence { .. } | Error::UndefinedR2 | Error::Evaluation(_) | Error::Selection(_) => true,
            Error::Context { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
