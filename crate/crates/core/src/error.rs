use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown context `{0}`")]
    UnknownContext(String),

    #[error("unknown observable `{0}`")]
    UnknownObservable(String),

    #[error("observable `{observable}` is not part of context `{context}`")]
    NotInContext { context: String, observable: String },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid distribution at {location}: {reason}")]
    InvalidDistribution { location: String, reason: String },

    #[error("size cap exceeded: {what} is {size}, cap is {cap}")]
    CapExceeded { what: String, size: u128, cap: u128 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate branch: {0}")]
    DegenerateBranch(String),

    #[error("missing transition {source_id} -> {target_id}")]
    MissingTransition { source_id: String, target_id: String },

    #[error("broken branch chain: atom `{atom}` has no image in transition {source_id} -> {target_id}")]
    BrokenChain {
        atom: String,
        source_id: String,
        target_id: String,
    },

    #[error("loop does not close: starts at `{first}`, ends at `{last}`")]
    OpenLoop { first: String, last: String },

    #[error("invalid atlas: {0}")]
    InvalidAtlas(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("linear program failed: {0}")]
    Solver(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
