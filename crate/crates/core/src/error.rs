use thiserror::Error;

/// Errors raised anywhere between SQL text and executed result.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported construct: {0}")]
    Unsupported(String),

    #[error("unknown table `{0}`")]
    UnknownTable(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("type error: {0}")]
    Type(String),

    #[error("binding error: {0}")]
    Binding(String),

    #[error("pipeline document error at `{path}`: {message}")]
    Pipeline { path: String, message: String },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid plan: {0}")]
    Plan(String),

    #[error("shape error at graph node {node}: {message}")]
    Shape { node: usize, message: String },

    #[error("graph input `{0}` is not bound")]
    UnboundInput(String),

    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("unsupported UDF `{tag}` reached at plan node #{node}")]
    Udf { node: usize, tag: String },

    #[error("NULL in model feature `{feature}` at row {row}")]
    NullFeature { row: usize, feature: String },

    #[error("unknown category `{value}` for column `{column}` at row {row}")]
    UnknownCategory {
        row: usize,
        column: String,
        value: String,
    },

    #[error("clustering error: {0}")]
    Cluster(String),

    #[error("plan node cannot be expressed in SQL: {0}")]
    Codegen(String),

    #[error("workspace error: {0}")]
    Workspace(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
