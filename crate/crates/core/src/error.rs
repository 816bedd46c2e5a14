use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("{op} expects a scalar, got shape {shape:?}")]
    NotScalar {
        op: &'static str,
        shape: (usize, usize),
    },

    #[error("variable {index} does not belong to this tape")]
    ForeignVar { index: usize },

    #[error("sample sets differ in size: {left} vs {right}")]
    Size { left: usize, right: usize },

    #[error("assignment solver capacity exceeded: n = {n} > {max}")]
    Capacity { n: usize, max: usize },

    #[error("interpolation measure undefined for coincident endpoints")]
    UndefinedMeasure,

    #[error("non-finite value during {context}")]
    NonFinite { context: String },

    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
