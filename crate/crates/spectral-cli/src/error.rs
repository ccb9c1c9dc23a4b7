use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] spectral_core::Error),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{path}:{line}: ragged row: expected {expected} fields, got {got}")]
    RaggedRow {
        path: String,
        line: usize,
        expected: usize,
        got: usize,
    },

    #[error("{path}:{line}: unknown config key `{key}`")]
    UnknownKey {
        path: String,
        line: usize,
        key: String,
    },

    #[error("{path}:{line}: key `{key}`: cannot parse `{value}` as {expected}")]
    BadValue {
        path: String,
        line: usize,
        key: String,
        value: String,
        expected: &'static str,
    },

    #[error("unknown dataset kind `{0}`")]
    UnknownKind(String),

    #[error("{path}: {msg}")]
    ModelFormat { path: String, msg: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
