use thiserror::Error;

/// Crate-wide error type. Variants are grouped by the subsystem that raises them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("duplicate namespace {namespace:?} (lines {first_line} and {second_line})")]
    DuplicateNamespace {
        namespace: String,
        first_line: usize,
        second_line: usize,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unresolved ground truth namespaces for tasks: {task_ids:?}")]
    UnresolvedGroundTruth { task_ids: Vec<String> },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty document set")]
    EmptyDocuments,

    #[error("empty query for task {task_id}")]
    EmptyQuery { task_id: String },

    #[error("transport error talking to {service}: {message}")]
    Transport { service: String, message: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },

    #[error("checksum failure for {file}")]
    ChecksumFailure { file: String },

    #[error("corrupt index data in {file}: {message}")]
    CorruptIndex { file: String, message: String },

    #[error("contamination: namespaces {namespaces:?} are in the exclusion set")]
    Contamination { namespaces: Vec<String> },

    #[error("config error: {0}")]
    Config(String),

    #[error("task {task_id}: {source}")]
    Task {
        task_id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn transport(service: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Transport {
            service: service.into(),
            message: message.into(),
        }
    }

    pub fn for_task(self, task_id: impl Into<String>) -> Self {
        Error::Task {
            task_id: task_id.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
