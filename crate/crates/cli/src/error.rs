use std::path::Path;

/// Process exit status of every command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Usage = 1,
    Io = 2,
    Infeasible = 3,
    VerificationFailed = 4,
    SafetyViolation = 5,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: cannot parse field `{field}`: {msg}")]
    Parse { path: String, field: String, msg: String },
    #[error("invalid `{field}`: {msg}")]
    Invalid { field: String, msg: String },
    #[error("{0}")]
    Core(#[from] rsi_core::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit(&self) -> Exit {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } => Exit::Io,
            CliError::Invalid { .. } | CliError::Core(_) | CliError::Usage(_) => Exit::Usage,
        }
    }
}
