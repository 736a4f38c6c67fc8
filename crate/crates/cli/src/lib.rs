//! Config ingestion and the synthesize → verify → simulate → report workflow.

pub mod commands;
pub mod config;
pub mod error;
pub mod files;

pub use commands::{cmd_report, cmd_simulate, cmd_synthesize, cmd_verify};
pub use config::{parse_config, ProblemConfig};
pub use error::{CliError, Exit};

/// Worker count from `RSI_THREADS`; `None` (unset or 0) means automatic.
pub fn threads_from_env(value: Option<&str>) -> Result<Option<usize>, CliError> {
    match value.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => match v.parse::<usize>() {
            Ok(0) => Ok(None),
            Ok(n) => Ok(Some(n)),
            Err(_) => Err(CliError::Usage(format!("RSI_THREADS must be a non-negative integer, got {v:?}"))),
        },
    }
}
