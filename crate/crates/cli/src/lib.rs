//! Configuration and pipeline stages behind the `structembed` binary.

pub mod config;
pub mod pipeline;

use structembed::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage={stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Error,
    },
}

impl CliError {
    /// 0 success, 2 config, 3 input, 4 numerical divergence, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { source, .. } => match source {
                Error::Config(_) => 2,
                Error::Io { .. }
                | Error::Parse { .. }
                | Error::EmptyGraph
                | Error::UnknownNode(_)
                | Error::DimensionMismatch(_)
                | Error::ImportFormat { .. }
                | Error::MissingNode(_) => 3,
                Error::DivergenceDetected { .. } => 4,
                _ => 1,
            },
        }
    }

    pub fn stage(&self) -> Option<&'static str> {
        match self {
            CliError::Stage { stage, .. } => Some(stage),
            CliError::Config(_) => None,
        }
    }
}
