//! Command-line orchestration for `ncgw`: configuration, subcommands and
//! artifact emission.

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] ncgw_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// An oracle self-check failed; outputs were still written.
    #[error("oracle failure: {0}")]
    OracleFailure(String),
}

impl CliError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if ncgw_core::audit::is_config_error(e) => 2,
            CliError::Core(ncgw_core::Error::StepTooCoarse { .. }) => 2,
            _ => 1,
        }
    }
}
