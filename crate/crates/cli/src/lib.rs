//! Library surface of the `dpmkit` experiment harness; the binary in
//! `main.rs` is a thin argument-parsing shell over these functions so tests
//! can drive the commands directly.

pub mod commands;
pub mod config;

pub use commands::{run_compare, run_convergence, run_plan, run_sample};
pub use config::{ProblemConfig, RunConfig, ScheduleName, SolverConfig};

/// Command failures, split by exit code: config problems exit 2, runtime
/// problems exit 3.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<dpmkit_core::Error> for CliError {
    fn from(e: dpmkit_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
