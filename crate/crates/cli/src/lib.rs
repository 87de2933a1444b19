//! Batch front-end: reads a JSON run configuration, dispatches one experiment
//! and writes CSV/JSON artifacts plus a manifest.

pub mod config;
pub mod output;
pub mod run;

pub use config::{Experiment, RunConfig};
pub use run::{execute, RunReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("simulation failed: {0}")]
    Simulation(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Simulation(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    /// Integrator failures are runtime errors; everything else the core
    /// rejects stems from the parameters it was given.
    pub(crate) fn from_core(section: &str, e: rydberg_rap::Error) -> Self {
        match e {
            rydberg_rap::Error::Integration { .. } => CliError::Simulation(e.to_string()),
            other => CliError::Config(format!("{section}: {other}")),
        }
    }
}
