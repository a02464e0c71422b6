//! Stream generators, a brute-force oracle and an experiment runner for the
//! `distfreq` protocols.

pub mod config;
pub mod countsketch;
pub mod generate;
pub mod oracle;
pub mod output;
pub mod runner;
pub mod stats;

pub use config::{ExperimentConfig, Generator, ProtocolId};
pub use runner::{run_experiment, run_grid, Aggregate, GridReport, TrialReport, TrialRow};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("p = {p}: exact moment exceeds 128-bit range")]
    Overflow { p: u32 },
    #[error(transparent)]
    Core(#[from] distfreq::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
