//! Command-line front end: configuration, file formats and the six commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use config::RunConfig;
use error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Fit,
    FitMixture,
    FitDp,
    Evaluate,
    Predict,
}

/// Runs one command inside a worker pool capped at `threads`.
pub fn execute(command: Command, cfg: &RunConfig) -> CliResult<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match command {
        Command::Simulate => commands::simulate(cfg),
        Command::Fit => commands::fit(cfg),
        Command::FitMixture => commands::fit_mixture(cfg),
        Command::FitDp => commands::fit_dp(cfg),
        Command::Evaluate => commands::evaluate(cfg),
        Command::Predict => commands::predict(cfg),
    })
}
