use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lassoggm_cli::config::{EvaluationEntry, Overrides, RunConfig};
use lassoggm_cli::{execute, Command};

#[derive(Parser)]
#[command(name = "lassoggm", version, about = "Bayesian sparse Gaussian graphical models")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a precision matrix and data from it.
    Simulate(Common),
    /// Fit one graphical model to a data file.
    Fit(Common),
    /// Fit finite mixtures over a range of K and select by BIC.
    FitMixture(Common),
    /// Fit the Dirichlet-process mixture.
    FitDp(Common),
    /// Score estimated precision matrices against the truth.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        estimate: Option<PathBuf>,
        /// Edge marginals from `fit`; edges then come from the median graph.
        #[arg(long)]
        marginals: Option<PathBuf>,
        #[arg(long)]
        method: Option<String>,
    },
    /// Fit on a training split and predict held-out samples.
    Predict(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Input data file (rows are samples).
    #[arg(long)]
    data: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            threads: self.threads,
            out_dir: self.out_dir.clone(),
            top_k: self.top_k,
            threshold: self.threshold,
            data: self.data.clone(),
        }
    }
}

fn init_logging() {
    let level = std::env::var("GGM_LOG_LEVEL").unwrap_or_else(|_| "warn".into());
    let filter = match level.as_str() {
        "error" | "warn" | "info" | "debug" => level.as_str(),
        _ => "warn",
    };
    env_logger::Builder::new()
        .parse_filters(filter)
        .format_timestamp(None)
        .init();
    if filter != level {
        log::warn!("ignoring GGM_LOG_LEVEL={level:?}; expected error, warn, info or debug");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    let (command, common, entry) = match cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c, None),
        Cmd::Fit(c) => (Command::Fit, c, None),
        Cmd::FitMixture(c) => (Command::FitMixture, c, None),
        Cmd::FitDp(c) => (Command::FitDp, c, None),
        Cmd::Predict(c) => (Command::Predict, c, None),
        Cmd::Evaluate {
            common,
            truth,
            estimate,
            marginals,
            method,
        } => {
            let entry = match (truth, estimate) {
                (Some(truth), Some(estimate)) => Some(EvaluationEntry {
                    truth,
                    estimate,
                    marginals,
                    structure: None,
                    n: None,
                    replicate: None,
                    method,
                }),
                (None, None) => None,
                _ => {
                    eprintln!("error: --truth and --estimate go together");
                    return ExitCode::from(2);
                }
            };
            (Command::Evaluate, common, entry)
        }
    };
    let result = RunConfig::load(common.config.as_deref(), &common.overrides()).and_then(|mut cfg| {
        if let Some(e) = entry {
            cfg.evaluations = vec![e];
        }
        execute(command, &cfg)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
