//! `misslab` — Monte Carlo lab and estimator front end for logistic
//! regression with missing data.

mod commands;
mod config;
mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{FitFlags, SimulateFlags};

#[derive(Parser)]
#[command(
    name = "misslab",
    version,
    about = "Missing-data estimators for logistic regression: simulation lab and dataset fits"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the Monte Carlo study and write metric tables.
    Simulate {
        /// JSON run configuration ({} is valid: every key has a default).
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Restrict to one scenario: S1, S2, S3 or S4.
        #[arg(long, value_name = "S1..S4")]
        scenario: Option<String>,
        /// Single sample size, overriding the configured sweep.
        #[arg(long, value_name = "INT")]
        n: Option<usize>,
        /// Monte Carlo trials per (scenario, n) pair.
        #[arg(long = "M", value_name = "INT")]
        trials: Option<usize>,
        /// Base seed (else config, else MISSLAB_SEED, else 42).
        #[arg(long, value_name = "INT")]
        seed: Option<u64>,
        /// Comma-separated methods: C,CC,IPW1,IPW2,MI5,MI20,ML.
        #[arg(long, value_name = "LIST", value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Worker threads for trial execution.
        #[arg(long, value_name = "INT")]
        jobs: Option<usize>,
        /// Output directory (created if absent).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Fit the estimators side by side on a CSV dataset.
    Fit {
        /// Input CSV: UTF-8, comma-separated, header row, `NA` for missing.
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        /// Response column (binary 0/1).
        #[arg(long, value_name = "NAME")]
        response: String,
        /// Comma-separated predictor columns.
        #[arg(long, value_name = "LIST", value_delimiter = ',', required = true)]
        predictors: Vec<String>,
        /// Comma-separated methods: CC,IPW,MI5,MI20,ML.
        #[arg(long, value_name = "LIST", value_delimiter = ',', required = true)]
        methods: Vec<String>,
        /// Bootstrap resamples for ML standard errors (default 200).
        #[arg(long, value_name = "INT")]
        bootstrap: Option<usize>,
        /// Base seed (else MISSLAB_SEED, else 42).
        #[arg(long, value_name = "INT")]
        seed: Option<u64>,
        /// Output directory (created if absent).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let env_seed = std::env::var("MISSLAB_SEED").ok();
    match cli.cmd {
        Cmd::Simulate { config, scenario, n, trials, seed, methods, jobs, out } => {
            let file = config::load_config(&config)?;
            let flags = SimulateFlags { scenario, n, trials, seed, methods, jobs };
            let plan = config::simulate_plan(&flags, &file, env_seed.as_deref(), out)?;
            commands::cmd_simulate(&plan)
        }
        Cmd::Fit { data, response, predictors, methods, bootstrap, seed, out } => {
            let flags = FitFlags { data, response, predictors, methods, bootstrap, seed, out };
            let plan = config::fit_plan(&flags, env_seed.as_deref())?;
            commands::cmd_fit(&plan)
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        // One line, machine-parsable: `error: <cause>: <cause>: …`.
        let msg = format!("{err:#}").replace('\n', " ");
        eprintln!("error: {msg}");
        std::process::exit(1);
    }
}
