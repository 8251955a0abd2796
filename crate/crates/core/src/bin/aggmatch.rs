use std::path::PathBuf;
use std::process::ExitCode;

use aggmatch::experiment::{dump, run_grid, DumpKind, ExperimentConfig, RunError};
use aggmatch::trainer::Method;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aggmatch", version, about = "Semi-supervised training with aggregated pseudo labels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured method and seed, writing metrics and a report.
    Run {
        config: PathBuf,
        /// Run the seeds of each method on separate threads.
        #[arg(long)]
        parallel_seeds: bool,
        /// Dotted-path overrides such as `--train.iterations=10`.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Write a CSV dump from a saved checkpoint.
    Dump {
        config: PathBuf,
        #[arg(long)]
        what: String,
        /// Defaults to the first configured method.
        #[arg(long)]
        method: Option<String>,
        /// Defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load(config: &PathBuf, overrides: &[String]) -> Result<ExperimentConfig, RunError> {
    ExperimentConfig::load(config, overrides).map_err(|e| RunError::Config(e.to_string()))
}

fn execute(command: Command) -> Result<(), RunError> {
    match command {
        Command::Run { config, parallel_seeds, overrides } => {
            let cfg = load(&config, &overrides)?;
            let results = run_grid(&cfg, parallel_seeds)?;
            for r in &results {
                println!("{} seed {}: test accuracy {}", r.method.as_str(), r.seed, aggmatch::fmt_float(r.final_test_accuracy));
            }
            println!("report written to {}", cfg.output_dir.join("report.json").display());
            Ok(())
        }
        Command::Dump { config, what, method, seed, overrides } => {
            let cfg = load(&config, &overrides)?;
            let what = DumpKind::parse(&what)
                .ok_or_else(|| RunError::Config(format!("--what must be features, attention or queue, got `{what}`")))?;
            let method = match method {
                Some(m) => serde_json::from_value::<Method>(serde_json::Value::String(m.clone()))
                    .map_err(|_| RunError::Config(format!("unknown method `{m}`")))?,
                None => cfg.methods()[0],
            };
            let seed = seed.unwrap_or(cfg.seeds[0]);
            let path = dump(&cfg, what, method, seed)?;
            println!("{}", path.display());
            Ok(())
        }
    }
}
