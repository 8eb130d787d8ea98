//! Command-line driver: `run` executes one configured experiment, `report`
//! summarizes the run registry.

pub mod config;
pub mod output;
pub mod tasks;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use config::ExperimentConfig;
use output::{append_record, summarize_registry, RunRecord};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Worker thread count; 0 or unset lets rayon decide.
pub const THREADS_ENV: &str = "NONHARMONIC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "nonharmonic", version, about = "Nonharmonic pseudo-differential calculus experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the run registry as CSV.
    Report {
        #[arg(long)]
        registry: PathBuf,
    },
}

fn exit_code(err: &Error) -> i32 {
    if err.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_NUMERICAL
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a non-negative integer, got {raw:?}")))?;
    // A second initialization (e.g. in tests) is harmless.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

/// Runs one experiment and returns whether its checks passed.
pub fn run(config_path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<bool> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let dir = out.unwrap_or_else(|| PathBuf::from(&config.output_dir));
    let outcome = tasks::run_task(&config)?;

    std::fs::create_dir_all(&dir)?;
    let digest = config.digest();
    let stem = format!("{}-{}", config.task.name(), &digest[..12]);
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    std::fs::write(&csv_path, outcome.table.render())?;
    let summary = serde_json::json!({
        "task": config.task.name(),
        "digest": digest,
        "seed": config.seed,
        "passed": outcome.passed,
        "config": config,
        "results": outcome.summary,
    });
    std::fs::write(&json_path, serde_json::to_string_pretty(&summary)? + "\n")?;

    append_record(
        &dir,
        &RunRecord {
            digest,
            timestamp: chrono::Utc::now().to_rfc3339(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            task: config.task.name().to_string(),
            seed: config.seed,
            csv: vec![csv_path],
            summary: json_path,
            passed: outcome.passed,
        },
    )?;
    Ok(outcome.passed)
}

/// Prints the registry summary; fails if nothing in it could be read.
pub fn report(registry: &Path) -> Result<()> {
    let text = std::fs::read_to_string(registry)
        .map_err(|e| Error::Config(format!("cannot read registry {}: {e}", registry.display())))?;
    let (csv, corrupt, total) = summarize_registry(&text);
    for line in &corrupt {
        eprintln!("warning: skipping corrupt registry line {line}");
    }
    if total > 0 && corrupt.len() == total {
        return Err(Error::Config("every registry line is corrupt".into()));
    }
    print!("{csv}");
    Ok(())
}

/// Entry point; returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    let result = match cli.command {
        Command::Run { config, out, seed } => run(&config, out, seed).map(|ok| if ok { EXIT_PASS } else { EXIT_FAIL }),
        Command::Report { registry } => report(&registry).map(|_| EXIT_PASS),
    };
    match result {
        Ok(code) => {
            if code == EXIT_FAIL {
                eprintln!("checks failed; see the summary JSON");
            }
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
