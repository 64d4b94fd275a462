// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};

mod config;
mod report;
mod run;

/// Mean-field descent-ascent experiments for pairwise zero-sum games on tori.
#[derive(Debug, Parser)]
#[command(name = "mfnash", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment.
    Run { config: PathBuf },
    /// Run every `*.toml` in a directory concurrently.
    Batch {
        dir: PathBuf,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Solve for the regularized equilibrium with the damped fixed-point iteration.
    SolveMne { config: PathBuf },
    /// Check the schedule against the admissibility conditions and print the derived parameters.
    ValidateSchedule { config: PathBuf },
    /// Print the version.
    Version,
}

fn run_one(path: &std::path::Path, solve: bool) -> i32 {
    let result = config::load(path).and_then(|exp| {
        if solve {
            run::solve_mne(&exp)
        } else {
            run::run_experiment(&exp)
        }
    });
    match result {
        Ok(o) => {
            println!("{}: {} ({})", path.display(), o.message, o.summary_path.display());
            o.exit_code
        }
        Err(e) => {
            eprintln!("{}: error: {e:#}", path.display());
            1
        }
    }
}

fn batch(dir: &std::path::Path, jobs: Option<usize>) -> i32 {
    let files = match run::batch_configs(dir) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 1;
        }
    };
    if files.is_empty() {
        eprintln!("no .toml configs in {}", dir.display());
        return 1;
    }
    let workers = jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .clamp(1, files.len());
    let next = AtomicUsize::new(0);
    let codes = Mutex::new(vec![0; files.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(path) = files.get(i) else { break };
                let code = run_one(path, false);
                codes.lock().expect("batch results lock")[i] = code;
            });
        }
    });
    let codes = codes.into_inner().expect("batch results lock");
    let failed = codes.iter().filter(|c| **c != 0).count();
    println!("batch: {} configs, {failed} non-zero", files.len());
    // runtime errors dominate bound failures
    if codes.contains(&1) {
        1
    } else {
        codes.into_iter().max().unwrap_or(0)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config } => run_one(&config, false),
        Command::Batch { dir, jobs } => batch(&dir, jobs),
        Command::SolveMne { config } => run_one(&config, true),
        Command::ValidateSchedule { config } => match config::load(&config).and_then(|e| run::describe_schedule(&e)) {
            Ok(text) => {
                print!("{text}");
                0
            }
            Err(e) => {
                eprintln!("{}: error: {e:#}", config.display());
                1
            }
        },
        Command::Version => {
            println!("mfnash {}", env!("CARGO_PKG_VERSION"));
            0
        }
    };
    ExitCode::from(code as u8)
}
