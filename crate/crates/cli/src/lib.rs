//! Command-line front end for the cruise-control feasibility experiments.
//!
//! Three commands: `run` simulates one configuration, `sweep` crosses
//! lists of barrier slopes with the feasibility row on and off, and
//! `compare-braking` pits the feasibility row against the
//! braking-distance barrier. Results go to files; standard output carries
//! a short summary.
//!
//! Exit codes: 0 when the (primary) run completes, 2 when it stops at an
//! infeasible QP, 1 on any configuration or I/O error.

use std::io::Write;
use std::path::PathBuf;

use cbf_feasibility::acc::AccError;
use cbf_feasibility::sim::SimError;
use clap::{Parser, Subcommand};
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod sparkline;
pub mod summary;
pub mod trace_csv;

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

/// Environment variable holding the log filter (`error`, `info`, `debug`).
pub const LOG_ENV: &str = "CBF_FEAS_LOG";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("config key `{key}`: {reason}")]
    InvalidKey { key: &'static str, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Scenario(#[from] AccError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Parser)]
#[command(name = "cbf-feas", version, about = "Feasibility-guarded CBF-CLF cruise control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Leave `solve_us` empty so traces are reproducible byte for byte.
        #[arg(long)]
        no_timing: bool,
    },
    /// Cross p1 and p2 lists with the feasibility row on and off.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        p1: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        p2: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        no_timing: bool,
    },
    /// Feasibility row versus the braking-distance barrier.
    CompareBraking {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_timing: bool,
    },
}

/// Runs a parsed command, printing the summary to `stdout`, and returns
/// the exit code.
pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<i32, CliError> {
    match cli.command {
        Command::Run { config, out, no_timing } => {
            let config = RunConfig::load(&config)?;
            let out = commands::output_dir(out, &config)?;
            let report = commands::run(&config, &out, !no_timing)?;
            let s = &report.summary;
            let speeds: Vec<f64> = report.trace.records.iter().map(|r| r.state[0]).collect();
            let _ = writeln!(stdout, "status       {}", s.status);
            if let Some(t) = s.first_infeasible_t {
                let _ = writeln!(stdout, "infeasible t {t}");
            }
            let _ = writeln!(stdout, "min b        {:.6}", s.min_b);
            let _ = writeln!(stdout, "min psi1     {:.6}", s.min_psi1);
            let _ = writeln!(stdout, "max v        {:.4}", s.max_v);
            let _ = writeln!(stdout, "final v      {:.4}", s.final_v);
            let _ = writeln!(stdout, "v            [{}]", sparkline::sparkline(&speeds, 60));
            Ok(if s.is_completed() { EXIT_OK } else { EXIT_INFEASIBLE })
        }
        Command::Sweep {
            config,
            p1,
            p2,
            out,
            workers,
            no_timing,
        } => {
            let config = RunConfig::load(&config)?;
            let out = commands::output_dir(out, &config)?;
            if workers == Some(0) {
                return Err(CliError::Config("--workers must be at least 1".into()));
            }
            let rows = commands::sweep(&config, &p1, &p2, &out, workers, !no_timing)?;
            let _ = writeln!(stdout, "{:>6} {:>6} {:>4} {:>11} {:>8} {:>9}", "p1", "p2", "fea", "status", "t_inf", "max_v");
            for r in &rows {
                let t = r.first_infeasible_t.map(|t| format!("{t:.1}")).unwrap_or_else(|| "-".into());
                let _ = writeln!(
                    stdout,
                    "{:>6} {:>6} {:>4} {:>11} {:>8} {:>9.4}",
                    r.p1,
                    r.p2,
                    if r.feasibility_on { "on" } else { "off" },
                    r.status,
                    t,
                    r.max_v
                );
            }
            Ok(EXIT_OK)
        }
        Command::CompareBraking { config, out, no_timing } => {
            let config = RunConfig::load(&config)?;
            let out = commands::output_dir(out, &config)?;
            let c = commands::compare_braking(&config, &out, !no_timing)?;
            for (name, s) in [("feasibility", &c.feasibility), ("braking", &c.braking_baseline)] {
                let t = s.first_infeasible_t.map(|t| format!(" at t = {t}")).unwrap_or_default();
                let _ = writeln!(stdout, "{name:<12} {}{t}, max v {:.4}", s.status, s.max_v);
            }
            Ok(if c.feasibility.is_completed() { EXIT_OK } else { EXIT_INFEASIBLE })
        }
    }
}
