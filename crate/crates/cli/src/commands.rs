use std::fs;
use std::path::{Path, PathBuf};

use cbf_feasibility::acc::{self, AccScenario, Baseline};
use cbf_feasibility::sim::{self, SimTrace};
use log::{debug, info};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{BaselineKind, RunConfig};
use crate::summary::{write_json, Comparison, RunSummary};
use crate::{trace_csv, CliError};

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_TRACE_DIR: &str = "traces";
pub const FEASIBILITY_TRACE_FILE: &str = "feasibility_trace.csv";
pub const BASELINE_TRACE_FILE: &str = "baseline_trace.csv";
pub const COMPARISON_FILE: &str = "comparison.json";

#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: RunSummary,
    pub trace: SimTrace,
}

fn simulate(scenario: &AccScenario, config: &RunConfig, timing: bool) -> Result<SimTrace, CliError> {
    let controller = acc::build(scenario)?;
    Ok(sim::run(&controller, &config.sim_config(timing))?)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Runs one scenario and writes `trace.csv` and `summary.json` into `out`.
pub fn run(config: &RunConfig, out: &Path, timing: bool) -> Result<RunReport, CliError> {
    ensure_dir(out)?;
    let trace = simulate(&config.scenario(), config, timing)?;
    let summary = RunSummary::from_trace(&trace);
    trace_csv::write_file(&out.join(TRACE_FILE), &trace)?;
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    info!("run finished: {}", summary.status);
    Ok(RunReport { summary, trace })
}

/// One cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub p1: f64,
    pub p2: f64,
    pub feasibility_on: bool,
    pub status: String,
    pub first_infeasible_t: Option<f64>,
    pub min_b: f64,
    pub max_v: f64,
    pub final_v: f64,
}

pub fn sweep_trace_name(p1: f64, p2: f64, feasibility_on: bool) -> String {
    let toggle = if feasibility_on { "on" } else { "off" };
    format!("p1_{p1}_p2_{p2}_{toggle}.csv")
}

/// Runs every `(p1, p2)` pair with the feasibility row on and off.
///
/// Cells run on a pool of `workers` threads (all cores when `None`); each
/// writes its own trace under `out/traces`, and `sweep.csv` is written
/// once all cells are done, in `p1`, `p2`, on-then-off order.
pub fn sweep(
    base: &RunConfig,
    p1s: &[f64],
    p2s: &[f64],
    out: &Path,
    workers: Option<usize>,
    timing: bool,
) -> Result<Vec<SweepRow>, CliError> {
    if p1s.is_empty() || p2s.is_empty() {
        return Err(CliError::Config("sweep needs at least one p1 and one p2".into()));
    }
    let mut cells = Vec::with_capacity(2 * p1s.len() * p2s.len());
    for &p1 in p1s {
        for &p2 in p2s {
            for on in [true, false] {
                let cell = RunConfig {
                    p1,
                    p2,
                    feasibility_on: on,
                    ..base.clone()
                };
                cell.validate()?;
                cells.push(cell);
            }
        }
    }
    let trace_dir = out.join(SWEEP_TRACE_DIR);
    ensure_dir(&trace_dir)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let trace = simulate(&cell.scenario(), cell, timing)?;
                let path = trace_dir.join(sweep_trace_name(cell.p1, cell.p2, cell.feasibility_on));
                trace_csv::write_file(&path, &trace)?;
                let s = RunSummary::from_trace(&trace);
                debug!("cell p1={} p2={} on={}: {}", cell.p1, cell.p2, cell.feasibility_on, s.status);
                Ok(SweepRow {
                    p1: cell.p1,
                    p2: cell.p2,
                    feasibility_on: cell.feasibility_on,
                    status: s.status,
                    first_infeasible_t: s.first_infeasible_t,
                    min_b: s.min_b,
                    max_v: s.max_v,
                    final_v: s.final_v,
                })
            })
            .collect::<Result<_, CliError>>()
    })?;

    write_sweep_csv(&out.join(SWEEP_FILE), &rows)?;
    Ok(rows)
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    writer.write_record([
        "p1",
        "p2",
        "feasibility_on",
        "status",
        "first_infeasible_t",
        "min_b",
        "max_v",
        "final_v",
    ])?;
    for r in rows {
        writer.write_record([
            r.p1.to_string(),
            r.p2.to_string(),
            r.feasibility_on.to_string(),
            r.status.clone(),
            r.first_infeasible_t.map(|t| t.to_string()).unwrap_or_default(),
            r.min_b.to_string(),
            r.max_v.to_string(),
            r.final_v.to_string(),
        ])?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Runs the candidate-constrained loop and the braking-distance baseline
/// with identical parameters.
///
/// The config must name the baseline. The first run uses the gap barrier
/// with the feasibility row; the second replaces the gap barrier by the
/// braking-distance barrier and has no feasibility row.
pub fn compare_braking(config: &RunConfig, out: &Path, timing: bool) -> Result<Comparison, CliError> {
    if config.baseline != BaselineKind::MinBrakingDistance {
        return Err(CliError::InvalidKey {
            key: "baseline",
            reason: "compare-braking needs \"min_braking_distance\"".into(),
        });
    }
    ensure_dir(out)?;
    let base = config.scenario();
    let guarded = AccScenario {
        feasibility_on: true,
        baseline: Baseline::None,
        ..base
    };
    let braking = AccScenario {
        feasibility_on: false,
        baseline: Baseline::MinBrakingDistance,
        ..base
    };
    let guarded_trace = simulate(&guarded, config, timing)?;
    let braking_trace = simulate(&braking, config, timing)?;
    trace_csv::write_file(&out.join(FEASIBILITY_TRACE_FILE), &guarded_trace)?;
    trace_csv::write_file(&out.join(BASELINE_TRACE_FILE), &braking_trace)?;
    let comparison = Comparison {
        p1: config.p1,
        p2: config.p2,
        feasibility: RunSummary::from_trace(&guarded_trace),
        braking_baseline: RunSummary::from_trace(&braking_trace),
        common_steps: guarded_trace.records.len().min(braking_trace.records.len()),
    };
    write_json(&out.join(COMPARISON_FILE), &comparison)?;
    Ok(comparison)
}

/// `--out` wins over the config's `output` key.
pub fn output_dir(flag: Option<PathBuf>, config: &RunConfig) -> Result<PathBuf, CliError> {
    flag.or_else(|| config.output.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set \"output\"".into()))
}
