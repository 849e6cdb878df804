use std::fs::File;
use std::path::Path;

use cbf_feasibility::sim::{SimTrace, TerminalStatus};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// `completed` or `infeasible`.
    pub status: String,
    pub first_infeasible_t: Option<f64>,
    pub min_b: f64,
    pub min_psi1: f64,
    pub max_v: f64,
    pub final_v: f64,
    pub steps: usize,
}

impl RunSummary {
    pub fn from_trace(trace: &SimTrace) -> Self {
        let status = match trace.terminal {
            TerminalStatus::Completed => "completed",
            TerminalStatus::InfeasibleAt(_) => "infeasible",
        };
        Self {
            status: status.to_owned(),
            first_infeasible_t: trace.terminal.infeasible_time(),
            min_b: trace.min_monitor(|m| m.b),
            min_psi1: trace.min_monitor(|m| m.psi1),
            max_v: trace.max_state(0),
            final_v: trace.final_state[0],
            steps: trace.records.len(),
        }
    }

    pub fn is_completed(&self) -> bool {
        self.status == "completed"
    }
}

/// Two runs with the same parameters: the candidate-constrained loop and
/// the braking-distance baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub p1: f64,
    pub p2: f64,
    pub feasibility: RunSummary,
    pub braking_baseline: RunSummary,
    /// Samples both traces share.
    pub common_steps: usize,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::to_writer_pretty(file, value).map_err(|e| CliError::Config(e.to_string()))
}
