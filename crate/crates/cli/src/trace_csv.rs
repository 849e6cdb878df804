//! Trace CSV files.
//!
//! One row per sample. Floats use the shortest representation that parses
//! back to the same value; `u` and `delta` are `NaN` on the infeasible
//! step and `solve_us` is empty when timing is off.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use cbf_feasibility::sim::SimTrace;

use crate::CliError;

pub const HEADER: [&str; 12] = [
    "t",
    "v",
    "z",
    "u",
    "delta",
    "qp_status",
    "b",
    "psi1",
    "phi",
    "b_hF",
    "safety_beta",
    "solve_us",
];

/// One parsed trace row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub v: f64,
    pub z: f64,
    pub u: f64,
    pub delta: f64,
    pub qp_status: String,
    pub b: f64,
    pub psi1: f64,
    pub phi: f64,
    pub b_hf: f64,
    pub safety_beta: f64,
    pub solve_us: Option<f64>,
}

pub fn rows(trace: &SimTrace) -> Vec<TraceRow> {
    trace
        .records
        .iter()
        .map(|r| TraceRow {
            t: r.t,
            v: r.state[0],
            z: r.state[1],
            u: r.control.as_ref().map_or(f64::NAN, |u| u[0]),
            delta: r.delta.unwrap_or(f64::NAN),
            qp_status: r.status.as_str().to_owned(),
            b: r.monitors.b,
            psi1: r.monitors.psi1,
            phi: r.monitors.phi,
            b_hf: r.monitors.b_hf,
            safety_beta: r.monitors.safety_beta,
            solve_us: r.solve_us,
        })
        .collect()
}

pub fn write<W: Write>(out: W, trace: &SimTrace) -> Result<(), CliError> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    writer.write_record(HEADER)?;
    for row in rows(trace) {
        let fields = [
            row.t.to_string(),
            row.v.to_string(),
            row.z.to_string(),
            row.u.to_string(),
            row.delta.to_string(),
            row.qp_status,
            row.b.to_string(),
            row.psi1.to_string(),
            row.phi.to_string(),
            row.b_hf.to_string(),
            row.safety_beta.to_string(),
            row.solve_us.map(|s| s.to_string()).unwrap_or_default(),
        ];
        writer.write_record(&fields)?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_file(path: &Path, trace: &SimTrace) -> Result<(), CliError> {
    let file = File::create(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write(file, trace)
}

pub fn read<R: Read>(input: R) -> Result<Vec<TraceRow>, CliError> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(CliError::Config(format!("unexpected trace header {headers:?}")));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let num = |i: usize| -> Result<f64, CliError> {
            record[i]
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("column {}: {e}", HEADER[i])))
        };
        out.push(TraceRow {
            t: num(0)?,
            v: num(1)?,
            z: num(2)?,
            u: num(3)?,
            delta: num(4)?,
            qp_status: record[5].to_owned(),
            b: num(6)?,
            psi1: num(7)?,
            phi: num(8)?,
            b_hf: num(9)?,
            safety_beta: num(10)?,
            solve_us: if record[11].is_empty() { None } else { Some(num(11)?) },
        });
    }
    Ok(out)
}

pub fn read_file(path: &Path) -> Result<Vec<TraceRow>, CliError> {
    let file = File::open(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read(file)
}
