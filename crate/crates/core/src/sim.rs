//! Sampled-data QP control loop.
//!
//! At each sample `t_k = k dt` the controller's rows are evaluated at the
//! current state, the QP is solved, and the resulting control is held
//! constant while the plant is integrated over `[t_k, t_k + dt)` with
//! fixed-step RK4. A run stops at the first infeasible QP; no fallback
//! control is applied.

use std::time::Instant;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::constraints::{labels, stack_rows, ConstraintRow};
use crate::dynamics::{AffineSystem, Control, State};
use crate::qp::{self, KktResiduals, QpError, QpProblem, QpResult, QpStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("integration produced a non-finite state at t = {t}: {state:?}")]
    NonFinite { t: f64, state: Vec<f64> },
    #[error("non-finite control {0:?}")]
    NonFiniteControl(Vec<f64>),
}

/// `1/2 w' H w + F' w` over `w = (u, δ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
}

/// Scalar signals logged at every sample. Entries that do not apply to a
/// controller are `NaN`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monitors {
    /// Safety barrier `b(x)`.
    pub b: f64,
    /// Second element of the barrier chain.
    pub psi1: f64,
    /// Feasibility candidate `φ(x)`.
    pub phi: f64,
    /// Unsimplified feasibility function `b_hF(x)`.
    pub b_hf: f64,
    /// Right-hand side of the safety row.
    pub safety_beta: f64,
}

impl Default for Monitors {
    fn default() -> Self {
        Self {
            b: f64::NAN,
            psi1: f64::NAN,
            phi: f64::NAN,
            b_hf: f64::NAN,
            safety_beta: f64::NAN,
        }
    }
}

/// A pointwise QP controller: everything the loop needs at a state.
pub trait Controller: Send + Sync {
    fn system(&self) -> &AffineSystem;
    /// Rows over `w = (u, δ)` evaluated at `x`.
    fn rows(&self, x: &State) -> Vec<ConstraintRow>;
    fn cost(&self, x: &State) -> QuadraticCost;
    fn monitors(&self, x: &State) -> Monitors;
    /// Barrier chain values at `x`; a run warns if any is negative at `t = 0`.
    fn barrier_chain(&self, x: &State) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Sampling interval (s).
    pub dt: f64,
    /// Total simulated time (s).
    pub horizon: f64,
    /// RK4 substeps per sampling interval.
    pub substeps: usize,
    pub initial_state: State,
    /// Record wall-clock time of each QP solve.
    pub record_timing: bool,
}

impl SimConfig {
    pub fn new(initial_state: State) -> Self {
        Self {
            dt: 0.1,
            horizon: 30.0,
            substeps: 10,
            initial_state,
            record_timing: true,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(SimError::Config(format!(
                "horizon must be nonnegative, got {}",
                self.horizon
            )));
        }
        if self.substeps == 0 {
            return Err(SimError::Config("substeps must be at least 1".into()));
        }
        if self.initial_state.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Config("initial state is not finite".into()));
        }
        Ok(())
    }

    /// Number of sampling intervals in the horizon.
    pub fn num_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TerminalStatus {
    Completed,
    InfeasibleAt(f64),
}

impl TerminalStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, TerminalStatus::Completed)
    }

    pub fn infeasible_time(&self) -> Option<f64> {
        match *self {
            TerminalStatus::InfeasibleAt(t) => Some(t),
            TerminalStatus::Completed => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub t: f64,
    pub state: State,
    /// Control held over `[t, t + dt)`; `None` on the infeasible step.
    pub control: Option<Control>,
    pub delta: Option<f64>,
    pub status: QpStatus,
    pub monitors: Monitors,
    /// Solve wall time in microseconds, when timing is recorded.
    pub solve_us: Option<f64>,
    pub kkt: Option<KktResiduals>,
    /// Whether the rows other than the Lyapunov row intersect.
    pub conflict_free: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub dt: f64,
    pub records: Vec<SimRecord>,
    pub terminal: TerminalStatus,
    /// State at the end of the run (time `horizon` when completed).
    pub final_state: State,
    pub final_monitors: Monitors,
}

impl SimTrace {
    /// Minimum of a monitor over every record and the final state.
    pub fn min_monitor(&self, pick: impl Fn(&Monitors) -> f64) -> f64 {
        self.monitor_values(pick).fold(f64::INFINITY, f64::min)
    }

    pub fn max_state(&self, index: usize) -> f64 {
        self.records
            .iter()
            .map(|r| r.state[index])
            .chain(self.terminal_state_value(index))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_state(&self, index: usize) -> f64 {
        self.records
            .iter()
            .map(|r| r.state[index])
            .chain(self.terminal_state_value(index))
            .fold(f64::INFINITY, f64::min)
    }

    fn monitor_values<'a>(&'a self, pick: impl Fn(&Monitors) -> f64 + 'a) -> impl Iterator<Item = f64> + 'a {
        let last = self.terminal.is_completed().then_some(self.final_monitors);
        self.records
            .iter()
            .map(|r| r.monitors)
            .chain(last)
            .map(move |m| pick(&m))
    }

    fn terminal_state_value(&self, index: usize) -> Option<f64> {
        self.terminal.is_completed().then(|| self.final_state[index])
    }
}

/// Result of one sample: the QP and, when optimal, the split decision.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub problem: QpProblem,
    pub result: QpResult,
    pub control: Option<Control>,
    pub delta: Option<f64>,
}

/// Solves the pointwise QP over `w = (u_1..u_q, δ)`.
pub fn step(rows: &[ConstraintRow], cost: &QuadraticCost, control_dim: usize) -> Result<StepOutcome, SimError> {
    let dim = control_dim + 1;
    if cost.f.len() != dim {
        return Err(SimError::Config(format!(
            "cost has {} variables, expected {dim}",
            cost.f.len()
        )));
    }
    let (a, b) = stack_rows(rows, dim);
    let problem = QpProblem::new(cost.h.clone(), cost.f.clone(), a, b)?;
    let result = qp::solve(&problem)?;
    let (control, delta) = match &result.solution {
        Some(w) => (Some(w.rows(0, control_dim).into_owned()), Some(w[control_dim])),
        None => (None, None),
    };
    Ok(StepOutcome {
        problem,
        result,
        control,
        delta,
    })
}

/// Classical RK4 over `dt` in `substeps` equal steps with `u` held.
pub fn integrate_hold(
    system: &AffineSystem,
    x: &State,
    u: &Control,
    dt: f64,
    substeps: usize,
) -> Result<State, SimError> {
    if u.iter().any(|v| !v.is_finite()) {
        return Err(SimError::NonFiniteControl(u.iter().copied().collect()));
    }
    let h = dt / substeps as f64;
    let field = |s: &State| system.vector_field(s, u);
    let mut state = x.clone();
    for _ in 0..substeps {
        let k1 = field(&state);
        let k2 = field(&(&state + &k1 * (h / 2.0)));
        let k3 = field(&(&state + &k2 * (h / 2.0)));
        let k4 = field(&(&state + &k3 * h));
        state += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    if state.iter().any(|v| !v.is_finite()) {
        return Err(SimError::NonFinite {
            t: dt,
            state: state.iter().copied().collect(),
        });
    }
    Ok(state)
}

/// Runs the closed loop over the configured horizon.
pub fn run(controller: &dyn Controller, config: &SimConfig) -> Result<SimTrace, SimError> {
    config.validate()?;
    let system = controller.system();
    let q = system.control_dim();
    let mut x = config.initial_state.clone();

    let chain = controller.barrier_chain(&x);
    if chain.iter().any(|&v| v < 0.0) {
        warn!("initial state lies outside the barrier chain sets: {chain:?}");
    }

    let steps = config.num_steps();
    let mut records = Vec::with_capacity(steps);
    let mut terminal = TerminalStatus::Completed;

    for k in 0..steps {
        let t = k as f64 * config.dt;
        let rows = controller.rows(&x);
        let cost = controller.cost(&x);
        let monitors = controller.monitors(&x);

        let started = config.record_timing.then(Instant::now);
        let outcome = step(&rows, &cost, q)?;
        let solve_us = started.map(|s| s.elapsed().as_secs_f64() * 1e6);

        let conflict_free = rows_intersect(&rows, &cost)?;
        let kkt = outcome.result.kkt(&outcome.problem);
        let status = outcome.result.status;
        records.push(SimRecord {
            t,
            state: x.clone(),
            control: outcome.control.clone(),
            delta: outcome.delta,
            status,
            monitors,
            solve_us,
            kkt,
            conflict_free,
        });

        let Some(u) = outcome.control else {
            debug!(
                "QP infeasible at t = {t} (certificate {:?})",
                outcome.result.min_max_violation
            );
            terminal = TerminalStatus::InfeasibleAt(t);
            break;
        };
        x = integrate_hold(system, &x, &u, config.dt, config.substeps).map_err(|e| match e {
            SimError::NonFinite { state, .. } => SimError::NonFinite { t: t + config.dt, state },
            other => other,
        })?;
    }

    let final_monitors = controller.monitors(&x);
    Ok(SimTrace {
        dt: config.dt,
        records,
        terminal,
        final_state: x,
        final_monitors,
    })
}

/// Three-way intersection of the non-Lyapunov rows.
fn rows_intersect(rows: &[ConstraintRow], cost: &QuadraticCost) -> Result<bool, SimError> {
    let kept: Vec<ConstraintRow> = rows.iter().filter(|r| r.label != labels::CLF).cloned().collect();
    let (a, b) = stack_rows(&kept, cost.f.len());
    let problem = QpProblem::new(cost.h.clone(), cost.f.clone(), a, b)?;
    Ok(qp::check_feasible(&problem)?.is_feasible())
}
