//! Small dense inequality-constrained quadratic programs.
//!
//! Solves
//!
//! ```text
//!     minimize     1/2 w' H w + F' w
//!     subject to   A w <= b
//! ```
//!
//! with a phase-1 slack minimization (a dense simplex on the minimax
//! violation LP) followed by a primal active-set method over a Cholesky
//! factorization of `H`. The problems this crate produces have at most a
//! handful of variables and rows, so everything is dense and allocation is
//! not a concern.
//!
//! Infeasibility is reported with a certificate: the minimized largest
//! row violation `s* = min_w max_i (a_i w - b_i)`, which is strictly
//! positive exactly when the constraint set is empty.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Primal feasibility tolerance, and the phase-1 infeasibility threshold.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Stationarity residual tolerance `||Hw + F + A'λ||∞`.
pub const STATIONARITY_TOL: f64 = 1e-6;
/// Complementary slackness tolerance `|λ_i (a_i w - b_i)|`.
pub const COMPLEMENTARITY_TOL: f64 = 1e-6;
/// Most negative multiplier accepted in an optimal result.
pub const MULTIPLIER_TOL: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-12;
const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("cost matrix is not symmetric (|H_ij - H_ji| = {0:e})")]
    NotSymmetric(f64),
    #[error("cost matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("{0} did not terminate within {1} iterations")]
    IterationLimit(&'static str, usize),
    #[error("working-set constraints are linearly dependent")]
    DependentWorkingSet,
}

/// Dense QP instance `min 1/2 w'Hw + F'w  s.t.  A w <= b`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    h: DMatrix<f64>,
    f: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl QpProblem {
    /// Validates shapes, finiteness and symmetry of `h`.
    ///
    /// Positive definiteness is checked by [`solve`], since
    /// [`check_feasible`] does not need the cost.
    pub fn new(
        h: DMatrix<f64>,
        f: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
    ) -> Result<Self, QpError> {
        let n = f.len();
        if h.nrows() != n || h.ncols() != n {
            return Err(QpError::Dimension(format!(
                "H is {}x{} but F has length {}",
                h.nrows(),
                h.ncols(),
                n
            )));
        }
        if a.ncols() != n {
            return Err(QpError::Dimension(format!(
                "A has {} columns but there are {} variables",
                a.ncols(),
                n
            )));
        }
        if a.nrows() != b.len() {
            return Err(QpError::Dimension(format!(
                "A has {} rows but b has length {}",
                a.nrows(),
                b.len()
            )));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("H"));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("F"));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("A"));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("b"));
        }
        let scale = h.amax().max(1.0);
        let mut asym: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                asym = asym.max((h[(i, j)] - h[(j, i)]).abs());
            }
        }
        if asym > SYMMETRY_TOL * scale {
            return Err(QpError::NotSymmetric(asym));
        }
        Ok(Self { h, f, a, b })
    }

    /// Problem without inequality rows.
    pub fn unconstrained(h: DMatrix<f64>, f: DVector<f64>) -> Result<Self, QpError> {
        let n = f.len();
        Self::new(h, f, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn f(&self) -> &DVector<f64> {
        &self.f
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn num_vars(&self) -> usize {
        self.f.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn objective(&self, w: &DVector<f64>) -> f64 {
        0.5 * w.dot(&(&self.h * w)) + self.f.dot(w)
    }

    /// Largest row violation `max_i (a_i w - b_i)`, or `-inf` without rows.
    pub fn max_violation(&self, w: &DVector<f64>) -> f64 {
        let r = &self.a * w - &self.b;
        r.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn row_is_zero(&self, i: usize) -> bool {
        self.a.row(i).iter().all(|&v| v == 0.0)
    }
}

/// Outcome of [`check_feasible`].
#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    /// `witness` satisfies every row to within [`FEASIBILITY_TOL`].
    Feasible { witness: DVector<f64> },
    /// No point satisfies the rows; `min_max_violation` is the optimal
    /// phase-1 value and exceeds [`FEASIBILITY_TOL`].
    Infeasible { min_max_violation: f64 },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

impl QpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpResult {
    pub status: QpStatus,
    /// Minimizer, present iff `Optimal`.
    pub solution: Option<DVector<f64>>,
    /// One multiplier per row, present iff `Optimal`.
    pub multipliers: Option<DVector<f64>>,
    /// Rows in the final working set, ascending.
    pub active_set: Vec<usize>,
    /// Optimal cost, `+inf` when infeasible.
    pub objective: f64,
    /// Phase-1 certificate when infeasible.
    pub min_max_violation: Option<f64>,
    /// Active-set iterations spent in phase 2.
    pub iterations: usize,
}

impl QpResult {
    fn infeasible(certificate: f64) -> Self {
        Self {
            status: QpStatus::Infeasible,
            solution: None,
            multipliers: None,
            active_set: Vec::new(),
            objective: f64::INFINITY,
            min_max_violation: Some(certificate),
            iterations: 0,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// KKT residuals of a candidate primal/dual pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `max(0, max_i (a_i w - b_i))`
    pub primal: f64,
    /// `||Hw + F + A'λ||∞`
    pub stationarity: f64,
    /// `max_i |λ_i (a_i w - b_i)|`
    pub complementarity: f64,
    /// `min_i λ_i` (0 without rows)
    pub min_multiplier: f64,
}

impl KktResiduals {
    pub fn evaluate(problem: &QpProblem, w: &DVector<f64>, lambda: &DVector<f64>) -> Self {
        let slack = problem.a() * w - problem.b();
        let grad = problem.h() * w + problem.f() + problem.a().transpose() * lambda;
        let primal = slack.iter().copied().fold(0.0, f64::max);
        let complementarity = slack
            .iter()
            .zip(lambda.iter())
            .map(|(s, l)| (s * l).abs())
            .fold(0.0, f64::max);
        let min_multiplier = lambda.iter().copied().fold(0.0, f64::min);
        Self {
            primal,
            stationarity: grad.amax(),
            complementarity,
            min_multiplier,
        }
    }

    pub fn passes(&self) -> bool {
        self.primal <= FEASIBILITY_TOL
            && self.stationarity <= STATIONARITY_TOL
            && self.complementarity <= COMPLEMENTARITY_TOL
            && self.min_multiplier >= -MULTIPLIER_TOL
    }
}

impl QpResult {
    /// KKT residuals of an optimal result; `None` when infeasible.
    pub fn kkt(&self, problem: &QpProblem) -> Option<KktResiduals> {
        match (&self.solution, &self.multipliers) {
            (Some(w), Some(l)) => Some(KktResiduals::evaluate(problem, w, l)),
            _ => None,
        }
    }
}

/// Rows that carry decision-variable content, or an immediate certificate
/// when a zero row has a negative bound.
fn effective_rows(problem: &QpProblem) -> Result<Vec<usize>, f64> {
    let mut rows = Vec::with_capacity(problem.num_rows());
    let mut worst: f64 = 0.0;
    for i in 0..problem.num_rows() {
        if problem.row_is_zero(i) {
            // 0 <= b_i is a sign test on the bound alone.
            if problem.b[i] < -FEASIBILITY_TOL {
                worst = worst.max(-problem.b[i]);
            }
        } else {
            rows.push(i);
        }
    }
    if worst > 0.0 {
        Err(worst)
    } else {
        Ok(rows)
    }
}

/// Decides whether `A w <= b` has a solution.
///
/// Runs the phase-1 LP `min s  s.t.  A w - s 1 <= b, s >= 0` with a dense
/// simplex under Bland's rule. Zero rows with a nonnegative bound are
/// dropped; zero rows with a negative bound make the set empty outright.
pub fn check_feasible(problem: &QpProblem) -> Result<Feasibility, QpError> {
    let rows = match effective_rows(problem) {
        Ok(rows) => rows,
        Err(certificate) => {
            return Ok(Feasibility::Infeasible {
                min_max_violation: certificate,
            })
        }
    };
    let w = phase_one(problem, &rows)?;
    let violation = rows
        .iter()
        .map(|&i| problem.a.row(i).transpose().dot(&w) - problem.b[i])
        .fold(0.0, f64::max);
    if violation > FEASIBILITY_TOL {
        Ok(Feasibility::Infeasible {
            min_max_violation: violation,
        })
    } else {
        Ok(Feasibility::Feasible { witness: w })
    }
}

/// Dense tableau simplex for the minimax-violation LP over `rows`.
///
/// Columns: `w+` (n), `w-` (n), `s`, then one slack per row. Returns the
/// minimizing `w = w+ - w-`.
fn phase_one(problem: &QpProblem, rows: &[usize]) -> Result<DVector<f64>, QpError> {
    let n = problem.num_vars();
    let m = rows.len();
    if m == 0 {
        return Ok(DVector::zeros(n));
    }
    let s_col = 2 * n;
    let cols = 2 * n + 1 + m;
    let rhs = cols;
    let mut t = DMatrix::<f64>::zeros(m, cols + 1);
    for (r, &i) in rows.iter().enumerate() {
        for j in 0..n {
            let v = problem.a[(i, j)];
            t[(r, j)] = v;
            t[(r, n + j)] = -v;
        }
        t[(r, s_col)] = -1.0;
        t[(r, s_col + 1 + r)] = 1.0;
        t[(r, rhs)] = problem.b[i];
    }
    let mut basis: Vec<usize> = (0..m).map(|r| s_col + 1 + r).collect();
    // Reduced costs for `min s`.
    let mut cost = DVector::<f64>::zeros(cols + 1);
    cost[s_col] = 1.0;

    // A single pivot of `s` into the most violated row makes every
    // right-hand side nonnegative.
    let (start_row, min_b) = (0..m)
        .map(|r| (r, t[(r, rhs)]))
        .fold((0, f64::INFINITY), |acc, (r, v)| if v < acc.1 { (r, v) } else { acc });
    if min_b < 0.0 {
        pivot(&mut t, &mut cost, &mut basis, start_row, s_col);
    }

    let max_iter = 50 * (cols + m) + 100;
    for _ in 0..max_iter {
        // Bland: lowest-index column with a negative reduced cost.
        let entering = (0..cols).find(|&j| cost[j] < -PIVOT_TOL);
        let Some(col) = entering else {
            let mut w = DVector::zeros(n);
            for (r, &var) in basis.iter().enumerate() {
                if var < n {
                    w[var] += t[(r, rhs)];
                } else if var < 2 * n {
                    w[var - n] -= t[(r, rhs)];
                }
            }
            return Ok(w);
        };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            let coef = t[(r, col)];
            if coef > PIVOT_TOL {
                let ratio = t[(r, rhs)].max(0.0) / coef;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((best, best_ratio)) => {
                        if ratio < best_ratio || (ratio == best_ratio && basis[r] < basis[best]) {
                            Some((r, ratio))
                        } else {
                            Some((best, best_ratio))
                        }
                    }
                };
            }
        }
        // `s >= 0` bounds the objective, so an unbounded ray is only
        // possible along w+/w- pairs with zero cost; treat as converged.
        let Some((row, _)) = leave else {
            cost[col] = 0.0;
            continue;
        };
        pivot(&mut t, &mut cost, &mut basis, row, col);
    }
    Err(QpError::IterationLimit("phase-1 simplex", max_iter))
}

fn pivot(
    t: &mut DMatrix<f64>,
    cost: &mut DVector<f64>,
    basis: &mut [usize],
    row: usize,
    col: usize,
) {
    let p = t[(row, col)];
    let width = t.ncols();
    for j in 0..width {
        t[(row, j)] /= p;
    }
    for r in 0..t.nrows() {
        if r != row {
            let factor = t[(r, col)];
            if factor != 0.0 {
                for j in 0..width {
                    let v = t[(row, j)];
                    t[(r, j)] -= factor * v;
                }
                t[(r, col)] = 0.0;
            }
        }
    }
    let factor = cost[col];
    if factor != 0.0 {
        for j in 0..width {
            cost[j] -= factor * t[(row, j)];
        }
        cost[col] = 0.0;
    }
    basis[row] = col;
}

/// Solves the QP.
///
/// Returns `Infeasible` exactly when [`check_feasible`] does. Otherwise
/// iterates a primal active-set method from the phase-1 witness; removal
/// and blocking ties go to the lowest row index.
pub fn solve(problem: &QpProblem) -> Result<QpResult, QpError> {
    let n = problem.num_vars();
    let chol = problem
        .h
        .clone()
        .cholesky()
        .ok_or(QpError::NotPositiveDefinite)?;
    if (0..n).any(|i| chol.l_dirty()[(i, i)].partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)) {
        return Err(QpError::NotPositiveDefinite);
    }

    let mut w = match check_feasible(problem)? {
        Feasibility::Infeasible { min_max_violation } => {
            return Ok(QpResult::infeasible(min_max_violation))
        }
        Feasibility::Feasible { witness } => witness,
    };
    let rows = effective_rows(problem).unwrap_or_default();

    let h_inv_f = chol.solve(&problem.f);
    let mut working: Vec<usize> = Vec::new();
    let max_iter = 20 * (rows.len() + n) + 50;

    for iter in 0..max_iter {
        let (w_eq, lambda_w) = equality_qp(problem, &h_inv_f, &working)?;
        let step = &w_eq - &w;

        // Ratio test over rows outside the working set.
        let mut blocking: Option<(usize, f64)> = None;
        for &i in &rows {
            if working.contains(&i) {
                continue;
            }
            let a_i = problem.a.row(i).transpose();
            if a_i.dot(&w_eq) - problem.b[i] <= 0.0 {
                continue;
            }
            let rate = a_i.dot(&step);
            if rate <= PIVOT_TOL * a_i.norm() * step.norm() {
                continue;
            }
            let alpha = ((problem.b[i] - a_i.dot(&w)) / rate).clamp(0.0, 1.0);
            if blocking.is_none_or(|(_, best)| alpha < best) {
                blocking = Some((i, alpha));
            }
        }

        match blocking {
            Some((i, alpha)) => {
                w += alpha * step;
                working.push(i);
            }
            None => {
                w = w_eq;
                let scale = 1.0 + lambda_w.amax();
                let most_negative = lambda_w
                    .iter()
                    .enumerate()
                    .filter(|(_, &l)| l < -PIVOT_TOL * scale)
                    .fold(None::<(usize, f64)>, |acc, (k, &l)| match acc {
                        Some((bk, bl)) if bl < l || (bl == l && working[bk] < working[k]) => acc,
                        _ => Some((k, l)),
                    });
                match most_negative {
                    Some((k, _)) => {
                        working.remove(k);
                    }
                    None => {
                        let mut multipliers = DVector::zeros(problem.num_rows());
                        for (k, &i) in working.iter().enumerate() {
                            multipliers[i] = lambda_w[k].max(0.0);
                        }
                        working.sort_unstable();
                        return Ok(QpResult {
                            status: QpStatus::Optimal,
                            objective: problem.objective(&w),
                            solution: Some(w),
                            multipliers: Some(multipliers),
                            active_set: working,
                            min_max_violation: None,
                            iterations: iter + 1,
                        });
                    }
                }
            }
        }
    }
    Err(QpError::IterationLimit("active-set", max_iter))
}

/// Minimizer of the cost with the working rows held as equalities, and
/// their multipliers (range-space form through the Cholesky factor).
fn equality_qp(
    problem: &QpProblem,
    h_inv_f: &DVector<f64>,
    working: &[usize],
) -> Result<(DVector<f64>, DVector<f64>), QpError> {
    let n = problem.num_vars();
    let k = working.len();
    if k == 0 {
        return Ok((-h_inv_f, DVector::zeros(0)));
    }
    let mut a_w = DMatrix::zeros(k, n);
    let mut b_w = DVector::zeros(k);
    for (r, &i) in working.iter().enumerate() {
        a_w.row_mut(r).copy_from(&problem.a.row(i));
        b_w[r] = problem.b[i];
    }
    let svd = a_w.clone().svd(false, false);
    let s_max = svd.singular_values.max();
    if svd.singular_values.min() <= PIVOT_TOL * s_max.max(1.0) {
        return Err(QpError::DependentWorkingSet);
    }
    let dim = n + k;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&problem.h);
    kkt.view_mut((0, n), (n, k)).copy_from(&a_w.transpose());
    kkt.view_mut((n, 0), (k, n)).copy_from(&a_w);
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(&(-&problem.f));
    rhs.rows_mut(n, k).copy_from(&b_w);
    let lu = kkt.clone().full_piv_lu();
    let mut sol = lu.solve(&rhs).ok_or(QpError::DependentWorkingSet)?;
    // The Hessian can be badly scaled, so polish with a couple of refinement sweeps.
    for _ in 0..2 {
        let resid = &rhs - &kkt * &sol;
        match lu.solve(&resid) {
            Some(c) if c.iter().all(|x| x.is_finite()) => sol += c,
            _ => break,
        }
    }
    if !sol.iter().all(|x| x.is_finite()) {
        return Err(QpError::DependentWorkingSet);
    }
    let w = sol.rows(0, n).into_owned();
    let lambda = sol.rows(n, k).into_owned();
    Ok((w, lambda))
}
