//! Affine-in-control inequality rows for barrier, Lyapunov and bound
//! constraints.
//!
//! Every row lives over the decision vector `w = (u_1, .., u_q, δ)`, where
//! `δ` is the Lyapunov relaxation, and reads `a · w <= beta`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dynamics::{AffineSystem, ControlBounds, State};

pub type ScalarFn = Arc<dyn Fn(&State) -> f64 + Send + Sync>;
/// State to a row vector of length `q` (one entry per control).
pub type RowFn = Arc<dyn Fn(&State) -> DVector<f64> + Send + Sync>;

pub mod labels {
    pub const CLF: &str = "clf";
    pub const UPPER_BOUND: &str = "limit_upper";
    pub const LOWER_BOUND: &str = "limit_lower";
    pub const SAFETY: &str = "hocbf_safety";
    pub const FEASIBILITY: &str = "feasibility";
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("class-K slope must be positive and finite, got {0}")]
    InvalidSlope(f64),
    #[error("relative degree {0} is not supported (only 1 and 2)")]
    UnsupportedRelativeDegree(usize),
    #[error("relative degree {degree} needs {degree} class-K functions, got {given}")]
    AlphaCount { degree: usize, given: usize },
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

/// Class-K function: strictly increasing with `α(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassK {
    /// `α(s) = k s`
    Linear(f64),
}

impl ClassK {
    pub fn linear(slope: f64) -> Result<Self, ConstraintError> {
        if slope > 0.0 && slope.is_finite() {
            Ok(ClassK::Linear(slope))
        } else {
            Err(ConstraintError::InvalidSlope(slope))
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            ClassK::Linear(k) => k * s,
        }
    }

    pub fn derivative(&self, _s: f64) -> f64 {
        match *self {
            ClassK::Linear(k) => k,
        }
    }
}

/// `L_f h` and `L_g h` of a scalar function.
#[derive(Clone)]
pub struct LieDerivatives {
    pub lf: ScalarFn,
    pub lg: RowFn,
}

impl fmt::Debug for LieDerivatives {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("LieDerivatives { .. }")
    }
}

/// Closed-form derivatives of a barrier along the dynamics.
#[derive(Clone)]
pub enum BarrierDerivatives {
    /// The control appears in the first derivative.
    RelativeDegreeOne { lf: ScalarFn, lg: RowFn },
    /// `L_g b = 0`; the control appears through `L_g L_f b`.
    RelativeDegreeTwo {
        lf: ScalarFn,
        lf2: ScalarFn,
        lglf: RowFn,
    },
}

impl BarrierDerivatives {
    pub fn relative_degree(&self) -> usize {
        match self {
            BarrierDerivatives::RelativeDegreeOne { .. } => 1,
            BarrierDerivatives::RelativeDegreeTwo { .. } => 2,
        }
    }
}

/// High-order control barrier function `b(x) >= 0` with linear class-K
/// chain `ψ_i = ψ'_{i-1} + α_i(ψ_{i-1})`.
#[derive(Clone)]
pub struct HocbfSpec {
    barrier: ScalarFn,
    derivatives: BarrierDerivatives,
    alphas: Vec<ClassK>,
}

impl fmt::Debug for HocbfSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HocbfSpec")
            .field("relative_degree", &self.relative_degree())
            .field("alphas", &self.alphas)
            .finish_non_exhaustive()
    }
}

impl HocbfSpec {
    pub fn new(
        barrier: ScalarFn,
        derivatives: BarrierDerivatives,
        alphas: Vec<ClassK>,
    ) -> Result<Self, ConstraintError> {
        let degree = derivatives.relative_degree();
        if alphas.len() > 2 {
            return Err(ConstraintError::UnsupportedRelativeDegree(alphas.len()));
        }
        if alphas.len() != degree {
            return Err(ConstraintError::AlphaCount {
                degree,
                given: alphas.len(),
            });
        }
        Ok(Self {
            barrier,
            derivatives,
            alphas,
        })
    }

    /// Ordinary CBF: `-L_g b u <= L_f b + α(b)`.
    pub fn relative_degree_one(barrier: ScalarFn, lf: ScalarFn, lg: RowFn, alpha: ClassK) -> Self {
        Self {
            barrier,
            derivatives: BarrierDerivatives::RelativeDegreeOne { lf, lg },
            alphas: vec![alpha],
        }
    }

    pub fn relative_degree_two(
        barrier: ScalarFn,
        lf: ScalarFn,
        lf2: ScalarFn,
        lglf: RowFn,
        alpha1: ClassK,
        alpha2: ClassK,
    ) -> Self {
        Self {
            barrier,
            derivatives: BarrierDerivatives::RelativeDegreeTwo { lf, lf2, lglf },
            alphas: vec![alpha1, alpha2],
        }
    }

    pub fn relative_degree(&self) -> usize {
        self.derivatives.relative_degree()
    }

    pub fn alphas(&self) -> &[ClassK] {
        &self.alphas
    }

    pub fn value(&self, x: &State) -> f64 {
        (self.barrier)(x)
    }

    /// `L_g L_f^{m-1} b(x)`
    pub fn control_gain(&self, x: &State) -> DVector<f64> {
        match &self.derivatives {
            BarrierDerivatives::RelativeDegreeOne { lg, .. } => lg(x),
            BarrierDerivatives::RelativeDegreeTwo { lglf, .. } => lglf(x),
        }
    }

    /// `L_f^m b + S(b) + α_m(ψ_{m-1})`: the right-hand side of the
    /// rewritten constraint `-L_g L_f^{m-1} b u <= ...`.
    pub fn rhs(&self, x: &State) -> f64 {
        let b = self.value(x);
        match &self.derivatives {
            BarrierDerivatives::RelativeDegreeOne { lf, .. } => lf(x) + self.alphas[0].eval(b),
            BarrierDerivatives::RelativeDegreeTwo { lf, lf2, .. } => {
                let lf_b = lf(x);
                // S(b) = L_f α_1(ψ_0) = α_1'(b) L_f b, since L_g b = 0.
                let s = self.alphas[0].derivative(b) * lf_b;
                let psi1 = lf_b + self.alphas[0].eval(b);
                lf2(x) + s + self.alphas[1].eval(psi1)
            }
        }
    }
}

/// `ψ_0(x) .. ψ_{m-1}(x)`.
pub fn psi_chain(spec: &HocbfSpec, x: &State) -> Vec<f64> {
    let b = spec.value(x);
    match &spec.derivatives {
        BarrierDerivatives::RelativeDegreeOne { .. } => vec![b],
        BarrierDerivatives::RelativeDegreeTwo { lf, .. } => vec![b, lf(x) + spec.alphas[0].eval(b)],
    }
}

/// Relaxed exponentially stabilizing CLF `L_f V + L_g V u + ε V <= δ`,
/// with `relax_weight` the penalty on `δ^2`.
#[derive(Clone)]
pub struct ClfSpec {
    pub value: ScalarFn,
    pub lf: ScalarFn,
    pub lg: RowFn,
    pub epsilon: f64,
    pub relax_weight: f64,
}

impl fmt::Debug for ClfSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClfSpec")
            .field("epsilon", &self.epsilon)
            .field("relax_weight", &self.relax_weight)
            .finish_non_exhaustive()
    }
}

impl ClfSpec {
    pub fn new(
        value: ScalarFn,
        lf: ScalarFn,
        lg: RowFn,
        epsilon: f64,
        relax_weight: f64,
    ) -> Result<Self, ConstraintError> {
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(ConstraintError::NonPositive {
                name: "epsilon",
                value: epsilon,
            });
        }
        if relax_weight.is_nan() || relax_weight <= 0.0 {
            return Err(ConstraintError::NonPositive {
                name: "relax_weight",
                value: relax_weight,
            });
        }
        Ok(Self {
            value,
            lf,
            lg,
            epsilon,
            relax_weight,
        })
    }
}

/// `a · w <= beta` over `w = (u, δ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub a: DVector<f64>,
    pub beta: f64,
    pub label: String,
}

impl ConstraintRow {
    pub fn new(a: DVector<f64>, beta: f64, label: impl Into<String>) -> Self {
        Self {
            a,
            beta,
            label: label.into(),
        }
    }

    /// Row with control coefficients `control` and zero on `δ`.
    pub fn on_controls(control: &DVector<f64>, beta: f64, label: impl Into<String>) -> Self {
        let q = control.len();
        let mut a = DVector::zeros(q + 1);
        a.rows_mut(0, q).copy_from(control);
        Self::new(a, beta, label)
    }

    /// `a · w - beta`; nonpositive when satisfied.
    pub fn residual(&self, w: &DVector<f64>) -> f64 {
        self.a.dot(w) - self.beta
    }

    pub fn is_finite(&self) -> bool {
        self.beta.is_finite() && self.a.iter().all(|v| v.is_finite())
    }
}

/// Stacks rows into `(A, b)`; `dim` is the decision-vector length.
pub fn stack_rows(rows: &[ConstraintRow], dim: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut a = DMatrix::zeros(rows.len(), dim);
    let mut b = DVector::zeros(rows.len());
    for (i, row) in rows.iter().enumerate() {
        a.row_mut(i).copy_from(&row.a.transpose());
        b[i] = row.beta;
    }
    (a, b)
}

/// `-L_g L_f^{m-1} b(x) u <= L_f^m b(x) + S(b(x)) + α_m(ψ_{m-1}(x))`.
pub fn hocbf_row(spec: &HocbfSpec, x: &State) -> ConstraintRow {
    let gain = spec.control_gain(x);
    ConstraintRow::on_controls(&(-gain), spec.rhs(x), labels::SAFETY)
}

/// `L_g V u - δ <= -L_f V - ε V`.
pub fn clf_row(spec: &ClfSpec, x: &State) -> ConstraintRow {
    let lg = (spec.lg)(x);
    let q = lg.len();
    let mut a = DVector::zeros(q + 1);
    a.rows_mut(0, q).copy_from(&lg);
    a[q] = -1.0;
    let beta = -(spec.lf)(x) - spec.epsilon * (spec.value)(x);
    ConstraintRow::new(a, beta, labels::CLF)
}

/// `u_i <= u_max,i` and `-u_i <= -u_min,i` for every control.
pub fn bound_rows(bounds: &ControlBounds) -> Vec<ConstraintRow> {
    let q = bounds.dim();
    let mut rows = Vec::with_capacity(2 * q);
    for i in 0..q {
        let mut upper = DVector::zeros(q + 1);
        upper[i] = 1.0;
        rows.push(ConstraintRow::new(upper, bounds.upper()[i], labels::UPPER_BOUND));
        let mut lower = DVector::zeros(q + 1);
        lower[i] = -1.0;
        rows.push(ConstraintRow::new(lower, -bounds.lower()[i], labels::LOWER_BOUND));
    }
    rows
}

/// Central-difference `(L_f h, L_g h)` at `x`, for validating closed-form
/// derivatives.
pub fn finite_difference_lie(
    h: &dyn Fn(&State) -> f64,
    system: &AffineSystem,
    x: &State,
    step: f64,
) -> (f64, DVector<f64>) {
    let n = x.len();
    let mut grad = DVector::zeros(n);
    for i in 0..n {
        let mut fwd = x.clone();
        let mut bwd = x.clone();
        fwd[i] += step;
        bwd[i] -= step;
        grad[i] = (h(&fwd) - h(&bwd)) / (2.0 * step);
    }
    let lf = grad.dot(&system.drift(x));
    let lg = system.input_matrix(x).transpose() * &grad;
    (lf, lg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{acc_bounds, acc_system, AccParams};
    use nalgebra::dvector;

    fn generic_rd1(alpha: f64) -> HocbfSpec {
        // b = 1 - x0^2 under x0' = x1 + u.
        HocbfSpec::relative_degree_one(
            Arc::new(|x: &State| 1.0 - x[0] * x[0]),
            Arc::new(|x: &State| -2.0 * x[0] * x[1]),
            Arc::new(|x: &State| dvector![-2.0 * x[0]]),
            ClassK::linear(alpha).unwrap(),
        )
    }

    #[test]
    fn class_k_rejects_nonpositive_slopes() {
        assert!(ClassK::linear(0.0).is_err());
        assert!(ClassK::linear(-1.0).is_err());
        assert!(ClassK::linear(f64::INFINITY).is_err());
        let k = ClassK::linear(2.5).unwrap();
        assert_eq!(k.eval(0.0), 0.0);
        assert!(k.eval(1.0) > k.eval(0.5));
    }

    #[test]
    fn relative_degree_one_row_is_the_plain_cbf_row() {
        let spec = generic_rd1(3.0);
        let x = dvector![0.5, -1.0];
        let row = hocbf_row(&spec, &x);
        // -L_g b u <= L_f b + α(b)
        let lg_b = -2.0 * 0.5;
        let lf_b = 2.0 * 0.5;
        let b = 1.0 - 0.25;
        assert_eq!(row.a, dvector![-lg_b, 0.0]);
        assert_eq!(row.beta, lf_b + 3.0 * b);
        assert_eq!(psi_chain(&spec, &x), vec![b]);
    }

    #[test]
    fn alpha_count_must_match_relative_degree() {
        let spec = generic_rd1(1.0);
        let err = HocbfSpec::new(
            spec.barrier.clone(),
            spec.derivatives.clone(),
            vec![ClassK::Linear(1.0), ClassK::Linear(1.0)],
        );
        assert!(matches!(err, Err(ConstraintError::AlphaCount { degree: 1, given: 2 })));
        let err = HocbfSpec::new(
            spec.barrier.clone(),
            spec.derivatives.clone(),
            vec![ClassK::Linear(1.0); 3],
        );
        assert_eq!(err.unwrap_err(), ConstraintError::UnsupportedRelativeDegree(3));
    }

    #[test]
    fn zero_barrier_gives_zero_chain() {
        let spec = HocbfSpec::relative_degree_two(
            Arc::new(|_x: &State| 0.0),
            Arc::new(|_x: &State| 0.0),
            Arc::new(|_x: &State| 0.0),
            Arc::new(|_x: &State| dvector![1.0]),
            ClassK::Linear(1.0),
            ClassK::Linear(2.0),
        );
        assert_eq!(psi_chain(&spec, &dvector![3.0, 4.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn bound_rows_layout() {
        let p = AccParams::default();
        let rows = bound_rows(&acc_bounds(&p));
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].a, dvector![1.0, 0.0]);
        assert!((rows[0].beta - 6474.6).abs() < 1e-9);
        assert_eq!(rows[1].a, dvector![-1.0, 0.0]);
        assert!((rows[1].beta - 6474.6).abs() < 1e-9);

        let two = ControlBounds::new(dvector![-1.0, -2.0], dvector![1.0, 2.0]).unwrap();
        let rows = bound_rows(&two);
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.a.len() == 3 && r.a[2] == 0.0));
    }

    #[test]
    fn degenerate_box_admits_only_zero() {
        let zero = ControlBounds::new(dvector![0.0], dvector![0.0]).unwrap();
        let rows = bound_rows(&zero);
        let ok = dvector![0.0, 5.0];
        assert!(rows.iter().all(|r| r.residual(&ok) <= 0.0));
        for u in [-1e-9, 1e-9] {
            let w = dvector![u, 0.0];
            assert!(rows.iter().any(|r| r.residual(&w) > 0.0));
        }
    }

    #[test]
    fn finite_differences_match_closed_form() {
        let p = AccParams::default();
        let sys = acc_system(&p);
        let h = |x: &State| (x[0] - 24.0).powi(2);
        let x = dvector![6.0, 100.0];
        let (lf, lg) = finite_difference_lie(&h, &sys, &x, 1e-6);
        let expected_lf = 2.0 * (6.0 - 24.0) * (-39.1 / 1650.0);
        let expected_lg = 2.0 * (6.0 - 24.0) / 1650.0;
        assert!((lf - expected_lf).abs() < 1e-6);
        assert!((lg[0] - expected_lg).abs() < 1e-8);
    }
}
