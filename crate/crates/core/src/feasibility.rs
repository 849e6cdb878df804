//! Feasibility constraints that keep the safety row compatible with the
//! control bounds.
//!
//! For a safety constraint rewritten as `-L_g L_f^{m-1} b u <= R(x)` with
//! `L_g L_f^{m-1} b <= 0`, the row conflicts with the box exactly when
//! `R(x)` drops below `-L_g L_f^{m-1} b u_min`. The function
//! `b_hF(x) = R(x) + L_g L_f^{m-1} b(x) u_min` is therefore kept
//! nonnegative, either directly through its own CBF row
//! ([`feasibility_row`]) or through a candidate function `φ` whose CBF row
//! has the same normal as the safety row ([`phi_row`]). In the latter case
//! the safety row, the `φ` row and the box always intersect as long as
//! the conditions checked by [`check_certificate`] hold.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use thiserror::Error;

use crate::constraints::{labels, ClassK, ConstraintRow, HocbfSpec, LieDerivatives, RowFn, ScalarFn};
use crate::dynamics::{resistance_force, AccParams, Control, ControlBounds, State};

/// Tolerance on `||L_g φ - γ L_g L_f^{m-1} b||∞`.
pub const PROPORTIONALITY_TOL: f64 = 1e-9;

const AFFINE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeasibilityError {
    #[error("control gain has a positive component {value} at index {index}; normalize signs first")]
    PositiveGain { index: usize, value: f64 },
    #[error("control gain vanishes identically")]
    ZeroGain,
    #[error("control gain has length {gain} but the bounds have dimension {bounds}")]
    Dimension { gain: usize, bounds: usize },
    #[error("bounds [{lo}, {hi}] of control {index} do not straddle zero")]
    BoundsExcludeZero { index: usize, lo: f64, hi: f64 },
    #[error("control index {0} out of range")]
    ControlIndex(usize),
    #[error("feasibility row needs closed-form derivatives of b_hF")]
    MissingDerivatives,
    #[error("φ has relative degree zero; use phi_zero_row")]
    RelativeDegreeZero,
    #[error("relative degree {0} is not a candidate (0 or 1)")]
    NotCandidate(usize),
    #[error("φ(x, u) is not affine in u (deviation {0:e})")]
    NotAffine(f64),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

/// Closed interval `[lo, hi]` on the scalar axis `-L_g L_f^{m-1} b · u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }
}

/// Projects the box through `-gain`: every `u` in the box satisfies
/// `-gain · u_min <= -gain · u <= -gain · u_max`.
///
/// Requires `gain <= 0` componentwise and not identically zero.
pub fn transformed_bounds(bounds: &ControlBounds, gain: &DVector<f64>) -> Result<Interval, FeasibilityError> {
    if gain.len() != bounds.dim() {
        return Err(FeasibilityError::Dimension {
            gain: gain.len(),
            bounds: bounds.dim(),
        });
    }
    if let Some((index, &value)) = gain.iter().enumerate().find(|(_, &g)| g > 0.0) {
        return Err(FeasibilityError::PositiveGain { index, value });
    }
    if gain.iter().all(|&g| g == 0.0) {
        return Err(FeasibilityError::ZeroGain);
    }
    Ok(Interval {
        lo: -gain.dot(bounds.lower()),
        hi: -gain.dot(bounds.upper()),
    })
}

/// Symmetric limit `min(|u_min,i|, u_max,i)` for a control whose gain may
/// change sign; `|u_i| <= u_lim` implies the original bounds.
pub fn sign_normalize(bounds: &ControlBounds, index: usize) -> Result<f64, FeasibilityError> {
    if index >= bounds.dim() {
        return Err(FeasibilityError::ControlIndex(index));
    }
    let lo = bounds.lower()[index];
    let hi = bounds.upper()[index];
    if !(lo < 0.0 && 0.0 < hi) {
        return Err(FeasibilityError::BoundsExcludeZero { index, lo, hi });
    }
    Ok(lo.abs().min(hi))
}

/// `b_hF(x) = L_f^m b + S(b) + α_m(ψ_{m-1}) + L_g L_f^{m-1} b · u_min`.
///
/// Nonnegative exactly when the safety row admits `u_min` on the projected
/// axis.
pub fn feasibility_value(spec: &HocbfSpec, bounds: &ControlBounds, x: &State) -> f64 {
    spec.rhs(x) + spec.control_gain(x).dot(bounds.lower())
}

/// CBF row for `b_hF >= 0`:
/// `-L_g b_hF u <= L_f b_hF + α_f(b_hF)`.
///
/// `derivatives` are the closed-form Lie derivatives of `b_hF`; `b_hF`
/// has relative degree one whatever the degree of the safety barrier.
pub fn feasibility_row(
    spec: &HocbfSpec,
    bounds: &ControlBounds,
    x: &State,
    alpha_f: ClassK,
    derivatives: Option<&LieDerivatives>,
) -> Result<ConstraintRow, FeasibilityError> {
    let derivatives = derivatives.ok_or(FeasibilityError::MissingDerivatives)?;
    let value = feasibility_value(spec, bounds, x);
    let lg = (derivatives.lg)(x);
    Ok(ConstraintRow::on_controls(
        &(-lg),
        (derivatives.lf)(x) + alpha_f.eval(value),
        labels::FEASIBILITY,
    ))
}

/// Candidate function `φ(x)` of relative degree one, with its CBF data.
///
/// `gamma` is the claimed ratio `L_g φ = γ L_g L_f^{m-1} b`.
#[derive(Clone)]
pub struct PhiSpec {
    pub phi: ScalarFn,
    pub lf: ScalarFn,
    pub lg: RowFn,
    pub alpha_u: ClassK,
    pub gamma: f64,
    pub relative_degree: usize,
}

impl fmt::Debug for PhiSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhiSpec")
            .field("alpha_u", &self.alpha_u)
            .field("gamma", &self.gamma)
            .field("relative_degree", &self.relative_degree)
            .finish_non_exhaustive()
    }
}

impl PhiSpec {
    pub fn new(
        phi: ScalarFn,
        lf: ScalarFn,
        lg: RowFn,
        alpha_u: ClassK,
        gamma: f64,
        relative_degree: usize,
    ) -> Result<Self, FeasibilityError> {
        if relative_degree > 1 {
            return Err(FeasibilityError::NotCandidate(relative_degree));
        }
        if gamma.is_nan() || gamma <= 0.0 {
            return Err(FeasibilityError::NonPositive {
                name: "gamma",
                value: gamma,
            });
        }
        Ok(Self {
            phi,
            lf,
            lg,
            alpha_u,
            gamma,
            relative_degree,
        })
    }

    pub fn value(&self, x: &State) -> f64 {
        (self.phi)(x)
    }
}

/// `-L_g φ u <= L_f φ + α_u(φ)`, the set `U_s(x)`.
pub fn phi_row(spec: &PhiSpec, x: &State) -> Result<ConstraintRow, FeasibilityError> {
    if spec.relative_degree == 0 {
        return Err(FeasibilityError::RelativeDegreeZero);
    }
    let lg = (spec.lg)(x);
    let beta = (spec.lf)(x) + spec.alpha_u.eval(spec.value(x));
    Ok(ConstraintRow::on_controls(&(-lg), beta, labels::FEASIBILITY))
}

/// `φ(x, u) >= 0` for a `φ` that is affine in `u` at fixed `x`.
///
/// The affine coefficients are read off at `u = 0` and the unit vectors,
/// then confirmed at two further probes.
pub fn phi_zero_row(
    phi_u: &dyn Fn(&State, &Control) -> f64,
    x: &State,
    control_dim: usize,
) -> Result<ConstraintRow, FeasibilityError> {
    let zero = DVector::zeros(control_dim);
    let offset = phi_u(x, &zero);
    let mut coeffs = DVector::zeros(control_dim);
    for i in 0..control_dim {
        let mut e = zero.clone();
        e[i] = 1.0;
        coeffs[i] = phi_u(x, &e) - offset;
    }
    let probes = [
        DVector::from_fn(control_dim, |i, _| 3.0 + i as f64),
        DVector::from_fn(control_dim, |i, _| if i % 2 == 0 { -7.5 } else { 2.25 }),
    ];
    for probe in &probes {
        let predicted = offset + coeffs.dot(probe);
        let actual = phi_u(x, probe);
        let deviation = (actual - predicted).abs();
        if deviation > AFFINE_TOL * (1.0 + actual.abs().max(predicted.abs())) {
            return Err(FeasibilityError::NotAffine(deviation));
        }
    }
    Ok(ConstraintRow::on_controls(&(-coeffs), offset, labels::FEASIBILITY))
}

/// Sampled check of the sufficient conditions under which the `φ` row
/// keeps every pointwise QP feasible.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityCertificate {
    /// `φ(x0) >= 0`
    pub phi_x0_ok: bool,
    pub phi_x0: f64,
    /// `L_f φ >= 0` at every checked state
    pub lf_phi_ok: bool,
    /// Smallest `L_f φ` seen.
    pub lf_phi_worst: f64,
    /// `L_g φ = γ L_g L_f^{m-1} b` at every checked state
    pub lg_proportional_ok: bool,
    pub lg_max_deviation: f64,
    /// `u_min <= 0 <= u_max`
    pub zero_in_u: bool,
    pub verdict: bool,
}

/// Evaluates the certificate at `x0` and every sample state.
pub fn check_certificate(
    phi: &PhiSpec,
    hocbf: &HocbfSpec,
    bounds: &ControlBounds,
    x0: &State,
    samples: &[State],
) -> FeasibilityCertificate {
    let phi_x0 = phi.value(x0);
    let mut lf_phi_worst = f64::INFINITY;
    let mut lg_max_deviation: f64 = 0.0;
    for x in std::iter::once(x0).chain(samples.iter()) {
        lf_phi_worst = lf_phi_worst.min((phi.lf)(x));
        let deviation = ((phi.lg)(x) - phi.gamma * hocbf.control_gain(x)).amax();
        lg_max_deviation = lg_max_deviation.max(deviation);
    }
    let zero_in_u = bounds.contains(&DVector::zeros(bounds.dim()));
    let phi_x0_ok = phi_x0 >= 0.0;
    let lf_phi_ok = lf_phi_worst >= 0.0;
    let lg_proportional_ok = phi.gamma > 0.0 && lg_max_deviation <= PROPORTIONALITY_TOL;
    FeasibilityCertificate {
        phi_x0_ok,
        phi_x0,
        lf_phi_ok,
        lf_phi_worst,
        lg_proportional_ok,
        lg_max_deviation,
        zero_in_u,
        verdict: phi_x0_ok && lf_phi_ok && lg_proportional_ok && zero_in_u,
    }
}

/// `p1 p2 / (p1 + p2)`: the ratio between the cruise-control `φ` gain and
/// the safety-row gain.
pub fn acc_gamma(p1: f64, p2: f64) -> f64 {
    p1 * p2 / (p1 + p2)
}

/// Largest speed with `φ >= 0`: `v_p + c_d g (p1 + p2) / (p1 p2)`.
pub fn acc_speed_bound(p1: f64, p2: f64, params: &AccParams) -> f64 {
    params.v_p + params.max_deceleration() / acc_gamma(p1, p2)
}

/// Candidate function for the cruise-control gap barrier with linear
/// class-K slopes `p1`, `p2`:
/// `φ(v, z) = γ (v_p - v) + c_d g` with `γ = p1 p2 / (p1 + p2)`.
///
/// Matching the `z - l0` coefficients of the safety row and of the CBF row
/// for the simplified `b_hF` fixes that row's slope at `p1 + p2`; what is
/// left over is `φ`, which depends on speed only. `α_u` has unit slope.
pub fn acc_synthesize_phi(p1: f64, p2: f64, params: &AccParams) -> Result<PhiSpec, FeasibilityError> {
    acc_synthesize_phi_with(p1, p2, params, ClassK::Linear(1.0))
}

pub fn acc_synthesize_phi_with(
    p1: f64,
    p2: f64,
    params: &AccParams,
    alpha_u: ClassK,
) -> Result<PhiSpec, FeasibilityError> {
    for (name, value) in [("p1", p1), ("p2", p2)] {
        if value.is_nan() || value <= 0.0 {
            return Err(FeasibilityError::NonPositive { name, value });
        }
    }
    let gamma = acc_gamma(p1, p2);
    let p = *params;
    let phi: ScalarFn = Arc::new(move |x: &State| gamma * (p.v_p - x[0]) + p.max_deceleration());
    let lf: ScalarFn = Arc::new(move |x: &State| gamma * resistance_force(x[0], &p) / p.mass);
    let lg: RowFn = Arc::new(move |_x: &State| DVector::from_element(1, -gamma / p.mass));
    PhiSpec::new(phi, lf, lg, alpha_u, gamma, 1)
}
