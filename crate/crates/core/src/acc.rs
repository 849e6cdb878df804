//! Adaptive cruise control: the gap barrier, the speed-tracking CLF, the
//! control bounds and the optional feasibility row, assembled into a
//! pointwise QP controller.
//!
//! State is `x = (v, z)`: ego speed and gap to the leader. The decision
//! vector is `w = (u, δ)` with `u` the wheel force (N).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::constraints::{
    bound_rows, clf_row, hocbf_row, psi_chain, ClassK, ClfSpec, ConstraintError, ConstraintRow, HocbfSpec,
    LieDerivatives, RowFn, ScalarFn,
};
use crate::dynamics::{
    acc_bounds, acc_system, resistance_force, resistance_force_slope, AccParams, AffineSystem, ControlBounds,
    DynamicsError, State,
};
use crate::feasibility::{self, acc_speed_bound, phi_row, FeasibilityError, PhiSpec};
use crate::sim::{Controller, Monitors, QuadraticCost};

/// Slope of the class-K function on the braking-distance barrier.
pub const BRAKING_BARRIER_SLOPE: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccError {
    #[error(transparent)]
    Params(#[from] DynamicsError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Feasibility(#[from] FeasibilityError),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("scenario has no baseline configured")]
    NoBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Baseline {
    #[default]
    None,
    /// Replace the gap barrier by `z >= 0.5 (v_p - v)^2 / (c_d g) + l0`.
    MinBrakingDistance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccScenario {
    pub params: AccParams,
    /// Class-K slopes of the gap barrier chain.
    pub p1: f64,
    pub p2: f64,
    /// CLF convergence rate.
    pub epsilon: f64,
    /// Penalty on the CLF relaxation.
    pub p_acc: f64,
    pub feasibility_on: bool,
    pub baseline: Baseline,
    /// Class-K function in the `φ` row.
    pub phi_alpha: ClassK,
}

impl AccScenario {
    /// Standard parameters with the given chain slopes and the feasibility
    /// row enabled.
    pub fn new(p1: f64, p2: f64) -> Self {
        Self {
            params: AccParams::default(),
            p1,
            p2,
            epsilon: 10.0,
            p_acc: 1.0,
            feasibility_on: true,
            baseline: Baseline::None,
            phi_alpha: ClassK::Linear(1.0),
        }
    }

    pub fn validate(&self) -> Result<(), AccError> {
        self.params.validate()?;
        for (name, value) in [
            ("p1", self.p1),
            ("p2", self.p2),
            ("epsilon", self.epsilon),
            ("p_acc", self.p_acc),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(AccError::NonPositive { name, value });
            }
        }
        Ok(())
    }
}

/// Gap barrier `b = z - l0` (relative degree two) with `α_1 = p1 s`,
/// `α_2 = p2 s`.
pub fn gap_barrier(scenario: &AccScenario) -> Result<HocbfSpec, AccError> {
    let p = scenario.params;
    let barrier: ScalarFn = Arc::new(move |x: &State| x[1] - p.l0);
    let lf: ScalarFn = Arc::new(move |x: &State| p.v_p - x[0]);
    let lf2: ScalarFn = Arc::new(move |x: &State| resistance_force(x[0], &p) / p.mass);
    let lglf: RowFn = Arc::new(move |_x: &State| DVector::from_element(1, -1.0 / p.mass));
    Ok(HocbfSpec::relative_degree_two(
        barrier,
        lf,
        lf2,
        lglf,
        ClassK::linear(scenario.p1)?,
        ClassK::linear(scenario.p2)?,
    ))
}

/// `V = (v - v_d)^2` with rate `epsilon` and relaxation weight `p_acc`.
pub fn speed_clf(scenario: &AccScenario) -> Result<ClfSpec, AccError> {
    let p = scenario.params;
    Ok(ClfSpec::new(
        Arc::new(move |x: &State| (x[0] - p.v_d).powi(2)),
        Arc::new(move |x: &State| -2.0 * (x[0] - p.v_d) * resistance_force(x[0], &p) / p.mass),
        Arc::new(move |x: &State| DVector::from_element(1, 2.0 * (x[0] - p.v_d) / p.mass)),
        scenario.epsilon,
        scenario.p_acc,
    )?)
}

/// Braking-distance barrier
/// `b_bk = z - 0.5 (v_p - v)^2 / (c_d g) - l0`, relative degree one,
/// with a slope-2 linear class-K function.
///
/// `∂b_bk/∂v = (v_p - v) / (c_d g)`, so
/// `L_f b_bk = -(v_p - v) F_r / (M c_d g) + (v_p - v)` and
/// `L_g b_bk = (v_p - v) / (M c_d g)`; the gain flips sign at `v = v_p`.
pub fn build_braking_baseline(scenario: &AccScenario) -> Result<HocbfSpec, AccError> {
    if scenario.baseline != Baseline::MinBrakingDistance {
        return Err(AccError::NoBaseline);
    }
    Ok(braking_barrier(&scenario.params))
}

fn braking_barrier(params: &AccParams) -> HocbfSpec {
    let p = *params;
    let decel = p.max_deceleration();
    let barrier: ScalarFn = Arc::new(move |x: &State| x[1] - 0.5 * (p.v_p - x[0]).powi(2) / decel - p.l0);
    let lf: ScalarFn = Arc::new(move |x: &State| {
        let rel = p.v_p - x[0];
        -rel * resistance_force(x[0], &p) / (p.mass * decel) + rel
    });
    let lg: RowFn = Arc::new(move |x: &State| DVector::from_element(1, (p.v_p - x[0]) / (p.mass * decel)));
    HocbfSpec::relative_degree_one(barrier, lf, lg, ClassK::Linear(BRAKING_BARRIER_SLOPE))
}

/// Closed-form Lie derivatives of the cruise-control feasibility function
/// `b_hF = F_r/M + (p1 + p2)(v_p - v) + p1 p2 (z - l0) + c_d g`, or of the
/// simplified form without `F_r/M` when `simplified`.
pub fn feasibility_derivatives(scenario: &AccScenario, simplified: bool) -> LieDerivatives {
    let p = scenario.params;
    let sum = scenario.p1 + scenario.p2;
    let prod = scenario.p1 * scenario.p2;
    let dv = move |v: f64| {
        let drag = if simplified { 0.0 } else { resistance_force_slope(v, &p) / p.mass };
        drag - sum
    };
    LieDerivatives {
        lf: Arc::new(move |x: &State| {
            dv(x[0]) * (-resistance_force(x[0], &p) / p.mass) + prod * (p.v_p - x[0])
        }),
        lg: Arc::new(move |x: &State| DVector::from_element(1, dv(x[0]) / p.mass)),
    }
}

/// Feasibility function without the nonnegative drag term:
/// `(p1 + p2)(v_p - v) + p1 p2 (z - l0) + c_d g`.
pub fn simplified_feasibility_value(scenario: &AccScenario, x: &State) -> f64 {
    let p = &scenario.params;
    (scenario.p1 + scenario.p2) * (p.v_p - x[0]) + scenario.p1 * scenario.p2 * (x[1] - p.l0) + p.max_deceleration()
}

/// Whether the speed allowed by `φ >= 0` reaches the desired speed.
pub fn reachable_speed_check(scenario: &AccScenario) -> bool {
    acc_speed_bound(scenario.p1, scenario.p2, &scenario.params) >= scenario.params.v_d
}

/// Assembled cruise-control QP controller.
#[derive(Debug, Clone)]
pub struct AccController {
    scenario: AccScenario,
    system: AffineSystem,
    bounds: ControlBounds,
    gap: HocbfSpec,
    safety: HocbfSpec,
    clf: ClfSpec,
    phi: PhiSpec,
}

/// Wires the scenario into a controller. Rows per state, in order: CLF,
/// upper and lower force limits, the safety row (gap barrier, or the
/// braking-distance barrier for the baseline), and the `φ` row when the
/// feasibility row is on.
pub fn build(scenario: &AccScenario) -> Result<AccController, AccError> {
    scenario.validate()?;
    let gap = gap_barrier(scenario)?;
    let safety = match scenario.baseline {
        Baseline::None => gap.clone(),
        Baseline::MinBrakingDistance => braking_barrier(&scenario.params),
    };
    Ok(AccController {
        scenario: *scenario,
        system: acc_system(&scenario.params),
        bounds: acc_bounds(&scenario.params),
        clf: speed_clf(scenario)?,
        phi: feasibility::acc_synthesize_phi_with(scenario.p1, scenario.p2, &scenario.params, scenario.phi_alpha)?,
        gap,
        safety,
    })
}

impl AccController {
    pub fn scenario(&self) -> &AccScenario {
        &self.scenario
    }

    pub fn bounds(&self) -> &ControlBounds {
        &self.bounds
    }

    pub fn gap_barrier(&self) -> &HocbfSpec {
        &self.gap
    }

    pub fn safety_barrier(&self) -> &HocbfSpec {
        &self.safety
    }

    pub fn clf(&self) -> &ClfSpec {
        &self.clf
    }

    pub fn phi(&self) -> &PhiSpec {
        &self.phi
    }

    pub fn safety_row(&self, x: &State) -> ConstraintRow {
        hocbf_row(&self.safety, x)
    }

    pub fn feasibility_row(&self, x: &State) -> Option<ConstraintRow> {
        self.scenario
            .feasibility_on
            .then(|| phi_row(&self.phi, x).expect("synthesized φ has relative degree one"))
    }
}

impl Controller for AccController {
    fn system(&self) -> &AffineSystem {
        &self.system
    }

    fn rows(&self, x: &State) -> Vec<ConstraintRow> {
        let mut rows = Vec::with_capacity(5);
        rows.push(clf_row(&self.clf, x));
        rows.extend(bound_rows(&self.bounds));
        rows.push(self.safety_row(x));
        rows.extend(self.feasibility_row(x));
        rows
    }

    /// `H = diag(2/M^2, 2 p_acc)`, `F = (-2 F_r(v)/M^2, 0)`: the expansion
    /// of `((u - F_r)/M)^2 + p_acc δ^2` without its constant term.
    fn cost(&self, x: &State) -> QuadraticCost {
        let p = &self.scenario.params;
        let m2 = p.mass * p.mass;
        QuadraticCost {
            h: DMatrix::from_diagonal(&DVector::from_vec(vec![2.0 / m2, 2.0 * self.scenario.p_acc])),
            f: DVector::from_vec(vec![-2.0 * resistance_force(x[0], p) / m2, 0.0]),
        }
    }

    fn monitors(&self, x: &State) -> Monitors {
        let chain = psi_chain(&self.gap, x);
        Monitors {
            b: chain[0],
            psi1: chain[1],
            phi: self.phi.value(x),
            b_hf: feasibility::feasibility_value(&self.gap, &self.bounds, x),
            safety_beta: self.safety.rhs(x),
        }
    }

    fn barrier_chain(&self, x: &State) -> Vec<f64> {
        psi_chain(&self.safety, x)
    }
}
