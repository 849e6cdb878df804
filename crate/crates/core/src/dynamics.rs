//! Control-affine plants `x' = f(x) + g(x) u` and the cruise-control vehicle.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type State = DVector<f64>;
pub type Control = DVector<f64>;

pub type DriftFn = Arc<dyn Fn(&State) -> DVector<f64> + Send + Sync>;
pub type InputFn = Arc<dyn Fn(&State) -> DMatrix<f64> + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("control bounds are inverted at component {0}: {1} > {2}")]
    InvertedBounds(usize, f64, f64),
    #[error("control bound vectors have lengths {0} and {1}")]
    BoundLength(usize, usize),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

/// Plant `x' = f(x) + g(x) u` with `n` states and `q` controls.
#[derive(Clone)]
pub struct AffineSystem {
    n: usize,
    q: usize,
    drift: DriftFn,
    input: InputFn,
}

impl fmt::Debug for AffineSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AffineSystem")
            .field("n", &self.n)
            .field("q", &self.q)
            .finish_non_exhaustive()
    }
}

impl AffineSystem {
    pub fn new(n: usize, q: usize, drift: DriftFn, input: InputFn) -> Self {
        Self { n, q, drift, input }
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn control_dim(&self) -> usize {
        self.q
    }

    pub fn drift(&self, x: &State) -> DVector<f64> {
        (self.drift)(x)
    }

    pub fn input_matrix(&self, x: &State) -> DMatrix<f64> {
        (self.input)(x)
    }

    /// `f(x) + g(x) u`
    pub fn vector_field(&self, x: &State, u: &Control) -> DVector<f64> {
        self.drift(x) + self.input_matrix(x) * u
    }
}

/// Box `u_min <= u <= u_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBounds {
    u_min: Control,
    u_max: Control,
}

impl ControlBounds {
    pub fn new(u_min: Control, u_max: Control) -> Result<Self, DynamicsError> {
        if u_min.len() != u_max.len() {
            return Err(DynamicsError::BoundLength(u_min.len(), u_max.len()));
        }
        for i in 0..u_min.len() {
            if u_min[i].is_nan() || u_max[i].is_nan() || u_min[i] > u_max[i] {
                return Err(DynamicsError::InvertedBounds(i, u_min[i], u_max[i]));
            }
        }
        Ok(Self { u_min, u_max })
    }

    pub fn dim(&self) -> usize {
        self.u_min.len()
    }

    pub fn lower(&self) -> &Control {
        &self.u_min
    }

    pub fn upper(&self) -> &Control {
        &self.u_max
    }

    pub fn contains(&self, u: &Control) -> bool {
        u.iter()
            .enumerate()
            .all(|(i, &v)| self.u_min[i] <= v && v <= self.u_max[i])
    }
}

/// Vehicle and scenario constants for adaptive cruise control.
///
/// `Default` is the standard parameter table: 1650 kg vehicle, resistance
/// coefficients 0.1 N, 5 N s/m and 0.25 N s^2/m^2, leader at 13.89 m/s,
/// desired speed 24 m/s, 10 m standstill gap, 0.4 g acceleration and
/// deceleration limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccParams {
    /// Vehicle mass (kg).
    pub mass: f64,
    /// Coulomb friction (N).
    pub f0: f64,
    /// Viscous friction (N s/m).
    pub f1: f64,
    /// Aerodynamic drag (N s^2/m^2).
    pub f2: f64,
    /// Preceding-vehicle speed (m/s).
    pub v_p: f64,
    /// Desired speed (m/s).
    pub v_d: f64,
    /// Minimum gap (m).
    pub l0: f64,
    /// Peak acceleration as a fraction of gravity.
    pub c_a: f64,
    /// Peak deceleration as a fraction of gravity.
    pub c_d: f64,
    /// Gravity (m/s^2).
    pub grav: f64,
}

impl Default for AccParams {
    fn default() -> Self {
        Self {
            mass: 1650.0,
            f0: 0.1,
            f1: 5.0,
            f2: 0.25,
            v_p: 13.89,
            v_d: 24.0,
            l0: 10.0,
            c_a: 0.4,
            c_d: 0.4,
            grav: 9.81,
        }
    }
}

impl AccParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let positive = [
            ("mass", self.mass),
            ("f0", self.f0),
            ("f1", self.f1),
            ("f2", self.f2),
            ("v_p", self.v_p),
            ("v_d", self.v_d),
            ("l0", self.l0),
            ("grav", self.grav),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(DynamicsError::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {value}"),
                });
            }
        }
        for (name, value) in [("c_a", self.c_a), ("c_d", self.c_d)] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(DynamicsError::InvalidParameter {
                    name,
                    reason: format!("must lie in (0, 1], got {value}"),
                });
            }
        }
        Ok(())
    }

    /// Peak braking deceleration `c_d g` (m/s^2).
    pub fn max_deceleration(&self) -> f64 {
        self.c_d * self.grav
    }
}

/// `F_r(v) = f0 sgn(v) + f1 v + f2 v^2`, with `sgn(0) = 0`.
pub fn resistance_force(v: f64, params: &AccParams) -> f64 {
    let sign = if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    };
    params.f0 * sign + params.f1 * v + params.f2 * v * v
}

/// `dF_r/dv` away from `v = 0`.
pub fn resistance_force_slope(v: f64, params: &AccParams) -> f64 {
    params.f1 + 2.0 * params.f2 * v
}

/// Ego vehicle with state `(v, z)`: speed and gap to the leader.
pub fn acc_system(params: &AccParams) -> AffineSystem {
    let p = *params;
    let drift: DriftFn = Arc::new(move |x: &State| {
        DVector::from_vec(vec![-resistance_force(x[0], &p) / p.mass, p.v_p - x[0]])
    });
    let inv_mass = 1.0 / params.mass;
    let input: InputFn = Arc::new(move |_x: &State| DMatrix::from_column_slice(2, 1, &[inv_mass, 0.0]));
    AffineSystem::new(2, 1, drift, input)
}

/// `-c_d M g <= u <= c_a M g`
pub fn acc_bounds(params: &AccParams) -> ControlBounds {
    let weight = params.mass * params.grav;
    ControlBounds {
        u_min: DVector::from_element(1, -params.c_d * weight),
        u_max: DVector::from_element(1, params.c_a * weight),
    }
}
