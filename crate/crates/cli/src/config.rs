//! Run configuration file.
//!
//! A JSON object whose keys mirror the simulation parameter table. Every
//! key is optional; missing keys take the standard values. Unknown keys are
//! rejected. All quantities are SI.

use std::fs;
use std::path::{Path, PathBuf};

use cbf_feasibility::acc::{AccScenario, Baseline};
use cbf_feasibility::constraints::ClassK;
use cbf_feasibility::dynamics::AccParams;
use cbf_feasibility::sim::SimConfig;
use nalgebra::dvector;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    #[default]
    None,
    MinBrakingDistance,
}

impl From<BaselineKind> for Baseline {
    fn from(kind: BaselineKind) -> Self {
        match kind {
            BaselineKind::None => Baseline::None,
            BaselineKind::MinBrakingDistance => Baseline::MinBrakingDistance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Vehicle mass (kg).
    pub mass: f64,
    /// Rolling resistance coefficients: N, N s/m, N s^2/m^2.
    pub f0: f64,
    pub f1: f64,
    pub f2: f64,
    /// Leader speed (m/s).
    pub v_p: f64,
    /// Desired ego speed (m/s).
    pub v_d: f64,
    /// Standstill gap (m).
    pub l0: f64,
    /// Acceleration and deceleration limits as fractions of `grav`.
    pub c_a: f64,
    pub c_d: f64,
    /// Gravity (m/s^2).
    pub grav: f64,
    /// Initial speed (m/s) and gap (m).
    pub v0: f64,
    pub z0: f64,
    /// Slopes of the gap barrier chain (1/s).
    pub p1: f64,
    pub p2: f64,
    /// Lyapunov rate (1/s).
    pub epsilon: f64,
    /// Weight on the Lyapunov relaxation.
    pub p_acc: f64,
    /// Sampling interval (s).
    pub dt: f64,
    /// Horizon (s).
    #[serde(rename = "T", alias = "horizon")]
    pub horizon: f64,
    /// RK4 substeps per sampling interval.
    pub substeps: usize,
    pub feasibility_on: bool,
    pub baseline: BaselineKind,
    /// Output directory; the `--out` flag takes precedence.
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = AccParams::default();
        Self {
            mass: p.mass,
            f0: p.f0,
            f1: p.f1,
            f2: p.f2,
            v_p: p.v_p,
            v_d: p.v_d,
            l0: p.l0,
            c_a: p.c_a,
            c_d: p.c_d,
            grav: p.grav,
            v0: 6.0,
            z0: 100.0,
            p1: 1.0,
            p2: 2.0,
            epsilon: 10.0,
            p_acc: 1.0,
            dt: 0.1,
            horizon: 30.0,
            substeps: 10,
            feasibility_on: true,
            baseline: BaselineKind::None,
            output: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Checks every key and names the first offending one.
    pub fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("mass", self.mass),
            ("f0", self.f0),
            ("f1", self.f1),
            ("f2", self.f2),
            ("v_p", self.v_p),
            ("v_d", self.v_d),
            ("l0", self.l0),
            ("grav", self.grav),
            ("p1", self.p1),
            ("p2", self.p2),
            ("epsilon", self.epsilon),
            ("p_acc", self.p_acc),
            ("dt", self.dt),
        ];
        for (key, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(invalid(key, format!("must be positive and finite, got {value}")));
            }
        }
        for (key, value) in [("c_a", self.c_a), ("c_d", self.c_d)] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(invalid(key, format!("must lie in (0, 1], got {value}")));
            }
        }
        for (key, value) in [("v0", self.v0), ("z0", self.z0)] {
            if !value.is_finite() {
                return Err(invalid(key, format!("must be finite, got {value}")));
            }
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(invalid("T", format!("must be nonnegative, got {}", self.horizon)));
        }
        if self.substeps == 0 {
            return Err(invalid("substeps", "must be at least 1".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> AccParams {
        AccParams {
            mass: self.mass,
            f0: self.f0,
            f1: self.f1,
            f2: self.f2,
            v_p: self.v_p,
            v_d: self.v_d,
            l0: self.l0,
            c_a: self.c_a,
            c_d: self.c_d,
            grav: self.grav,
        }
    }

    pub fn scenario(&self) -> AccScenario {
        AccScenario {
            params: self.params(),
            p1: self.p1,
            p2: self.p2,
            epsilon: self.epsilon,
            p_acc: self.p_acc,
            feasibility_on: self.feasibility_on,
            baseline: self.baseline.into(),
            phi_alpha: ClassK::Linear(1.0),
        }
    }

    pub fn sim_config(&self, record_timing: bool) -> SimConfig {
        SimConfig {
            dt: self.dt,
            horizon: self.horizon,
            substeps: self.substeps,
            initial_state: dvector![self.v0, self.z0],
            record_timing,
        }
    }
}

fn invalid(key: &'static str, reason: String) -> CliError {
    CliError::InvalidKey { key, reason }
}
