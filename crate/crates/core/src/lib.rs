//! Control barrier function quadratic programs with feasibility
//! constraints.
//!
//! The crate builds pointwise CBF-CLF QPs for control-affine systems,
//! synthesizes a feasibility constraint that keeps the safety row
//! compatible with the control bounds, and simulates the sampled-data
//! closed loop. The cruise-control scenario in [`acc`] wires everything
//! together.
//!
//! Modules, bottom up:
//!
//! - [`qp`]: dense QP solver with infeasibility certificates.
//! - [`dynamics`]: control-affine plants and control bounds.
//! - [`constraints`]: barrier, Lyapunov and bound rows.
//! - [`feasibility`]: feasibility functions, candidate `φ` and its checks.
//! - [`sim`]: the sampled-data loop.
//! - [`acc`]: adaptive cruise control.

pub mod acc;
pub mod constraints;
pub mod dynamics;
pub mod feasibility;
pub mod qp;
pub mod sim;

pub use acc::{AccController, AccScenario, Baseline};
pub use constraints::{ClassK, ClfSpec, ConstraintRow, HocbfSpec, LieDerivatives};
pub use dynamics::{AccParams, AffineSystem, Control, ControlBounds, State};
pub use feasibility::{FeasibilityCertificate, PhiSpec};
pub use qp::{QpProblem, QpResult, QpStatus};
pub use sim::{Controller, Monitors, SimConfig, SimRecord, SimTrace, TerminalStatus};
