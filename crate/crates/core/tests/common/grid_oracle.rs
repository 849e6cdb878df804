//! Brute-force grid oracle for small random QPs over the box `[-1, 1]^n`.
//!
//! Independent of the solver: it only evaluates the cost and the rows at
//! grid points.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Half-width of the box every random instance is confined to.
pub const BOX: f64 = 1.0;
pub const GRID_STEP: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct RandomQp {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl RandomQp {
    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn objective(&self, w: &DVector<f64>) -> f64 {
        0.5 * w.dot(&(&self.h * w)) + self.f.dot(w)
    }

    pub fn max_violation(&self, w: &DVector<f64>) -> f64 {
        (&self.a * w - &self.b).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest Euclidean row norm.
    pub fn max_row_norm(&self) -> f64 {
        (0..self.a.nrows()).map(|i| self.a.row(i).norm()).fold(0.0, f64::max)
    }
}

/// One or two variables; box rows first, then up to `6 - 2n` random rows.
pub fn random_instance(rng: &mut ChaCha8Rng) -> RandomQp {
    let n: usize = rng.gen_range(1..=2);
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = &m * m.transpose() + DMatrix::identity(n, n) * 0.1;
    let f = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
    let extra = rng.gen_range(0..=(6 - 2 * n));
    let rows = 2 * n + extra;
    let mut a = DMatrix::zeros(rows, n);
    let mut b = DVector::zeros(rows);
    for i in 0..n {
        a[(2 * i, i)] = 1.0;
        b[2 * i] = BOX;
        a[(2 * i + 1, i)] = -1.0;
        b[2 * i + 1] = BOX;
    }
    for r in 2 * n..rows {
        for c in 0..n {
            a[(r, c)] = rng.gen_range(-1.0..1.0);
        }
        b[r] = rng.gen_range(-1.0..1.0);
    }
    RandomQp { h, f, a, b }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridVerdict {
    /// Some grid point satisfies every row; best grid objective and point.
    Feasible { objective: f64, point: DVector<f64> },
    /// No grid point is feasible and the smallest grid violation exceeds
    /// what the grid spacing can hide.
    Infeasible { min_violation: f64 },
    /// No feasible grid point, but a feasible set thinner than the grid
    /// cannot be ruled out.
    Ambiguous,
}

pub fn grid_points(n: usize, step: f64) -> Vec<DVector<f64>> {
    let per_axis = (2.0 * BOX / step).round() as usize + 1;
    let coord = |k: usize| -BOX + k as f64 * step;
    match n {
        1 => (0..per_axis).map(|i| DVector::from_element(1, coord(i))).collect(),
        2 => (0..per_axis)
            .flat_map(|i| (0..per_axis).map(move |j| DVector::from_vec(vec![coord(i), coord(j)])))
            .collect(),
        _ => panic!("grid oracle supports one or two variables"),
    }
}

pub fn grid_oracle(qp: &RandomQp, step: f64) -> GridVerdict {
    let n = qp.dim();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut min_violation = f64::INFINITY;
    for w in grid_points(n, step) {
        let viol = qp.max_violation(&w);
        min_violation = min_violation.min(viol);
        if viol <= 0.0 {
            let obj = qp.objective(&w);
            if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                best = Some((obj, w));
            }
        }
    }
    if let Some((objective, point)) = best {
        return GridVerdict::Feasible { objective, point };
    }
    // Every box point lies within step * sqrt(n) / 2 of a grid point.
    let hidden = qp.max_row_norm() * step * (n as f64).sqrt() / 2.0;
    if min_violation > hidden + 1e-12 {
        GridVerdict::Infeasible { min_violation }
    } else {
        GridVerdict::Ambiguous
    }
}

/// Grid objective gap allowance when a feasible grid point lies within
/// `step` of `w` in the max norm: `2 h ||H w + F||∞ + n λmax(H) h^2`.
pub fn gap_allowance(qp: &RandomQp, w: &DVector<f64>, step: f64) -> f64 {
    let grad = (&qp.h * w + &qp.f).amax();
    2.0 * step * grad + qp.dim() as f64 * lambda_max(qp) * step * step
}

/// Taylor bound on `f(w + e) - f(w)` over `||e||∞ <= d`:
/// `||H w + F||_1 d + n λmax(H) d^2 / 2`.
pub fn taylor_allowance(qp: &RandomQp, w: &DVector<f64>, d: f64) -> f64 {
    let grad = (&qp.h * w + &qp.f).lp_norm(1);
    grad * d + 0.5 * qp.dim() as f64 * lambda_max(qp) * d * d
}

/// Max-norm distance from `w` to the closest feasible grid point.
pub fn nearest_feasible_distance(qp: &RandomQp, w: &DVector<f64>, step: f64) -> f64 {
    grid_points(qp.dim(), step)
        .into_iter()
        .filter(|p| qp.max_violation(p) <= 0.0)
        .map(|p| (p - w).amax())
        .fold(f64::INFINITY, f64::min)
}

fn lambda_max(qp: &RandomQp) -> f64 {
    qp.h.symmetric_eigenvalues().max()
}
