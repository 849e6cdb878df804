use cbf_feasibility::acc::{self, AccScenario};
use cbf_feasibility::constraints::{clf_row, hocbf_row};
use cbf_feasibility::dynamics::{acc_bounds, AccParams};
use cbf_feasibility::feasibility::{acc_speed_bound, acc_synthesize_phi, transformed_bounds};
use cbf_feasibility::qp::{self, QpProblem};
use nalgebra::{dvector, DMatrix, DVector};
use proptest::prelude::*;

fn slope() -> impl Strategy<Value = f64> {
    0.1f64..5.0
}

fn acc_state() -> impl Strategy<Value = (f64, f64)> {
    (0.0f64..40.0, 0.0f64..150.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// If some value on the projected interval satisfies the safety row,
    /// some force inside the box does too.
    #[test]
    fn projected_interval_never_hides_a_conflict(p1 in slope(), p2 in slope(), (v, z) in acc_state()) {
        let scenario = AccScenario::new(p1, p2);
        let gap = acc::gap_barrier(&scenario).unwrap();
        let bounds = acc_bounds(&scenario.params);
        let x = dvector![v, z];
        let row = hocbf_row(&gap, &x);
        let interval = transformed_bounds(&bounds, &gap.control_gain(&x)).unwrap();
        // Row reads (1/M) u <= beta; the interval lives on the same axis.
        let interval_hit = interval.lo <= row.beta;
        let (lo, hi) = (bounds.lower()[0], bounds.upper()[0]);
        let box_hit = (0..=1000).any(|k| {
            let u = lo + (hi - lo) * k as f64 / 1000.0;
            row.residual(&dvector![u, 0.0]) <= 1e-12 * (1.0 + row.beta.abs())
        });
        if interval_hit {
            prop_assert!(box_hit);
        }
    }

    /// Safety-row right-hand side plus `φ` equals the right-hand side of
    /// the CBF row for the simplified feasibility function with slope
    /// `p1 + p2`.
    #[test]
    fn reformulation_identity(p1 in slope(), p2 in slope(), (v, z) in acc_state()) {
        let p = AccParams::default();
        let scenario = AccScenario::new(p1, p2);
        let beta = hocbf_row(&acc::gap_barrier(&scenario).unwrap(), &dvector![v, z]).beta;
        let phi = acc_synthesize_phi(p1, p2, &p).unwrap().value(&dvector![v, z]);
        let k = p1 + p2;
        let g = p1 * p2 / (p1 + p2);
        let fr = p.f0 * v.signum() + p.f1 * v + p.f2 * v * v;
        let cdg = p.c_d * p.grav;
        let expanded = fr / p.mass + (g + k) * (p.v_p - v) + k * g * (z - p.l0) + k * cdg / (p1 + p2);
        prop_assert!((beta + phi - expanded).abs() <= 1e-12 * beta.abs().max(1.0));
    }

    #[test]
    fn candidate_sign_is_the_speed_bound(p1 in slope(), p2 in slope(), v in 0.0f64..60.0) {
        let p = AccParams::default();
        let phi = acc_synthesize_phi(p1, p2, &p).unwrap();
        let bound = acc_speed_bound(p1, p2, &p);
        let value = phi.value(&dvector![v, 50.0]);
        // Away from the boundary the two tests agree exactly.
        if (v - bound).abs() > 1e-9 {
            prop_assert_eq!(value >= 0.0, v <= bound);
        }
        prop_assert!(phi.value(&dvector![bound, 0.0]).abs() < 1e-12);
    }

    #[test]
    fn relaxed_lyapunov_row_is_always_satisfiable(v in 0.0f64..40.0, u in -7000.0f64..7000.0) {
        let scenario = AccScenario::new(1.0, 2.0);
        let clf = acc::speed_clf(&scenario).unwrap();
        let x = dvector![v, 50.0];
        let row = clf_row(&clf, &x);
        let need = (clf.lf)(&x) + (clf.lg)(&x)[0] * u + clf.epsilon * (clf.value)(&x);
        let delta = need.max(0.0);
        prop_assert!(row.residual(&dvector![u, delta]) <= 1e-9 * (1.0 + need.abs()));
    }

    #[test]
    fn assembled_rows_are_finite(p1 in slope(), p2 in slope(), (v, z) in acc_state(), on in any::<bool>()) {
        use cbf_feasibility::sim::Controller;
        let controller = acc::build(&AccScenario { feasibility_on: on, ..AccScenario::new(p1, p2) }).unwrap();
        let rows = controller.rows(&dvector![v, z]);
        prop_assert_eq!(rows.len(), if on { 5 } else { 4 });
        prop_assert!(rows.iter().all(|r| r.is_finite()));
    }
}

fn qp_strategy() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>)> {
    (
        prop::collection::vec(-1.0f64..1.0, 4),
        prop::collection::vec(-3.0f64..3.0, 2),
        prop::collection::vec(-1.0f64..1.0, 8),
        prop::collection::vec(-1.0f64..1.0, 4),
    )
        .prop_map(|(m, f, a, b)| {
            let m = DMatrix::from_vec(2, 2, m);
            let h = &m * m.transpose() + DMatrix::identity(2, 2) * 0.05;
            (h, DVector::from_vec(f), DMatrix::from_row_slice(4, 2, &a), DVector::from_vec(b))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn solver_is_deterministic_and_consistent((h, f, a, b) in qp_strategy()) {
        let problem = QpProblem::new(h, f, a, b).unwrap();
        let first = qp::solve(&problem).unwrap();
        let second = qp::solve(&problem).unwrap();
        prop_assert_eq!(&first, &second);
        let feasible = qp::check_feasible(&problem).unwrap().is_feasible();
        prop_assert_eq!(feasible, first.is_optimal());
        if let Some(kkt) = first.kkt(&problem) {
            prop_assert!(kkt.passes(), "{:?}", kkt);
        }
    }
}
