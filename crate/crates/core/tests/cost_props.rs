mod common;

use std::collections::BTreeMap;

use common::{as_predicate as predicate, smooth, states};
use maps2::cost::assemble_fi;
use maps2::RobotId;
use proptest::prelude::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(500))]

    // Relative error against the larger of the gradient norm and 1.
    #[test]
    fn gradient_matches_central_differences(
        e in smooth(),
        v in [-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0],
        t in 0.0f64..10.0,
    ) {
        let p = predicate(&format!("{e} <= 0"));
        let s = states(v);
        for r in [RobotId(1), RobotId(2)] {
            // The norm term needs x1 - x2 + a away from zero.
            if p.h().to_string().contains("norm") {
                let d = ((v[0] - v[2]).powi(2) + (v[1] - v[3]).powi(2)).sqrt();
                prop_assume!(d > 1e-3);
            }
            let g = p.grad_h(&s, t, r).unwrap();
            let fd = p.grad_h_fd(&s, t, r, 1e-6).unwrap();
            let scale = g.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            let err = g.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            prop_assert!(err / scale < 1e-5, "{}: {:?} vs {:?}", p, g, fd);
        }
    }

    #[test]
    fn cost_is_nonnegative_and_zero_iff_satisfied(
        c in -3.0f64..3.0,
        v in [-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0],
    ) {
        let a = predicate(&format!("5 - norm(x1 - x2) + {c} <= 0"));
        let b = predicate(&format!("norm(x2 - x1) - 2 - {c} <= 0"));
        let s = states(v);
        for r in [RobotId(1), RobotId(2)] {
            let fi = assemble_fi(r, &[(&a, true), (&b, true)], &s, 0.0).unwrap();
            prop_assert!(fi.value >= 0.0);
            let sat = a.eval_h(&s, 0.0).unwrap() <= 0.0 && b.eval_h(&s, 0.0).unwrap() <= 0.0;
            prop_assert_eq!(fi.value == 0.0, sat);
        }
        // A coupled term contributes the same value to both endpoints.
        let f1 = assemble_fi(RobotId(1), &[(&a, true)], &s, 0.0).unwrap();
        let f2 = assemble_fi(RobotId(2), &[(&a, true)], &s, 0.0).unwrap();
        prop_assert_eq!(f1.value, f2.value);
    }
}

#[test]
fn hand_values() {
    let sep = predicate("norm(x1 - x2) > 5");
    let s = BTreeMap::from([(RobotId(1), vec![0.0, 0.0]), (RobotId(2), vec![10.0, 0.0])]);
    assert_eq!(sep.eval_h(&s, 0.0).unwrap(), -5.0);
    let s = BTreeMap::from([(RobotId(1), vec![3.0, 0.0]), (RobotId(2), vec![0.0, 0.0])]);
    assert_eq!(sep.grad_h(&s, 0.0, RobotId(1)).unwrap(), vec![-1.0, 0.0]);
    let tube = predicate("abs(x3 - 50 * exp(-0.1 * t)) <= 0.05");
    let s = BTreeMap::from([(RobotId(3), vec![50.0])]);
    assert!((tube.eval_h(&s, 0.0).unwrap() + 0.05).abs() < 1e-15);
    let s = BTreeMap::from([(RobotId(1), vec![0.0, 0.0]), (RobotId(2), vec![3.0, 0.0])]);
    assert_eq!(assemble_fi(RobotId(1), &[(&sep, true)], &s, 0.0).unwrap().value, 2.0);
}
