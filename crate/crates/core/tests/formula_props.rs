mod common;

use common::{formula, trace, Shape};
use maps2::formula::{enumerate_paths, FormulaTree};
use maps2::{parse, robustness, time_horizon, to_pnf, Formula};
use proptest::prelude::*;

const FULL: Shape = Shape {
    depth: 4,
    not: true,
    or: true,
    until: false,
};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(1000))]

    #[test]
    fn print_then_parse_is_identity(text in formula(Shape { until: true, ..FULL })) {
        let f = parse(&text).unwrap();
        prop_assert_eq!(parse(&f.to_string()).unwrap(), f);
    }

    #[test]
    fn pnf_is_not_free_and_idempotent(text in formula(FULL)) {
        let f = parse(&text).unwrap();
        let p = to_pnf(&f).unwrap();
        prop_assert!(!p.contains_not());
        prop_assert_eq!(to_pnf(&p).unwrap(), p.clone());
        prop_assert_eq!(time_horizon(&p), time_horizon(&f));
    }

    // Robustness of a formula and of its normal form agree in sign.
    #[test]
    fn pnf_preserves_robustness_sign(text in formula(FULL), tr in trace()) {
        let f = parse(&text).unwrap();
        let p = to_pnf(&f).unwrap();
        let a = robustness(&f, &tr, 0.0, 0.1).unwrap();
        let b = robustness(&p, &tr, 0.0, 0.1).unwrap();
        if a.abs() > 1e-9 && b.abs() > 1e-9 {
            prop_assert_eq!(a > 0.0, b > 0.0, "{} vs {}: {} / {}", f, p, a, b);
        }
    }
}

proptest! {
    #![proptest_config(config(300))]

    #[test]
    fn horizon_of_conjunction_is_max(a in formula(FULL), b in formula(FULL)) {
        let fa = parse(&a).unwrap();
        let fb = parse(&b).unwrap();
        let both = Formula::And(vec![fa.clone(), fb.clone()]);
        prop_assert_eq!(time_horizon(&both), time_horizon(&fa).max(time_horizon(&fb)));
    }

    #[test]
    fn one_path_per_leaf(text in formula(FULL)) {
        let f = to_pnf(&parse(&text).unwrap()).unwrap();
        let tree = FormulaTree::new(&f);
        let paths = enumerate_paths(&f);
        prop_assert_eq!(paths.len(), tree.leaves().count());
        let mut ids: Vec<_> = paths.iter().map(|(id, _)| id.clone()).collect();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), paths.len());
    }
}

#[test]
fn horizon_examples() {
    assert_eq!(time_horizon(&parse("x1 <= 0").unwrap()), 0.0);
    assert_eq!(time_horizon(&parse("G[20,80](x1 <= 0)").unwrap()), 80.0);
    assert_eq!(time_horizon(&parse("F[5,10]G[0,2](x1 <= 0)").unwrap()), 12.0);
}

#[test]
fn negated_conjunction_becomes_disjunction() {
    let f = parse("!(x1[0] - 1 <= 0 && G[0,2](x1[1] <= 0))").unwrap();
    let expected = parse("-(x1[0] - 1) <= 0 || F[0,2](-x1[1] <= 0)").unwrap();
    assert_eq!(to_pnf(&f).unwrap(), expected);
}
