//! `compute_vd` against a direct recursion over the formula, with random
//! eventually instants.

mod common;

use common::oracle::{randomize, Oracle};
use common::{formula, Shape};
use maps2::formula::{FormulaTree, NodeKind};
use maps2::validity::{compute_vd, EventuallyState, VdKind};
use maps2::{parse, time_horizon};
use proptest::prelude::*;

const SHAPE: Shape = Shape {
    depth: 3,
    not: false,
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
    fn compute_vd_matches_recursion(
        text in formula(SHAPE),
        picks in proptest::collection::vec((0u8..3, 0.0f64..1.0, 0.0f64..1.0), 1..6),
    ) {
        let f = parse(&text).unwrap();
        let tree = FormulaTree::new(&f);
        let th = time_horizon(&f);
        let mut ev = EventuallyState::new(&tree);
        randomize(&mut ev, &picks);
        let oracle = Oracle { tree: &tree, ev: &ev, horizon: th };
        for path in tree.paths() {
            let got = compute_vd(&path, &tree, &ev, th).unwrap();
            let want = oracle.path_vd(&f, &path.id.0);
            prop_assert_eq!((got.kind, got.lo, got.hi), (want.kind, want.lo, want.hi), "{} path {}", f, path.id);
            // Once every eventually above the leaf has its instant, the kind
            // follows the operator directly above the leaf.
            let fixed = path.nodes.iter().all(|&n| ev.get(n).map_or(true, |st| st.t_big.is_some()));
            let parent = path.nodes.iter().rev().skip(1).find(|&&n| tree.kind(n).is_temporal());
            if let (true, Some(&p)) = (fixed, parent) {
                let above_is_f = matches!(tree.kind(p), NodeKind::Eventually(_));
                prop_assert_eq!(got.kind == VdKind::FSampled, above_is_f);
            }
        }
    }

    // Without reopened recurrent windows every domain lies inside [0, th].
    #[test]
    fn domains_stay_within_horizon(
        text in formula(SHAPE),
        picks in proptest::collection::vec((0u8..2, 0.0f64..1.0, 0.0f64..1.0), 1..6),
    ) {
        let f = parse(&text).unwrap();
        let tree = FormulaTree::new(&f);
        let th = time_horizon(&f);
        let mut ev = EventuallyState::new(&tree);
        randomize(&mut ev, &picks);
        for path in tree.paths() {
            let vd = compute_vd(&path, &tree, &ev, th).unwrap();
            prop_assert!(0.0 <= vd.lo && vd.lo <= vd.hi && vd.hi <= th + 1e-9, "{} path {}: [{}, {}]", f, path.id, vd.lo, vd.hi);
        }
    }
}

#[test]
fn worked_examples() {
    let cases: [(&str, Option<f64>, (f64, f64, VdKind)); 4] = [
        ("G[5,10](x1 <= 0)", None, (5.0, 10.0, VdKind::GCovered)),
        ("F[5,10]G[0,2](x1 <= 0)", Some(7.0), (7.0, 9.0, VdKind::GCovered)),
        ("G[2,10]F[0,5](x1 <= 0)", Some(1.0), (3.0, 3.0, VdKind::FSampled)),
        ("G[1,10]G[0,2](x1 <= 0)", None, (1.0, 12.0, VdKind::GCovered)),
    ];
    for (text, t_big, want) in cases {
        let f = parse(text).unwrap();
        let tree = FormulaTree::new(&f);
        let mut ev = EventuallyState::new(&tree);
        if let Some(t) = t_big {
            let key = ev.keys().next().unwrap();
            ev.get_mut(key).unwrap().t_big = Some(t);
        }
        let vd = compute_vd(&tree.paths()[0], &tree, &ev, time_horizon(&f)).unwrap();
        assert_eq!((vd.lo, vd.hi, vd.kind), want, "{text}");
    }
}
