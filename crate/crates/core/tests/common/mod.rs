//! Random formulas, predicates and traces shared by the property suites.
#![allow(dead_code)]

pub mod oracle;
pub mod planning;

use std::collections::BTreeMap;

use maps2::monitor::Trace;
use maps2::{parse, Formula, Predicate, RobotId};
use proptest::prelude::*;

/// Traces cover [0, TRACE_END]; generated formulas have horizon at most 32.
pub const TRACE_END: f64 = 40.0;

fn num() -> impl Strategy<Value = f64> {
    (-40i32..=40).prop_map(|k| k as f64 / 4.0)
}

fn cmp() -> impl Strategy<Value = &'static str> {
    prop_oneof![Just("<="), Just(">="), Just("<"), Just(">")]
}

/// A comparison over robots 1 and 2 (two components each).
pub fn predicate() -> impl Strategy<Value = String> {
    let r = 1usize..=2;
    let k = 0usize..=1;
    prop_oneof![
        (r.clone(), k.clone(), cmp(), num()).prop_map(|(r, k, c, v)| format!("x{r}[{k}] {c} {v}")),
        (cmp(), num()).prop_map(|(c, v)| format!("norm(x1 - x2) {c} {}", v.abs())),
        (num(), num(), r.clone(), cmp(), num()).prop_map(|(a, b, r, c, v)| format!("{a} * x{r}[0] + {b} * x{r}[1] {c} {v}")),
        (r.clone(), k.clone(), num(), num()).prop_map(|(r, k, a, d)| format!("abs(x{r}[{k}] - {a}) <= {}", d.abs())),
        (r.clone(), cmp(), num()).prop_map(|(r, c, v)| format!("x{r}[0] * x{r}[1] {c} {v}")),
        (r, cmp(), num()).prop_map(|(r, c, v)| format!("sin(x{r}[0]) + cos(0.1 * t) {c} {v}")),
    ]
}

fn interval() -> impl Strategy<Value = (u32, u32)> {
    (0u32..=4, 1u32..=4).prop_map(|(a, w)| (a, a + w))
}

#[derive(Clone, Copy, Debug)]
pub struct Shape {
    pub depth: u32,
    pub not: bool,
    pub or: bool,
    pub until: bool,
}

/// Formula text over [`predicate`]s; temporal windows have bounds at most 8.
pub fn formula(shape: Shape) -> BoxedStrategy<String> {
    let leaf = prop_oneof![9 => predicate(), 1 => Just("true".to_string())].boxed();
    leaf.prop_recursive(shape.depth, 24, 2, move |inner| {
        let mut arms: Vec<(u32, BoxedStrategy<String>)> = vec![
            (
                2,
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) && ({b})")).boxed(),
            ),
            (
                2,
                (interval(), inner.clone())
                    .prop_map(|((a, b), f)| format!("G[{a},{b}]({f})"))
                    .boxed(),
            ),
            (
                2,
                (interval(), inner.clone())
                    .prop_map(|((a, b), f)| format!("F[{a},{b}]({f})"))
                    .boxed(),
            ),
        ];
        if shape.or {
            arms.push((
                2,
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) || ({b})")).boxed(),
            ));
        }
        if shape.not {
            arms.push((1, inner.clone().prop_map(|f| format!("!({f})")).boxed()));
        }
        if shape.until {
            arms.push((
                1,
                (interval(), inner.clone(), inner.clone())
                    .prop_map(|((a, b), l, r)| format!("({l}) U[{a},{b}] ({r})"))
                    .boxed(),
            ));
        }
        proptest::strategy::Union::new_weighted(arms)
    })
    .boxed()
}

/// Piecewise-linear two-robot traces on [0, TRACE_END] with random
/// breakpoints.
pub fn trace() -> impl Strategy<Value = Trace> {
    let robot = proptest::collection::vec((0.1f64..4.0, -6.0f64..6.0, -6.0f64..6.0), 3..12).prop_map(|steps| {
        let total: f64 = steps.iter().map(|s| s.0).sum();
        let mut t = 0.0;
        let mut out = vec![(0.0, vec![steps[0].1, steps[0].2])];
        for (k, (dt, x, y)) in steps.iter().enumerate().skip(1) {
            t += dt / total * TRACE_END;
            if k + 1 == steps.len() {
                t = TRACE_END;
            }
            out.push((t, vec![*x, *y]));
        }
        if out.last().unwrap().0 < TRACE_END {
            let x = out.last().unwrap().1.clone();
            out.push((TRACE_END, x));
        }
        out
    });
    (robot.clone(), robot).prop_map(|(a, b)| {
        let mut m = BTreeMap::new();
        m.insert(RobotId(1), a);
        m.insert(RobotId(2), b);
        Trace::new(m).expect("generated traces are well formed")
    })
}

/// Smooth scalar expressions over two planar robots and time. Singular
/// points (norm at zero, division by zero, sqrt of negatives) are kept
/// away by construction.
pub fn smooth() -> BoxedStrategy<String> {
    let leaf = prop_oneof![
        (1usize..=2, 0usize..=1).prop_map(|(r, k)| format!("x{r}[{k}]")),
        (-30i32..=30).prop_map(|c| format!("{}", c as f64 / 10.0)),
        Just("t".to_string()),
    ];
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} * {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} / (2 + sin({b})))")),
            inner.clone().prop_map(|a| format!("exp(0.1 * sin({a}))")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("cos({a})")),
            inner.clone().prop_map(|a| format!("sqrt(1 + {a} * {a})")),
            inner.clone().prop_map(|a| format!("norm(x1 - x2 + {a})")),
        ]
    })
    .boxed()
}

pub fn as_predicate(text: &str) -> Predicate {
    match parse(text).unwrap() {
        Formula::Pred(p) => p,
        other => panic!("not a predicate: {other}"),
    }
}

pub fn states(v: [f64; 4]) -> BTreeMap<RobotId, Vec<f64>> {
    BTreeMap::from([(RobotId(1), vec![v[0], v[1]]), (RobotId(2), vec![v[2], v[3]])])
}
