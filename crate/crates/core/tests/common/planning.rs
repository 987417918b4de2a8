//! Planner fixtures: bundled scenarios and random feasible problems.

use std::fs;
use std::path::PathBuf;

use maps2::descent::Workspace;
use maps2::planner::PlanOutcome;
use maps2::swarm::RunOptions;
use maps2::{parse, satisfies, PlannerParams, Problem, RobotId, RobotSpec, Runtime, Scenario, Trace};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

pub fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"));
    Scenario::from_toml(&fs::read_to_string(path).unwrap()).unwrap()
}

pub fn options(runtime: Runtime, log_messages: bool) -> RunOptions {
    RunOptions {
        runtime,
        log_messages,
        ..RunOptions::default()
    }
}

pub fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        rng_seed: RngSeed::Fixed(20240611),
        ..ProptestConfig::default()
    }
}

pub fn robot(id: usize, x0: Vec<f64>, xf: Vec<f64>) -> RobotSpec {
    RobotSpec {
        id: RobotId(id),
        dim: x0.len(),
        x0,
        xf,
        workspace: Workspace {
            lo: vec![0.0; 2],
            hi: vec![10.0; 2],
        },
    }
}

// Random feasible problems: every robot owns a resting point, all of its box
// constraints contain that point with room to spare, and the resting points
// are at least two units apart, so sitting still after t = 5 satisfies
// everything.

#[derive(Clone, Debug)]
pub struct Feasible {
    pub formula: String,
    pub robots: Vec<RobotSpec>,
    pub seed: u64,
}

pub fn window() -> impl Strategy<Value = (f64, f64)> {
    (5u32..=15, 5u32..=20).prop_map(|(a, w)| (a as f64, (a + w) as f64))
}

pub fn box_around(r: usize, p: (f64, f64)) -> BoxedStrategy<String> {
    (1.0f64..2.0, -0.5f64..0.5, -0.5f64..0.5)
        .prop_map(move |(half, ox, oy)| {
            let (cx, cy) = (p.0 + ox * half, p.1 + oy * half);
            format!("abs(x{r}[0] - {cx:.3}) <= {half:.3} && abs(x{r}[1] - {cy:.3}) <= {half:.3}")
        })
        .boxed()
}

pub fn clause(r: usize, p: (f64, f64), partner: Option<usize>) -> BoxedStrategy<String> {
    let b = box_around(r, p);
    let mut arms: Vec<BoxedStrategy<String>> = vec![
        (window(), b.clone()).prop_map(|((a, e), s)| format!("G[{a},{e}]({s})")).boxed(),
        (window(), b.clone()).prop_map(|((a, e), s)| format!("F[{a},{e}]({s})")).boxed(),
        (window(), 1u32..=5, b.clone())
            .prop_map(|((a, e), w, s)| format!("F[{a},{e}]G[0,{w}]({s})"))
            .boxed(),
        (window(), 2u32..=6, b)
            .prop_map(|((a, e), w, s)| format!("G[{a},{e}]F[0,{w}]({s})"))
            .boxed(),
    ];
    if let Some(q) = partner {
        arms.push(
            window()
                .prop_map(move |(a, e)| format!("G[{a},{e}](norm(x{r} - x{q}) >= 1)"))
                .boxed(),
        );
    }
    proptest::strategy::Union::new(arms).boxed()
}

pub fn feasible(max_robots: usize) -> impl Strategy<Value = Feasible> {
    (
        1..=max_robots,
        proptest::sample::subsequence((0..9).collect::<Vec<u32>>(), 3),
        any::<u64>(),
    )
        .prop_flat_map(|(n, cells, seed)| {
            let rest: Vec<(f64, f64)> = cells[..n]
                .iter()
                .map(|c| (2.0 + 3.0 * (c % 3) as f64, 2.0 + 3.0 * (c / 3) as f64))
                .collect();
            let clauses: Vec<BoxedStrategy<String>> = (0..n)
                .map(|i| {
                    let partner = if n > 1 { Some((i + 1) % n + 1) } else { None };
                    clause(i + 1, rest[i], partner)
                })
                .collect();
            let starts = proptest::collection::vec([0.0f64..10.0, 0.0f64..10.0, 0.0f64..10.0, 0.0f64..10.0], n);
            (clauses, starts, Just(seed))
        })
        .prop_map(|(clauses, starts, seed)| Feasible {
            formula: clauses.join(" && "),
            robots: starts
                .iter()
                .enumerate()
                .map(|(i, v)| robot(i + 1, vec![v[0], v[1]], vec![v[2], v[3]]))
                .collect(),
            seed,
        })
}

pub fn problem(f: &Feasible) -> Problem {
    let params = PlannerParams {
        seed: f.seed,
        ..PlannerParams::default()
    };
    Problem::new(parse(&f.formula).unwrap(), f.robots.clone(), params).unwrap()
}

pub fn trace_of(o: &PlanOutcome) -> Trace {
    let rows = o
        .trees
        .iter()
        .map(|(r, t)| (*r, t.vertices().iter().map(|v| (v.t, v.x.clone())).collect()))
        .collect();
    Trace::new(rows).unwrap()
}

pub fn monitor_ok(p: &Problem, o: &PlanOutcome) -> bool {
    satisfies(&p.formula, &trace_of(o), p.params.resolution).unwrap().verdict
}
