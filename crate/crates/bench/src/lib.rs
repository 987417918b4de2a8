//! Shared fixtures for the planner benchmarks.

use maps2::planner::{plan_problem, PlanOutcome};
use maps2::swarm::RunOptions;
use maps2::{Problem, Runtime, Scenario, Trace};

pub fn scenario(name: &str) -> Scenario {
    let text = match name {
        "collision4" => include_str!("../../../scenarios/collision4.toml"),
        "rendezvous" => include_str!("../../../scenarios/rendezvous.toml"),
        "stability" => include_str!("../../../scenarios/stability.toml"),
        "recurring" => include_str!("../../../scenarios/recurring.toml"),
        "overall" => include_str!("../../../scenarios/overall.toml"),
        "swarm20" => include_str!("../../../scenarios/swarm20.toml"),
        other => panic!("no bundled scenario {other}"),
    };
    Scenario::from_toml(text).expect("bundled scenarios parse")
}

pub fn problem(name: &str) -> Problem {
    scenario(name).to_problem().expect("bundled scenarios are valid")
}

pub fn plan(p: &Problem, runtime: Runtime) -> PlanOutcome {
    let options = RunOptions {
        runtime,
        ..RunOptions::default()
    };
    plan_problem(p, &options).expect("bundled scenarios are satisfiable")
}

/// The planned trajectory as a monitor trace.
pub fn trace(o: &PlanOutcome) -> Trace {
    let rows = o
        .trees
        .iter()
        .map(|(r, t)| (*r, t.vertices().iter().map(|v| (v.t, v.x.clone())).collect()))
        .collect();
    Trace::new(rows).expect("planner output is a valid trace")
}
