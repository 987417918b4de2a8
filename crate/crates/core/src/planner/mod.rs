//! The sampling planner: each robot grows a piecewise-linear trajectory by
//! sampling a shared time instant, interpolating its current trajectory
//! there, pushing the interpolated state into the feasible set of the
//! predicates active at that instant, and splicing the result back in.

mod agent;
mod book;

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use rand::Rng;
use thiserror::Error;

use crate::descent::Workspace;
use crate::expr::{EvalError, RobotId};
use crate::formula::{to_pnf, Formula, PathId, PnfError, Tau};
use crate::rng::{keyed, Purpose};
use crate::swarm::{self, CommGraph, MessageRecord, RunOptions};
use crate::validity::{ValidityDomain, VdKind};

pub use agent::{Agent, Control, IterationPlan};
pub use book::{Book, PathOutcome};

#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    pub t: f64,
    pub x: Vec<f64>,
}

/// Time-sorted vertices of one robot's trajectory; edges join consecutive
/// vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotTree {
    vertices: Vec<Vertex>,
}

impl RobotTree {
    pub fn new(x0: Vec<f64>, xf: Vec<f64>, tf: f64) -> RobotTree {
        RobotTree {
            vertices: vec![Vertex { t: 0.0, x: x0 }, Vertex { t: tf, x: xf }],
        }
    }

    pub fn from_vertices(vertices: Vec<Vertex>) -> RobotTree {
        RobotTree { vertices }
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.vertices.iter().map(|v| v.t)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> {
        (1..self.vertices.len()).map(|k| (k - 1, k))
    }

    pub fn start(&self) -> f64 {
        self.vertices[0].t
    }

    pub fn end(&self) -> f64 {
        self.vertices[self.vertices.len() - 1].t
    }

    /// Insert `v` right after vertex `index`: the edge `(index, index+1)` is
    /// replaced by two edges through `v`.
    pub fn splice(&mut self, index: usize, v: Vertex) {
        debug_assert!(self.vertices[index].t < v.t && v.t < self.vertices[index + 1].t);
        self.vertices.insert(index + 1, v);
    }

    /// Linear interpolation, clamped to the end points.
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let k = self.vertices.partition_point(|v| v.t <= t);
        if k == 0 {
            return self.vertices[0].x.clone();
        }
        if k == self.vertices.len() {
            return self.vertices[k - 1].x.clone();
        }
        interpolate(self, k - 1, t).x
    }

    /// Tree integrity: strictly increasing times.
    pub fn is_well_formed(&self) -> bool {
        self.vertices.len() >= 2 && self.vertices.windows(2).all(|w| w[0].t < w[1].t)
    }
}

/// Index of the vertex immediately before `t0`, or `None` if `t0` is outside
/// the open time span or coincides with a vertex.
pub fn search_sort(tree: &RobotTree, t0: f64) -> Option<usize> {
    let v = &tree.vertices;
    if !(v[0].t < t0 && t0 < v[v.len() - 1].t) {
        return None;
    }
    let k = v.partition_point(|z| z.t < t0);
    if v[k].t == t0 {
        return None;
    }
    Some(k - 1)
}

pub fn interpolate(tree: &RobotTree, index: usize, t0: f64) -> Vertex {
    let (a, b) = (&tree.vertices[index], &tree.vertices[index + 1]);
    let s = (t0 - a.t) / (b.t - a.t);
    Vertex {
        t: t0,
        x: a.x.iter().zip(&b.x).map(|(p, q)| (q - p) * s + p).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerParams {
    /// Samples per pass `L`; eventually bookkeeping resets after each pass.
    pub l: usize,
    /// Descent step cap `L'`.
    pub l_prime: usize,
    /// Descent step size.
    pub delta: f64,
    /// Descent feasibility threshold.
    pub eta: f64,
    /// Horizon pad: trajectories end at `th + epsilon`.
    pub epsilon: f64,
    pub seed: u64,
    /// Evenly spaced samples per always-window check.
    pub m: usize,
    /// Grid spacing of always-window checks.
    pub resolution: f64,
    /// Passes of `L` samples before giving up.
    pub budget: usize,
    pub max_branches: usize,
    /// Always-windows are shaped this far beyond their ends.
    pub guard: f64,
    /// Extra depth inside the feasible set demanded from descent.
    pub slack: f64,
    /// Longest state change in one descent step.
    pub max_step: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            l: 100,
            l_prime: 100,
            delta: 0.1,
            eta: 0.01,
            epsilon: 1.0,
            seed: 0,
            m: 100,
            resolution: 0.05,
            budget: 10,
            max_branches: 64,
            guard: 1.0,
            slack: 0.01,
            max_step: 1.0,
        }
    }
}

impl PlannerParams {
    /// Shift applied to every `h` during descent so that a cost at most
    /// `eta` implies `h <= -slack`.
    pub fn margin(&self) -> f64 {
        (2.0 * self.eta).sqrt() + self.slack
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobotSpec {
    pub id: RobotId,
    pub dim: usize,
    pub x0: Vec<f64>,
    pub xf: Vec<f64>,
    pub workspace: Workspace,
}

/// A validated planning problem.
#[derive(Clone, Debug)]
pub struct Problem {
    pub formula: Formula,
    pub robots: Vec<RobotSpec>,
    pub params: PlannerParams,
}

impl Problem {
    pub fn new(formula: Formula, robots: Vec<RobotSpec>, params: PlannerParams) -> Result<Problem, PlanError> {
        let p = Problem { formula, robots, params };
        p.validate()?;
        Ok(p)
    }

    /// Final state drawn from the workspace with the shared seed.
    pub fn random_final_state(seed: u64, robot: RobotId, workspace: &Workspace) -> Vec<f64> {
        workspace.sample(&mut keyed(seed, Purpose::FinalState, &[robot.0 as u64]))
    }

    pub fn robot(&self, id: RobotId) -> Option<&RobotSpec> {
        self.robots.iter().find(|r| r.id == id)
    }

    pub fn dims(&self) -> BTreeMap<RobotId, usize> {
        self.robots.iter().map(|r| (r.id, r.dim)).collect()
    }

    fn validate(&self) -> Result<(), PlanError> {
        let invalid = |m: String| Err(PlanError::Invalid(m));
        if self.robots.is_empty() {
            return invalid("no robots declared".into());
        }
        for (k, r) in self.robots.iter().enumerate() {
            if r.id != RobotId(k + 1) {
                return invalid(format!(
                    "robot ids must be 1, 2, ... in order; found {} at position {}",
                    r.id.0,
                    k + 1
                ));
            }
            if r.dim == 0 {
                return invalid(format!("robot {} has dimension 0", r.id.0));
            }
            for (name, v) in [
                ("x0", &r.x0),
                ("xf", &r.xf),
                ("workspace.lo", &r.workspace.lo),
                ("workspace.hi", &r.workspace.hi),
            ] {
                if v.len() != r.dim {
                    return invalid(format!("robot {}: {name} has {} components, expected {}", r.id.0, v.len(), r.dim));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return invalid(format!("robot {}: {name} is not finite", r.id.0));
                }
            }
            if r.workspace.lo.iter().zip(&r.workspace.hi).any(|(l, h)| l > h) {
                return invalid(format!("robot {}: workspace lo exceeds hi", r.id.0));
            }
        }
        let p = &self.params;
        if !(p.delta > 0.0) || !(p.eta >= 0.0) || p.l == 0 || p.l_prime == 0 || p.m < 2 || !(p.epsilon > 0.0) {
            return invalid("parameters must satisfy delta > 0, eta >= 0, L >= 1, L' >= 1, M >= 2, epsilon > 0".into());
        }
        if !(p.resolution > 0.0) || p.budget == 0 || p.max_branches == 0 || !(p.guard >= 0.0) || !(p.slack >= 0.0) || !(p.max_step > 0.0) {
            return invalid(
                "parameters must satisfy Delta > 0, budget >= 1, max_branches >= 1, guard >= 0, slack >= 0, max_step > 0".into(),
            );
        }
        let dims = self.dims();
        for pred in self.formula.predicates() {
            for r in pred.owners() {
                if !dims.contains_key(r) {
                    return invalid(format!("formula references undeclared robot {r} in `{pred}`"));
                }
            }
            pred.validate().map_err(|e| PlanError::Invalid(e.to_string()))?;
            pred.h()
                .check_shape(&dims)
                .map_err(|e| PlanError::Invalid(format!("in `{pred}`: {e}")))
                .and_then(|len| {
                    if len == 1 {
                        Ok(())
                    } else {
                        Err(PlanError::Invalid(format!("`{pred}` is a vector of length {len}, not a scalar")))
                    }
                })?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("unsupported formula: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Pnf(#[from] PnfError),
    #[error("no branch satisfied within the budget; unsatisfied: {}", .unsatisfied.join("; "))]
    Budget { iterations: usize, unsatisfied: Vec<String> },
    #[error("robot {robot}: {message}")]
    Agent { robot: usize, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl From<EvalError> for PlanError {
    fn from(e: EvalError) -> Self {
        PlanError::Invalid(e.to_string())
    }
}

/// Disjunction-free alternatives, expanded left to right.
pub fn branch_disjunctions(f: &Formula, max_branches: usize) -> Result<Vec<Formula>, PlanError> {
    fn expand(f: &Formula, cap: usize) -> Result<Vec<Formula>, PlanError> {
        let too_many = |n: usize| PlanError::Invalid(format!("disjunctions expand to {n} branches, more than the limit {cap}"));
        Ok(match f {
            Formula::True | Formula::Pred(_) => vec![f.clone()],
            Formula::Not(c) => expand(c, cap)?.into_iter().map(Formula::not).collect(),
            Formula::Or(cs) => {
                let mut out = Vec::new();
                for c in cs {
                    out.extend(expand(c, cap)?);
                    if out.len() > cap {
                        return Err(too_many(out.len()));
                    }
                }
                out
            }
            Formula::And(cs) => {
                let mut acc: Vec<Vec<Formula>> = vec![Vec::new()];
                for c in cs {
                    let alts = expand(c, cap)?;
                    if acc.len() * alts.len() > cap {
                        return Err(too_many(acc.len() * alts.len()));
                    }
                    acc = acc
                        .iter()
                        .flat_map(|prefix| {
                            alts.iter().map(move |a| {
                                let mut v = prefix.clone();
                                v.push(a.clone());
                                v
                            })
                        })
                        .collect();
                }
                acc.into_iter().map(Formula::And).collect()
            }
            Formula::Always(i, c) => expand(c, cap)?.into_iter().map(|c| Formula::always(*i, c)).collect(),
            Formula::Eventually(i, c) => expand(c, cap)?.into_iter().map(|c| Formula::eventually(*i, c)).collect(),
            Formula::Until(i, l, r) => {
                let (ls, rs) = (expand(l, cap)?, expand(r, cap)?);
                if ls.len() * rs.len() > cap {
                    return Err(too_many(ls.len() * rs.len()));
                }
                ls.iter()
                    .flat_map(|l| rs.iter().map(move |r| Formula::until(*i, l.clone(), r.clone())))
                    .collect()
            }
        })
    }
    expand(f, max_branches)
}

/// Which paths enter the cost at `t0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Activation {
    pub active: Vec<bool>,
    /// The eventually node whose window was picked, if any.
    pub group: Option<usize>,
}

/// Always-domains containing `t0` (widened by `guard`) are all active. Among
/// the eventually windows containing `t0`, one defining operator is picked by
/// the shared stream and all of its paths are activated; when one is picked,
/// always-domains active only through their guard band are dropped.
pub fn select_activations(domains: &[ValidityDomain], t0: f64, guard: f64, seed: u64, key: &[u64]) -> Activation {
    let mut active = vec![false; domains.len()];
    let mut groups: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for (p, d) in domains.iter().enumerate() {
        match d.kind {
            VdKind::GCovered => active[p] = d.lo - guard <= t0 && t0 <= d.hi + guard,
            VdKind::FSampled => {
                if !d.is_point() && d.contains(t0) {
                    let ids = groups.entry(d.anchor.expect("eventually domains carry their node")).or_default();
                    ids.push(d.owner.map_or(0, |o| o.0));
                }
            }
        }
    }
    let group = if groups.is_empty() {
        None
    } else {
        let mut k = key.to_vec();
        let mut ids: Vec<u64> = groups.values().flatten().copied().collect();
        ids.sort_unstable();
        k.extend(ids);
        let pick = keyed(seed, Purpose::PickEventually, &k).gen_range(0..groups.len());
        groups.keys().nth(pick).copied()
    };
    if let Some(g) = group {
        for (p, d) in domains.iter().enumerate() {
            match d.kind {
                VdKind::FSampled => {
                    if d.anchor == Some(g) && !d.is_point() && d.contains(t0) {
                        active[p] = true;
                    }
                }
                // Guard-band activations yield to a picked eventually window.
                VdKind::GCovered => {
                    if !(d.lo <= t0 && t0 <= d.hi) {
                        active[p] = false;
                    }
                }
            }
        }
    }
    Activation { active, group }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathReport {
    pub id: PathId,
    pub text: String,
    pub tau: Tau,
    pub kind: VdKind,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventuallyReport {
    pub node: usize,
    pub text: String,
    /// Absolute time of the last recorded satisfaction.
    pub instant: Option<f64>,
    pub tau: Tau,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SatisfactionReport {
    pub root: Tau,
    pub paths: Vec<PathReport>,
    pub eventually: Vec<EventuallyReport>,
}

impl fmt::Display for SatisfactionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "root tau = {}", self.root.value())?;
        for p in &self.paths {
            writeln!(
                f,
                "  tau = {:+} on {} over [{}, {}] ({:?})",
                p.tau.value(),
                p.text,
                p.lo,
                p.hi,
                p.kind
            )?;
        }
        for e in &self.eventually {
            writeln!(f, "  {} satisfied at {:?}", e.text, e.instant)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PlanOutcome {
    pub branch: usize,
    pub branch_formula: Formula,
    pub trees: BTreeMap<RobotId, RobotTree>,
    pub report: SatisfactionReport,
    /// Sampled instants across all passes of the successful branch.
    pub iterations: usize,
    pub resets: usize,
    /// Sampled instants across all attempted branches.
    pub total_iterations: usize,
    pub messages: Vec<MessageRecord>,
    /// Largest compute time spent by any single agent.
    pub max_agent_time: Duration,
}

/// Plan one disjunction-free branch.
pub fn plan(problem: &Problem, branch: &Formula, index: usize, options: &RunOptions) -> Result<PlanOutcome, PlanError> {
    let graph = CommGraph::build(problem.robots.iter().map(|r| r.id), problem.formula.predicates());
    let agents = problem
        .robots
        .iter()
        .map(|r| Agent::new(problem, branch, index, r.id, &graph))
        .collect::<Result<Vec<_>, _>>()?;
    swarm::execute(agents, &graph, options).map(|mut o| {
        o.branch = index;
        o.branch_formula = branch.clone();
        for m in &mut o.messages {
            m.branch = index;
        }
        o
    })
}

/// Plan the whole formula: branch over disjunctions and return the first
/// satisfied branch.
pub fn plan_problem(problem: &Problem, options: &RunOptions) -> Result<PlanOutcome, PlanError> {
    let pnf = to_pnf(&problem.formula)?;
    if pnf.contains_until() {
        return Err(PlanError::Unsupported(
            "the planner does not handle until operators; use the monitor".into(),
        ));
    }
    let branches = branch_disjunctions(&pnf, problem.params.max_branches)?;
    let mut failures = Vec::new();
    let mut spent = 0;
    for (k, b) in branches.iter().enumerate() {
        match plan(problem, b, k, options) {
            Ok(mut o) => {
                o.total_iterations = spent + o.iterations;
                return Ok(o);
            }
            Err(PlanError::Budget { iterations, unsatisfied }) => {
                spent += iterations;
                failures.extend(unsatisfied.into_iter().map(|u| format!("branch {k}: {u}")));
            }
            Err(e) => return Err(e),
        }
    }
    Err(PlanError::Budget {
        iterations: spent,
        unsatisfied: failures,
    })
}
