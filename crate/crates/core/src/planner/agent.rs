//! One robot's planning agent.
//!
//! The runtime drives every agent through the same sequence each sampled
//! instant: [`Agent::plan_iteration`], rounds of [`Agent::observe`] until all
//! agents are done, [`Agent::finish`] with the neighbors' final states,
//! [`Agent::apply`] with everyone's merged outcomes, optionally a
//! certification exchange, and [`Agent::end_iteration`].

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::cost::Predicate;
use crate::descent::{DescentParams, DescentStepper, Status, Workspace};
use crate::expr::{EvalError, RobotId};
use crate::formula::{time_horizon, Formula, FormulaTree};
use crate::planner::{
    interpolate, search_sort, select_activations, Activation, Book, PathOutcome, PlanError, PlannerParams, Problem, RobotTree,
    SatisfactionReport, Vertex,
};
use crate::rng::{keyed, Purpose};
use crate::swarm::CommGraph;
use crate::validity::{ValidityDomain, VdKind};

#[derive(Clone, Debug, PartialEq)]
pub struct IterationPlan {
    pub t0: f64,
    pub activation: Activation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Exhausted,
}

struct Iteration {
    t0: f64,
    index: usize,
    domains: Vec<ValidityDomain>,
    activation: Activation,
    stepper: DescentStepper,
}

pub struct Agent {
    id: RobotId,
    params: PlannerParams,
    branch: usize,
    book: Book,
    own: RobotTree,
    mirrors: BTreeMap<RobotId, RobotTree>,
    neighbors: Vec<RobotId>,
    workspace: Workspace,
    tf: f64,
    /// Samples in the current pass.
    j: usize,
    /// Samples since the start.
    total: usize,
    resets: usize,
    current: Option<Iteration>,
    busy: Duration,
    /// Open time intervals rewritten by each splice, oldest first. All
    /// trajectories share vertex times, so nothing outside them changed.
    modified: Vec<(f64, f64)>,
    cover_cache: RefCell<BTreeMap<usize, CoverCache>>,
}

/// A window check result and how much of `modified` it has seen.
#[derive(Clone, Copy, Debug)]
struct CoverCache {
    lo: f64,
    hi: f64,
    seen: usize,
    failure: Option<f64>,
}

impl Agent {
    pub fn new(problem: &Problem, branch: &Formula, index: usize, id: RobotId, graph: &CommGraph) -> Result<Agent, PlanError> {
        let spec = problem
            .robot(id)
            .ok_or_else(|| PlanError::Invalid(format!("robot {} is not declared", id.0)))?;
        // The horizon of the full formula sets the common time span.
        let horizon = time_horizon(&problem.formula);
        let tf = horizon + problem.params.epsilon;
        let book = Book::new(FormulaTree::new(branch), horizon, problem.robots[0].id)?;
        let neighbors = graph.neighbors(id);
        let mirrors = neighbors
            .iter()
            .map(|n| {
                let r = problem.robot(*n).expect("graph nodes are declared robots");
                (*n, RobotTree::new(r.x0.clone(), r.xf.clone(), tf))
            })
            .collect();
        Ok(Agent {
            id,
            params: problem.params.clone(),
            branch: index,
            book,
            own: RobotTree::new(spec.x0.clone(), spec.xf.clone(), tf),
            mirrors,
            neighbors,
            workspace: spec.workspace.clone(),
            tf,
            j: 0,
            total: 0,
            resets: 0,
            current: None,
            busy: Duration::ZERO,
            modified: Vec::new(),
            cover_cache: RefCell::new(BTreeMap::new()),
        })
    }

    pub fn id(&self) -> RobotId {
        self.id
    }

    pub fn neighbors(&self) -> &[RobotId] {
        &self.neighbors
    }

    pub fn tree(&self) -> &RobotTree {
        &self.own
    }

    pub fn into_tree(self) -> RobotTree {
        self.own
    }

    pub fn iterations(&self) -> usize {
        self.total
    }

    pub fn resets(&self) -> usize {
        self.resets
    }

    pub fn busy_time(&self) -> Duration {
        self.busy
    }

    pub fn report(&self) -> SatisfactionReport {
        self.book.report()
    }

    pub fn unsatisfied(&self) -> Vec<String> {
        self.book.unsatisfied()
    }

    pub fn root_satisfied(&self) -> bool {
        self.book.root().is_pos()
    }

    fn key(&self) -> [u64; 2] {
        [self.branch as u64, self.total as u64]
    }

    /// Draw the shared instant, compute domains and activations, and set up
    /// descent from the interpolated state.
    pub fn plan_iteration(&mut self) -> IterationPlan {
        let start = Instant::now();
        let key = self.key();
        let mut attempt = 0u64;
        let (t0, index) = loop {
            let mut rng = keyed(self.params.seed, Purpose::SampleTime, &[key[0], key[1], attempt]);
            let t0 = rng.gen_range(0.0..self.tf);
            if let Some(k) = search_sort(&self.own, t0) {
                break (t0, k);
            }
            attempt += 1;
        };
        let domains = self.book.domains();
        let activation = select_activations(&domains, t0, self.params.guard, self.params.seed, &key);
        let terms: Vec<Predicate> = self
            .book
            .paths()
            .iter()
            .zip(&activation.active)
            .filter(|(_, a)| **a)
            .filter_map(|(p, _)| p.leaf.clone())
            .filter(|l| l.owners().contains(&self.id))
            .collect();
        let x_inter = interpolate(&self.own, index, t0).x;
        let params = DescentParams {
            step: self.params.delta,
            eta: self.params.eta,
            max_iters: self.params.l_prime,
            margin: self.params.margin(),
            max_step: self.params.max_step,
        };
        let stepper = DescentStepper::new(self.id, x_inter, terms, params, t0, self.workspace.clone(), self.params.seed, &key);
        let plan = IterationPlan {
            t0,
            activation: activation.clone(),
        };
        self.current = Some(Iteration {
            t0,
            index,
            domains,
            activation,
            stepper,
        });
        self.busy += start.elapsed();
        plan
    }

    fn iteration(&self) -> &Iteration {
        self.current.as_ref().expect("plan_iteration not called")
    }

    /// The state to broadcast this round.
    pub fn outgoing(&self) -> &[f64] {
        self.iteration().stepper.state()
    }

    pub fn is_done(&self) -> bool {
        self.iteration().stepper.is_done()
    }

    pub fn descent_status(&self) -> Status {
        self.iteration().stepper.status()
    }

    /// One descent round given the neighbors' states of the same round.
    pub fn observe(&mut self, neighbors: &[(RobotId, Vec<f64>)]) -> Result<bool, PlanError> {
        let start = Instant::now();
        let it = self.current.as_mut().expect("plan_iteration not called");
        let r = it.stepper.observe(neighbors).map_err(|e| self.fail(e));
        self.busy += start.elapsed();
        r?;
        Ok(self.is_done())
    }

    fn fail(&self, e: EvalError) -> PlanError {
        PlanError::Agent {
            robot: self.id.0,
            message: e.to_string(),
        }
    }

    /// Splice the final states into the own and mirrored trajectories and
    /// report the outcomes of the paths this agent is responsible for.
    pub fn finish(&mut self, finals: &[(RobotId, Vec<f64>)]) -> Result<Vec<PathOutcome>, PlanError> {
        let start = Instant::now();
        let it = self.current.as_ref().expect("plan_iteration not called");
        let (t0, index) = (it.t0, it.index);
        let mine = it.stepper.state().to_vec();
        let v = self.own.vertices();
        self.modified.push((v[index].t, v[index + 1].t));
        self.own.splice(index, Vertex { t: t0, x: mine.clone() });
        for (r, x) in finals {
            if let Some(m) = self.mirrors.get_mut(r) {
                m.splice(index, Vertex { t: t0, x: x.clone() });
            }
        }
        let mut states: BTreeMap<RobotId, Vec<f64>> = finals.iter().cloned().collect();
        states.insert(self.id, mine);
        let it = self.current.as_ref().expect("checked");
        let mut out = Vec::new();
        for (p, path) in self.book.paths().iter().enumerate() {
            if self.book.reporter(p) != self.id {
                continue;
            }
            let d = &it.domains[p];
            let at_t0 = d.contains(t0);
            let leaf = |s: &BTreeMap<RobotId, Vec<f64>>| -> Result<bool, EvalError> {
                match &path.leaf {
                    Some(pred) => Ok(pred.eval_h(s, t0)? <= 0.0),
                    None => Ok(true),
                }
            };
            let outcome = match d.kind {
                VdKind::GCovered if d.is_point() => Some(PathOutcome {
                    path: p,
                    leaf: None,
                    cover: Some(self.cover(p, d).map_err(|e| self.fail(e))?),
                }),
                VdKind::GCovered if at_t0 => {
                    let l = leaf(&states).map_err(|e| self.fail(e))?;
                    let cover = if l {
                        Some(self.cover(p, d).map_err(|e| self.fail(e))?)
                    } else {
                        None
                    };
                    Some(PathOutcome {
                        path: p,
                        leaf: Some(l),
                        cover,
                    })
                }
                VdKind::FSampled if at_t0 && !d.is_point() && d.anchor == it.activation.group => Some(PathOutcome {
                    path: p,
                    leaf: Some(leaf(&states).map_err(|e| self.fail(e))?),
                    cover: None,
                }),
                _ => None,
            };
            out.extend(outcome);
        }
        self.busy += start.elapsed();
        Ok(out)
    }

    /// Does the path's predicate hold on every check point of `d`?
    fn cover(&self, path: usize, d: &ValidityDomain) -> Result<bool, EvalError> {
        let Some(pred) = &self.book.paths()[path].leaf else {
            return Ok(true);
        };
        let trees: Vec<(RobotId, &RobotTree)> = pred
            .owners()
            .iter()
            .map(|r| {
                if *r == self.id {
                    Ok((*r, &self.own))
                } else {
                    self.mirrors.get(r).map(|m| (*r, m)).ok_or(EvalError::MissingState(*r))
                }
            })
            .collect::<Result<_, _>>()?;
        let h_at = |t: f64| -> Result<f64, EvalError> {
            let owned: Vec<(RobotId, Vec<f64>)> = trees.iter().map(|(r, tr)| (*r, tr.state_at(t))).collect();
            let view: Vec<(RobotId, &[f64])> = owned.iter().map(|(r, x)| (*r, x.as_slice())).collect();
            pred.eval_h(view.as_slice(), t)
        };
        let cached = self
            .cover_cache
            .borrow()
            .get(&path)
            .copied()
            .filter(|c| c.lo == d.lo && c.hi == d.hi);
        let changed = |c: &CoverCache| &self.modified[c.seen..];
        let touched = |t: f64, c: &CoverCache| changed(c).iter().any(|(a, b)| *a < t && t < *b);
        let failure = match cached {
            Some(c) if c.failure.is_some_and(|t| !touched(t, &c)) => c.failure,
            Some(c) if c.failure.is_none() => {
                let mut failure = None;
                'outer: for (a, b) in changed(&c) {
                    for t in check_points_within(d.lo, d.hi, self.params.m, self.params.resolution, &self.own, *a, *b) {
                        if h_at(t)? > 0.0 {
                            failure = Some(t);
                            break 'outer;
                        }
                    }
                }
                failure
            }
            _ => {
                let mut failure = None;
                for t in check_points(d.lo, d.hi, self.params.m, self.params.resolution, &self.own) {
                    if h_at(t)? > 0.0 {
                        failure = Some(t);
                        break;
                    }
                }
                failure
            }
        };
        if let Some(t) = failure {
            log::debug!("robot {}: `{pred}` fails at t = {t}", self.id.0);
        }
        self.cover_cache.borrow_mut().insert(
            path,
            CoverCache {
                lo: d.lo,
                hi: d.hi,
                seen: self.modified.len(),
                failure,
            },
        );
        Ok(failure.is_none())
    }

    pub fn apply(&mut self, merged: &[PathOutcome]) -> bool {
        let it = self.current.as_ref().expect("plan_iteration not called");
        self.book.apply(merged, &it.domains, it.t0, it.activation.group);
        self.root_satisfied()
    }

    /// Re-check every always-domain on the current trajectories.
    pub fn certification(&self) -> Result<Vec<PathOutcome>, PlanError> {
        let domains = self.book.domains();
        let mut out = Vec::new();
        for (p, d) in domains.iter().enumerate() {
            if self.book.reporter(p) == self.id && d.kind == VdKind::GCovered {
                out.push(PathOutcome {
                    path: p,
                    leaf: None,
                    cover: Some(self.cover(p, d).map_err(|e| self.fail(e))?),
                });
            }
        }
        Ok(out)
    }

    pub fn apply_certification(&mut self, merged: &[PathOutcome]) -> bool {
        self.book.apply_certification(merged);
        self.root_satisfied()
    }

    /// Count the sample; after `L` samples forget the eventually instants.
    pub fn end_iteration(&mut self) -> Control {
        self.current = None;
        self.total += 1;
        self.j += 1;
        if self.j == self.params.l {
            self.j = 0;
            self.resets += 1;
            self.book.reset_eventually();
            if self.resets >= self.params.budget {
                return Control::Exhausted;
            }
        }
        Control::Continue
    }
}

/// The members of `check_points(lo, hi, ..)` strictly inside `(a, b)`.
pub(crate) fn check_points_within(lo: f64, hi: f64, m: usize, resolution: f64, tree: &RobotTree, a: f64, b: f64) -> Vec<f64> {
    if lo == hi {
        return if a < lo && lo < b { vec![lo] } else { Vec::new() };
    }
    let inside = |t: &f64| a < *t && *t < b;
    let span = |step: f64, n_max: usize| -> std::ops::Range<usize> {
        let first = (((a - lo) / step).floor() - 1.0).max(0.0) as usize;
        let last = ((((b - lo) / step).ceil() + 1.0).max(0.0) as usize).min(n_max);
        first..last.max(first)
    };
    let even = (hi - lo) / (m - 1) as f64;
    let mut pts: Vec<f64> = span(even, m)
        .map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64)
        .filter(inside)
        .collect();
    let n_grid = ((hi - lo) / resolution).floor() as usize + 2;
    pts.extend(
        span(resolution, n_grid)
            .map(|k| lo + k as f64 * resolution)
            .filter(|t| *t <= hi)
            .filter(inside),
    );
    pts.extend(tree.times().filter(|t| lo <= *t && *t <= hi).filter(inside));
    if inside(&hi) {
        pts.push(hi);
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// `m` evenly spaced points, the grid `lo + k * resolution`, and the
/// trajectory's vertex times inside `[lo, hi]`.
pub(crate) fn check_points(lo: f64, hi: f64, m: usize, resolution: f64, tree: &RobotTree) -> Vec<f64> {
    if lo == hi {
        return vec![lo];
    }
    let mut pts: Vec<f64> = (0..m).map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64).collect();
    let mut k = 0usize;
    loop {
        let t = lo + k as f64 * resolution;
        if t > hi {
            break;
        }
        pts.push(t);
        k += 1;
    }
    pts.extend(tree.times().filter(|t| lo <= *t && *t <= hi));
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::Vertex;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn within_is_a_filter(
            lo in 0.0f64..20.0,
            width in 0.0f64..15.0,
            m in 2usize..12,
            res in 0.05f64..2.0,
            times in proptest::collection::vec(0.0f64..40.0, 0..12),
            a in -1.0f64..40.0,
            span in 0.0f64..10.0,
        ) {
            let hi = lo + width;
            let mut ts = times;
            ts.push(0.0);
            ts.push(40.0);
            ts.sort_by(f64::total_cmp);
            ts.dedup();
            let tree = RobotTree::from_vertices(ts.into_iter().map(|t| Vertex { t, x: vec![0.0] }).collect());
            let b = a + span;
            let want: Vec<f64> = check_points(lo, hi, m, res, &tree).into_iter().filter(|t| a < *t && *t < b).collect();
            prop_assert_eq!(check_points_within(lo, hi, m, res, &tree, a, b), want);
        }
    }
}
