//! Per-robot gradient descent on the penalty cost, one neighbor exchange per
//! step.
//!
//! [`DescentStepper`] is the state machine; the threaded and the sequential
//! swarm runtimes both drive it round by round, and
//! [`distributed_optimisation`] drives it through a blocking exchange.

use rand::Rng;
use thiserror::Error;

use crate::cost::{assemble_fi_with_margin, Predicate};
use crate::expr::{EvalError, RobotId, StateLookup};
use crate::rng::{keyed, Purpose};

/// Component-wise box `lo <= x <= hi`.
#[derive(Clone, Debug, PartialEq)]
pub struct Workspace {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Workspace {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| if h > l { rng.gen_range(*l..*h) } else { *l })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DescentParams {
    /// Step size `delta`.
    pub step: f64,
    /// Feasibility threshold `eta` on the cost.
    pub eta: f64,
    /// Step cap `L'` before the random restart.
    pub max_iters: usize,
    /// Shift added to every `h`; `0` gives the plain penalty.
    pub margin: f64,
    /// Longest move per step; longer gradient steps are scaled down.
    pub max_step: f64,
}

#[derive(Debug, Error)]
pub enum DescentError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("neighbor exchange failed: {0}")]
    Exchange(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DescentOutcome {
    pub x: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub restarted: bool,
    pub feasible: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Running,
    Feasible,
    Restarted,
}

/// Own state plus the latest neighbor states.
pub struct Neighborhood<'a> {
    pub robot: RobotId,
    pub x: &'a [f64],
    pub others: &'a [(RobotId, Vec<f64>)],
}

impl StateLookup for Neighborhood<'_> {
    fn state(&self, robot: RobotId) -> Option<&[f64]> {
        if robot == self.robot {
            Some(self.x)
        } else {
            self.others.iter().find(|(r, _)| *r == robot).map(|(_, x)| x.as_slice())
        }
    }
}

pub struct DescentStepper {
    robot: RobotId,
    x: Vec<f64>,
    terms: Vec<Predicate>,
    params: DescentParams,
    t: f64,
    workspace: Workspace,
    seed: u64,
    key: Vec<u64>,
    k: usize,
    cost: f64,
    status: Status,
}

impl DescentStepper {
    /// `key` identifies the call (branch, iteration, ...) for the restart and
    /// jitter streams; the robot id is appended.
    pub fn new(
        robot: RobotId,
        x0: Vec<f64>,
        terms: Vec<Predicate>,
        params: DescentParams,
        t: f64,
        workspace: Workspace,
        seed: u64,
        key: &[u64],
    ) -> DescentStepper {
        let mut key = key.to_vec();
        key.push(robot.0 as u64);
        DescentStepper {
            robot,
            x: x0,
            terms,
            params,
            t,
            workspace,
            seed,
            key,
            k: 0,
            cost: f64::INFINITY,
            status: Status::Running,
        }
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn is_done(&self) -> bool {
        self.status != Status::Running
    }

    pub fn iterations(&self) -> usize {
        self.k
    }

    /// Cost evaluated against the neighbor states seen last.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// One round: evaluate the cost against the neighbors' current iterates,
    /// then stop, restart or take a gradient step.
    pub fn observe(&mut self, neighbors: &[(RobotId, Vec<f64>)]) -> Result<Status, EvalError> {
        if self.is_done() {
            return Ok(self.status);
        }
        let view = Neighborhood {
            robot: self.robot,
            x: &self.x,
            others: neighbors,
        };
        let terms: Vec<(&Predicate, bool)> = self.terms.iter().map(|p| (p, true)).collect();
        let c = assemble_fi_with_margin(self.robot, &terms, &view, self.t, self.params.margin)?;
        self.cost = c.value;
        if c.value <= self.params.eta {
            self.status = Status::Feasible;
        } else if self.k > self.params.max_iters {
            let mut key = self.key.clone();
            key.push(u64::MAX);
            self.x = self.workspace.sample(&mut keyed(self.seed, Purpose::Restart, &key));
            self.status = Status::Restarted;
            log::trace!("robot {}: restart at t = {} with cost {}", self.robot.0, self.t, c.value);
        } else if c.gradient.iter().all(|g| *g == 0.0) {
            // Stuck on a singular point of a norm: nudge.
            let mut key = self.key.clone();
            key.push(self.k as u64);
            let mut rng = keyed(self.seed, Purpose::Jitter, &key);
            for xk in &mut self.x {
                *xk += rng.gen_range(-1e-9..1e-9);
            }
            self.k += 1;
        } else {
            let len = self.params.step * c.gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
            let scale = if len > self.params.max_step {
                self.params.max_step / len
            } else {
                1.0
            };
            for (xk, g) in self.x.iter_mut().zip(&c.gradient) {
                *xk -= scale * self.params.step * g;
            }
            self.k += 1;
        }
        Ok(self.status)
    }

    pub fn outcome(&self) -> DescentOutcome {
        DescentOutcome {
            x: self.x.clone(),
            cost: self.cost,
            iterations: self.k,
            restarted: self.status == Status::Restarted,
            feasible: self.status == Status::Feasible,
        }
    }
}

/// Blocking neighbor exchange: send the current iterate, receive every
/// neighbor's iterate of the same round.
pub trait NeighborExchange {
    fn exchange(&mut self, mine: &[f64]) -> Result<Vec<(RobotId, Vec<f64>)>, DescentError>;
}

/// A robot without neighbors.
pub struct Alone;

impl NeighborExchange for Alone {
    fn exchange(&mut self, _mine: &[f64]) -> Result<Vec<(RobotId, Vec<f64>)>, DescentError> {
        Ok(Vec::new())
    }
}

#[allow(clippy::too_many_arguments)]
pub fn distributed_optimisation(
    robot: RobotId,
    x0: Vec<f64>,
    terms: Vec<&Predicate>,
    params: DescentParams,
    t: f64,
    workspace: &Workspace,
    seed: u64,
    exchange: &mut impl NeighborExchange,
) -> Result<DescentOutcome, DescentError> {
    let terms = terms.into_iter().cloned().collect();
    let mut s = DescentStepper::new(robot, x0, terms, params, t, workspace.clone(), seed, &[]);
    while !s.is_done() {
        let nb = exchange.exchange(s.state())?;
        s.observe(&nb)?;
    }
    Ok(s.outcome())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{parse, Formula};

    fn pred(s: &str) -> Predicate {
        match parse(s).unwrap() {
            Formula::Pred(p) => p,
            other => panic!("not a predicate: {other}"),
        }
    }

    fn params(eta: f64) -> DescentParams {
        DescentParams {
            step: 0.1,
            eta,
            max_iters: 1000,
            margin: 0.0,
            max_step: f64::INFINITY,
        }
    }

    fn ws() -> Workspace {
        Workspace {
            lo: vec![-10.0],
            hi: vec![10.0],
        }
    }

    #[test]
    fn feasible_start_is_kept() {
        let p = pred("x1 <= 1");
        let w = ws();
        let out = distributed_optimisation(RobotId(1), vec![0.5], vec![&p], params(0.0), 0.0, &w, 1, &mut Alone).unwrap();
        assert_eq!((out.x, out.iterations, out.feasible), (vec![0.5], 0, true));
    }

    #[test]
    fn contraction_toward_boundary() {
        let p = pred("x1 - 1 <= 0");
        let w = ws();
        let out = distributed_optimisation(RobotId(1), vec![2.0], vec![&p], params(1e-3), 0.0, &w, 1, &mut Alone).unwrap();
        assert!(out.feasible && out.cost <= 1e-3);
        // x_k - 1 = 0.9^k; stops at the first k with 0.9^(2k)/2 <= 1e-3.
        let k = (0..).find(|k| 0.5 * 0.9f64.powi(2 * k) <= 1e-3).unwrap();
        assert_eq!(out.iterations, k as usize);
        assert!((out.x[0] - (1.0 + 0.9f64.powi(k))).abs() < 1e-12);
    }

    #[test]
    fn conflicting_terms_restart_once() {
        let a = pred("x1 <= 0");
        let b = pred("x1 >= 1");
        let w = ws();
        let mut pr = params(0.0);
        pr.max_iters = 20;
        let out = distributed_optimisation(RobotId(1), vec![3.0], vec![&a, &b], pr, 0.0, &w, 1, &mut Alone).unwrap();
        assert!(out.restarted && !out.feasible);
        assert_eq!(out.iterations, 21);
        assert!(w.lo[0] <= out.x[0] && out.x[0] <= w.hi[0]);
    }

    #[test]
    fn margin_leaves_room() {
        let p = pred("x1 - 1 <= 0");
        let w = ws();
        let mut pr = params(1e-4);
        pr.margin = (2.0f64 * 1e-4).sqrt() + 0.01;
        let out = distributed_optimisation(RobotId(1), vec![5.0], vec![&p], pr, 0.0, &w, 1, &mut Alone).unwrap();
        assert!(out.feasible);
        assert!(out.x[0] - 1.0 <= -0.01);
    }

    #[test]
    fn singular_norm_is_jittered_apart() {
        let p = pred("norm(x1 - x2) >= 1");
        let w = Workspace {
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
        };
        let mut s = DescentStepper::new(RobotId(1), vec![0.5, 0.5], vec![p], params(1e-6), 0.0, w, 3, &[]);
        let nb = vec![(RobotId(2), vec![0.5, 0.5])];
        s.observe(&nb).unwrap();
        assert_ne!(s.state(), &[0.5, 0.5]);
        for _ in 0..200 {
            if s.observe(&nb).unwrap() != Status::Running {
                break;
            }
        }
        assert_eq!(s.status(), Status::Feasible);
    }

    #[test]
    fn long_steps_are_clipped() {
        // Quartic cost: a plain step from x = 10 overshoots to about -4e3.
        let p = pred("x1 * x1 <= 1");
        let w = ws();
        let mut pr = params(1e-3);
        pr.max_step = 1.0;
        let mut s = DescentStepper::new(RobotId(1), vec![10.0], vec![p.clone()], pr.clone(), 0.0, w.clone(), 1, &[]);
        s.observe(&[]).unwrap();
        assert_eq!(s.state(), &[9.0]);
        let out = distributed_optimisation(RobotId(1), vec![10.0], vec![&p], pr, 0.0, &w, 1, &mut Alone).unwrap();
        assert!(out.feasible);
    }

    #[test]
    fn deterministic() {
        let a = pred("x1 <= 0");
        let b = pred("x1 >= 1");
        let w = ws();
        let run = || distributed_optimisation(RobotId(1), vec![3.0], vec![&a, &b], params(0.0), 0.0, &w, 9, &mut Alone).unwrap();
        assert_eq!(run(), run());
    }
}
