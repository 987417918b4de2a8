//! Predicates `h <= 0` and the per-robot penalty cost
//! `F^i = sum lambda * 1/2 * max(0, h + margin)^2`.

use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::expr::{EvalError, Expr, RobotId, StateLookup};

/// Stable identifier of a predicate, derived from its printed expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PredicateId(pub u64);

impl fmt::Display for PredicateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// `mu^h`: holds iff `h <= 0`.
#[derive(Clone, Debug)]
pub struct Predicate {
    h: Expr,
    owners: Vec<RobotId>,
    id: PredicateId,
}

impl PartialEq for Predicate {
    fn eq(&self, other: &Self) -> bool {
        self.h == other.h
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredicateError {
    #[error("predicate `{text} <= 0` couples {count} robots; at most 2 are supported")]
    TooManyRobots { text: String, count: usize },
}

impl Predicate {
    pub fn new(h: Expr) -> Predicate {
        let owners = h.robots();
        // The printed form is independent of which endpoint robot derives it.
        let digest = Sha256::digest(h.to_string().as_bytes());
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        Predicate {
            h,
            owners,
            id: PredicateId(u64::from_be_bytes(bytes)),
        }
    }

    pub fn h(&self) -> &Expr {
        &self.h
    }

    pub fn owners(&self) -> &[RobotId] {
        &self.owners
    }

    pub fn id(&self) -> PredicateId {
        self.id
    }

    pub fn is_coupled(&self) -> bool {
        self.owners.len() == 2
    }

    pub fn validate(&self) -> Result<(), PredicateError> {
        if self.owners.len() > 2 {
            return Err(PredicateError::TooManyRobots {
                text: self.h.to_string(),
                count: self.owners.len(),
            });
        }
        Ok(())
    }

    pub fn negated(&self) -> Predicate {
        Predicate::new(Expr::neg(self.h.clone()))
    }

    pub fn eval_h<S: StateLookup + ?Sized>(&self, states: &S, t: f64) -> Result<f64, EvalError> {
        self.h.eval(states, t)
    }

    pub fn grad_h<S: StateLookup + ?Sized>(&self, states: &S, t: f64, robot: RobotId) -> Result<Vec<f64>, EvalError> {
        self.h.eval_grad(states, t, robot).map(|(_, g)| g)
    }

    /// Central finite-difference gradient, for cross-checking.
    pub fn grad_h_fd<S: StateLookup + ?Sized>(&self, states: &S, t: f64, robot: RobotId, step: f64) -> Result<Vec<f64>, EvalError> {
        let base = states.state(robot).ok_or(EvalError::MissingState(robot))?.to_vec();
        let mut grad = Vec::with_capacity(base.len());
        for k in 0..base.len() {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[k] += step;
            minus[k] -= step;
            let hp = self.h.eval(
                &Override {
                    inner: states,
                    robot,
                    x: &plus,
                },
                t,
            )?;
            let hm = self.h.eval(
                &Override {
                    inner: states,
                    robot,
                    x: &minus,
                },
                t,
            )?;
            grad.push((hp - hm) / (2.0 * step));
        }
        Ok(grad)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} <= 0", self.h)
    }
}

/// A lookup that replaces one robot's state.
pub struct Override<'a, S: ?Sized> {
    pub inner: &'a S,
    pub robot: RobotId,
    pub x: &'a [f64],
}

impl<S: StateLookup + ?Sized> StateLookup for Override<'_, S> {
    fn state(&self, robot: RobotId) -> Option<&[f64]> {
        if robot == self.robot {
            Some(self.x)
        } else {
            self.inner.state(robot)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostAssembly {
    pub robot: RobotId,
    pub terms: Vec<(PredicateId, bool)>,
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// `F^i` and its gradient with respect to `x_i`.
pub fn assemble_fi<S: StateLookup + ?Sized>(
    robot: RobotId,
    terms: &[(&Predicate, bool)],
    states: &S,
    t: f64,
) -> Result<CostAssembly, EvalError> {
    assemble_fi_with_margin(robot, terms, states, t, 0.0)
}

/// As [`assemble_fi`] but penalizing `h + margin`, so that a cost below
/// `margin^2 / 2` certifies `h < 0` with room to spare.
pub fn assemble_fi_with_margin<S: StateLookup + ?Sized>(
    robot: RobotId,
    terms: &[(&Predicate, bool)],
    states: &S,
    t: f64,
    margin: f64,
) -> Result<CostAssembly, EvalError> {
    let dim = states.state(robot).ok_or(EvalError::MissingState(robot))?.len();
    let mut value = 0.0;
    let mut gradient = vec![0.0; dim];
    for (p, active) in terms {
        if !active {
            continue;
        }
        let h = p.eval_h(states, t)? + margin;
        if h <= 0.0 {
            continue;
        }
        value += 0.5 * h * h;
        let g = p.grad_h(states, t, robot)?;
        for (acc, gk) in gradient.iter_mut().zip(g) {
            *acc += h * gk;
        }
    }
    Ok(CostAssembly {
        robot,
        terms: terms.iter().map(|(p, a)| (p.id(), *a)).collect(),
        value,
        gradient,
    })
}
