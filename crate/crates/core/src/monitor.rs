//! Quantitative STL monitor over piecewise-linear trajectories.
//!
//! Deliberately shares nothing with the planner's satisfaction bookkeeping:
//! it evaluates the robustness semantics directly on the formula, so it can
//! serve as an oracle for the planner.
//!
//! Interval extrema are taken over the grid `lo + kΔ`, the interval end
//! points and the trace breakpoints. For a predicate that is affine in the
//! states this is exact on every linear segment; otherwise it is bounded by
//! the grid resolution.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::cost::Predicate;
use crate::expr::{EvalError, RobotId};
use crate::formula::{time_horizon, Formula, Interval};

pub const DEFAULT_DELTA: f64 = 0.05;
/// Verdicts accept `rho >= -TOLERANCE`.
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum MonitorError {
    #[error("trace for robot {robot} is empty")]
    Empty { robot: usize },
    #[error("trace for robot {robot} has non-increasing time {t}")]
    NotIncreasing { robot: usize, t: f64 },
    #[error("trace for robot {robot} mixes state dimensions")]
    Dimension { robot: usize },
    #[error("trace ends at {have} but the formula needs {need}")]
    TooShort { need: f64, have: f64 },
    #[error("resolution must be positive and finite, got {0}")]
    Resolution(f64),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Per-robot time-stamped samples, linearly interpolated and held constant
/// outside the sampled span.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    robots: BTreeMap<RobotId, Vec<(f64, Vec<f64>)>>,
    breakpoints: Vec<f64>,
}

impl Trace {
    pub fn new(robots: BTreeMap<RobotId, Vec<(f64, Vec<f64>)>>) -> Result<Trace, MonitorError> {
        let mut breakpoints = Vec::new();
        for (r, samples) in &robots {
            let Some(first) = samples.first() else {
                return Err(MonitorError::Empty { robot: r.0 });
            };
            for w in samples.windows(2) {
                if !(w[1].0 > w[0].0) {
                    return Err(MonitorError::NotIncreasing { robot: r.0, t: w[1].0 });
                }
            }
            if samples.iter().any(|(_, x)| x.len() != first.1.len()) {
                return Err(MonitorError::Dimension { robot: r.0 });
            }
            breakpoints.extend(samples.iter().map(|(t, _)| *t));
        }
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        Ok(Trace { robots, breakpoints })
    }

    /// Earliest last-sample time across robots.
    pub fn end_time(&self) -> f64 {
        self.robots
            .values()
            .map(|s| s.last().map_or(f64::NEG_INFINITY, |(t, _)| *t))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn robots(&self) -> impl Iterator<Item = RobotId> + '_ {
        self.robots.keys().copied()
    }

    pub fn samples(&self, robot: RobotId) -> Option<&[(f64, Vec<f64>)]> {
        self.robots.get(&robot).map(|s| s.as_slice())
    }

    pub fn state(&self, robot: RobotId, t: f64) -> Option<Vec<f64>> {
        let s = self.robots.get(&robot)?;
        let k = s.partition_point(|(ti, _)| *ti <= t);
        if k == 0 {
            return Some(s[0].1.clone());
        }
        if k == s.len() {
            return Some(s[k - 1].1.clone());
        }
        let (t0, x0) = &s[k - 1];
        let (t1, x1) = &s[k];
        let w = (t - t0) / (t1 - t0);
        Some(x0.iter().zip(x1).map(|(a, b)| a + w * (b - a)).collect())
    }

    fn breakpoints_in(&self, lo: f64, hi: f64) -> &[f64] {
        let a = self.breakpoints.partition_point(|t| *t < lo);
        let b = self.breakpoints.partition_point(|t| *t <= hi);
        &self.breakpoints[a..b]
    }
}

enum Kind<'f> {
    True,
    Pred(&'f Predicate),
    Not,
    And,
    Or,
    Always(Interval),
    Eventually(Interval),
    Until(Interval),
}

struct Node<'f> {
    kind: Kind<'f>,
    children: Vec<usize>,
    formula: &'f Formula,
}

#[derive(Default, Clone, Copy)]
struct HStats {
    min: f64,
    max: f64,
    worst_time: f64,
    seen: bool,
}

struct Monitor<'a> {
    nodes: Vec<Node<'a>>,
    trace: &'a Trace,
    delta: f64,
    memo: HashMap<(usize, u64), f64>,
    stats: Vec<HStats>,
}

impl<'a> Monitor<'a> {
    fn new(f: &'a Formula, trace: &'a Trace, delta: f64) -> Monitor<'a> {
        let mut m = Monitor {
            nodes: Vec::new(),
            trace,
            delta,
            memo: HashMap::new(),
            stats: Vec::new(),
        };
        m.flatten(f);
        m.stats = vec![HStats::default(); m.nodes.len()];
        m
    }

    fn flatten(&mut self, f: &'a Formula) -> usize {
        let kind = match f {
            Formula::True => Kind::True,
            Formula::Pred(p) => Kind::Pred(p),
            Formula::Not(_) => Kind::Not,
            Formula::And(_) => Kind::And,
            Formula::Or(_) => Kind::Or,
            Formula::Always(i, _) => Kind::Always(*i),
            Formula::Eventually(i, _) => Kind::Eventually(*i),
            Formula::Until(i, _, _) => Kind::Until(*i),
        };
        let id = self.nodes.len();
        self.nodes.push(Node {
            kind,
            children: Vec::new(),
            formula: f,
        });
        let children: Vec<usize> = f.children().into_iter().map(|c| self.flatten(c)).collect();
        self.nodes[id].children = children;
        id
    }

    fn points(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut pts = Vec::new();
        let mut k = 0usize;
        loop {
            let t = lo + k as f64 * self.delta;
            if t > hi {
                break;
            }
            pts.push(t);
            k += 1;
        }
        pts.push(hi);
        pts.extend_from_slice(self.trace.breakpoints_in(lo, hi));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    fn pred(&mut self, id: usize, p: &Predicate, t: f64) -> Result<f64, EvalError> {
        let owned: Vec<(RobotId, Vec<f64>)> = p
            .owners()
            .iter()
            .map(|r| self.trace.state(*r, t).map(|x| (*r, x)).ok_or(EvalError::MissingState(*r)))
            .collect::<Result<_, _>>()?;
        let view: Vec<(RobotId, &[f64])> = owned.iter().map(|(r, x)| (*r, x.as_slice())).collect();
        let h = p.eval_h(view.as_slice(), t)?;
        let s = &mut self.stats[id];
        if !s.seen {
            *s = HStats {
                min: h,
                max: h,
                worst_time: t,
                seen: true,
            };
        } else {
            s.min = s.min.min(h);
            if h > s.max {
                s.max = h;
                s.worst_time = t;
            }
        }
        Ok(-h)
    }

    fn rho(&mut self, id: usize, t: f64) -> Result<f64, EvalError> {
        if let Some(v) = self.memo.get(&(id, t.to_bits())) {
            return Ok(*v);
        }
        let children = self.nodes[id].children.clone();
        let v = match self.nodes[id].kind {
            Kind::True => f64::INFINITY,
            Kind::Pred(p) => self.pred(id, p, t)?,
            Kind::Not => -self.rho(children[0], t)?,
            Kind::And => {
                let mut v = f64::INFINITY;
                for c in children {
                    v = v.min(self.rho(c, t)?);
                }
                v
            }
            Kind::Or => {
                let mut v = f64::NEG_INFINITY;
                for c in children {
                    v = v.max(self.rho(c, t)?);
                }
                v
            }
            Kind::Always(i) => self.extremum(children[0], t + i.a(), t + i.b(), false)?.0,
            Kind::Eventually(i) => self.extremum(children[0], t + i.a(), t + i.b(), true)?.0,
            Kind::Until(i) => self.until(children[0], children[1], t, i)?.0,
        };
        self.memo.insert((id, t.to_bits()), v);
        Ok(v)
    }

    /// Min (or max) over the window, with the first time attaining it.
    fn extremum(&mut self, child: usize, lo: f64, hi: f64, max: bool) -> Result<(f64, f64), EvalError> {
        let mut best = (if max { f64::NEG_INFINITY } else { f64::INFINITY }, lo);
        for s in self.points(lo, hi) {
            let v = self.rho(child, s)?;
            if (max && v > best.0) || (!max && v < best.0) {
                best = (v, s);
            }
        }
        Ok(best)
    }

    /// `sup_{t1 in [t+a,t+b]} min(rho2(t1), inf_{t2 in [t,t1]} rho1(t2))`,
    /// with the maximizing `t1`.
    fn until(&mut self, left: usize, right: usize, t: f64, i: Interval) -> Result<(f64, f64), EvalError> {
        let mut pts = self.points(t, t + i.b());
        pts.extend(self.points(t + i.a(), t + i.b()));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let mut running = f64::INFINITY;
        let mut best = (f64::NEG_INFINITY, t + i.a());
        for s in pts {
            running = running.min(self.rho(left, s)?);
            if s >= t + i.a() {
                let v = self.rho(right, s)?.min(running);
                if v > best.0 {
                    best = (v, s);
                }
            }
        }
        Ok(best)
    }

    /// Walk the formula along its deciding instants: each temporal operator
    /// passes its worst (G) or best (F, U) time down to its operand.
    fn principal(&mut self, id: usize, t: f64, out: &mut Vec<NodeReport>) -> Result<(), EvalError> {
        let rho = self.rho(id, t)?;
        let children = self.nodes[id].children.clone();
        let (witness, next): (Option<f64>, Vec<(usize, f64)>) = match self.nodes[id].kind {
            Kind::True | Kind::Pred(_) => (None, Vec::new()),
            Kind::Not | Kind::And | Kind::Or => (None, children.iter().map(|c| (*c, t)).collect()),
            Kind::Always(i) => {
                let w = self.extremum(children[0], t + i.a(), t + i.b(), false)?.1;
                (Some(w), vec![(children[0], w)])
            }
            Kind::Eventually(i) => {
                let w = self.extremum(children[0], t + i.a(), t + i.b(), true)?.1;
                (Some(w), vec![(children[0], w)])
            }
            Kind::Until(i) => {
                let w = self.until(children[0], children[1], t, i)?.1;
                let l = self.extremum(children[0], t, w, false)?.1;
                (Some(w), vec![(children[0], l), (children[1], w)])
            }
        };
        out.push(NodeReport {
            formula: self.nodes[id].formula.to_string(),
            time: t,
            rho: saturate(rho),
            witness,
            h: None,
        });
        for (c, s) in next {
            self.principal(c, s, out)?;
        }
        Ok(())
    }
}

/// Clamp infinities to the largest finite value.
pub fn saturate(x: f64) -> f64 {
    x.clamp(f64::MIN, f64::MAX)
}

fn check(f: &Formula, trace: &Trace, t: f64, delta: f64) -> Result<(), MonitorError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(MonitorError::Resolution(delta));
    }
    let need = t + time_horizon(f);
    let have = trace.end_time();
    if need > have + 1e-9 {
        return Err(MonitorError::TooShort { need, have });
    }
    Ok(())
}

/// Robustness of `f` at time `t`: positive means satisfied with margin.
/// `⊤` has robustness `+∞`.
pub fn robustness(f: &Formula, trace: &Trace, t: f64, delta: f64) -> Result<f64, MonitorError> {
    check(f, trace, t, delta)?;
    Ok(Monitor::new(f, trace, delta).rho(0, t)?)
}

/// Extremes of a predicate's `h` over every instant the monitor evaluated.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HExtrema {
    pub min: f64,
    pub max: f64,
    /// Where `h` was largest, i.e. the predicate was closest to (or most in)
    /// violation.
    pub worst_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeReport {
    pub formula: String,
    /// The instant this subformula was evaluated at on the deciding walk.
    pub time: f64,
    pub rho: f64,
    /// Worst time for G, best time for F and U.
    pub witness: Option<f64>,
    pub h: Option<HExtrema>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessReport {
    /// Saturated to a finite value.
    pub rho: f64,
    pub verdict: bool,
    pub delta: f64,
    /// Preorder, root first.
    pub nodes: Vec<NodeReport>,
}

impl RobustnessReport {
    /// The first node whose formula prints as `text`.
    pub fn node(&self, text: &str) -> Option<&NodeReport> {
        self.nodes.iter().find(|n| n.formula == text)
    }
}

pub fn satisfies(f: &Formula, trace: &Trace, delta: f64) -> Result<RobustnessReport, MonitorError> {
    check(f, trace, 0.0, delta)?;
    let mut m = Monitor::new(f, trace, delta);
    let rho = m.rho(0, 0.0)?;
    let mut nodes = Vec::new();
    m.principal(0, 0.0, &mut nodes)?;
    // Attach h extrema to predicate nodes in walk order.
    let mut pred_ids: Vec<usize> = Vec::new();
    collect_walk(&m, 0, &mut pred_ids);
    for (node, id) in nodes.iter_mut().zip(pred_ids) {
        let s = m.stats[id];
        if matches!(m.nodes[id].kind, Kind::Pred(_)) && s.seen {
            node.h = Some(HExtrema {
                min: s.min,
                max: s.max,
                worst_time: s.worst_time,
            });
        }
    }
    Ok(RobustnessReport {
        rho: saturate(rho),
        verdict: rho >= -TOLERANCE,
        delta,
        nodes,
    })
}

fn collect_walk(m: &Monitor, id: usize, out: &mut Vec<usize>) {
    out.push(id);
    for c in &m.nodes[id].children {
        collect_walk(m, *c, out);
    }
}

impl fmt::Display for RobustnessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rho = {}", self.rho)?;
        writeln!(f, "verdict = {}", if self.verdict { "satisfied" } else { "violated" })?;
        writeln!(f, "delta = {}", self.delta)?;
        for n in &self.nodes {
            write!(f, "  t = {:<10} rho = {:<24} {}", n.time, n.rho, n.formula)?;
            if let Some(w) = n.witness {
                write!(f, "  [at {w}]")?;
            }
            if let Some(h) = &n.h {
                write!(f, "  h in [{}, {}], worst at {}", h.min, h.max, h.worst_time)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
