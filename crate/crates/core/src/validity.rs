//! Validity domains: the time set over which a path's predicate must hold
//! given the current state of the eventually operators above it.
//!
//! Walking a path from the root, an always operator shifts the time base by
//! its lower bound (or, directly above the leaf, yields its whole window); an
//! eventually operator shifts the base by its chosen instant `T*`, or, when no
//! instant has been chosen yet, yields its sampling window. Always operators
//! nested in always operators merge into one window, as do directly nested
//! eventually operators.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::cost::PredicateId;
use crate::formula::{FormulaTree, NodeKind, Path, PathId, Tau};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VdKind {
    /// Must hold at one sampled instant of the interval.
    FSampled,
    /// Must hold throughout the interval.
    GCovered,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidityDomain {
    pub path: PathId,
    pub kind: VdKind,
    pub lo: f64,
    pub hi: f64,
    pub owner: Option<PredicateId>,
    /// The eventually node that defines an `FSampled` domain.
    pub anchor: Option<usize>,
}

impl ValidityDomain {
    pub fn contains(&self, t: f64) -> bool {
        self.lo <= t && t <= self.hi
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VdError {
    #[error("until operators have no validity domain")]
    Until,
    #[error("instant {t0} lies outside the window [{lo}, {hi}] of eventually node {node}")]
    OutsideWindow { node: usize, t0: f64, lo: f64, hi: f64 },
    #[error("eventually node {0} sits below an eventually operator without a chosen instant")]
    UnanchoredBase(usize),
    #[error("node {0} is not an eventually operator")]
    NotEventually(usize),
}

/// Bookkeeping for one eventually operator (or a chain of directly nested
/// ones, merged into a single window).
#[derive(Clone, Debug, PartialEq)]
pub struct EventuallyNode {
    /// Merged window bounds relative to the operator's time base.
    pub a: f64,
    pub b: f64,
    /// Has an always operator above it, so it must be satisfied repeatedly.
    pub recurrent: bool,
    /// Last recorded satisfaction instant, relative to the base.
    pub t_star: f64,
    /// Chosen instant, relative to the base.
    pub t_big: Option<f64>,
    pub tau: Tau,
    /// Satisfied at least once since the last reset.
    pub recorded: bool,
    /// Directly nested eventually nodes merged into this one.
    pub merged: Vec<usize>,
}

impl EventuallyNode {
    /// Current sampling window relative to the base. A recurrent operator that
    /// has been satisfied reopens right after its last satisfaction, with the
    /// width of its interval, so consecutive windows tile without gaps.
    pub fn window(&self) -> (f64, f64) {
        if self.recurrent && self.recorded {
            (self.t_star, self.t_star + (self.b - self.a))
        } else {
            (self.a, self.b)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventuallyState {
    nodes: BTreeMap<usize, EventuallyNode>,
    key_of: BTreeMap<usize, usize>,
}

impl EventuallyState {
    pub fn new(tree: &FormulaTree) -> EventuallyState {
        let mut nodes = BTreeMap::new();
        let mut key_of = BTreeMap::new();
        for id in 0..tree.len() {
            let NodeKind::Eventually(i) = tree.kind(id) else { continue };
            let parent_is_f = tree
                .node(id)
                .parent
                .is_some_and(|p| matches!(tree.kind(p), NodeKind::Eventually(_)));
            if parent_is_f {
                continue;
            }
            let (mut a, mut b) = (i.a(), i.b());
            let mut merged = Vec::new();
            let mut cur = id;
            key_of.insert(id, id);
            while let [child] = tree.node(cur).children[..] {
                let NodeKind::Eventually(j) = tree.kind(child) else { break };
                a += j.a();
                b += j.b();
                merged.push(child);
                key_of.insert(child, id);
                cur = child;
            }
            let recurrent = tree.chain(id).iter().any(|&n| matches!(tree.kind(n), NodeKind::Always(_)));
            nodes.insert(
                id,
                EventuallyNode {
                    a,
                    b,
                    recurrent,
                    t_star: 0.0,
                    t_big: None,
                    tau: Tau::Neg,
                    recorded: false,
                    merged,
                },
            );
        }
        EventuallyState { nodes, key_of }
    }

    /// The node holding the state for eventually node `node`.
    pub fn key_of(&self, node: usize) -> Option<usize> {
        self.key_of.get(&node).copied()
    }

    pub fn is_key(&self, node: usize) -> bool {
        self.nodes.contains_key(&node)
    }

    pub fn get(&self, node: usize) -> Option<&EventuallyNode> {
        self.key_of(node).and_then(|k| self.nodes.get(&k))
    }

    pub fn get_mut(&mut self, node: usize) -> Option<&mut EventuallyNode> {
        let k = self.key_of(node)?;
        self.nodes.get_mut(&k)
    }

    pub fn keys(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &EventuallyNode)> {
        self.nodes.iter().map(|(k, v)| (*k, v))
    }

    /// Absolute time corresponding to relative time 0 of eventually node
    /// `node`; `None` if an eventually ancestor has no chosen instant.
    pub fn base_of(&self, tree: &FormulaTree, node: usize) -> Result<f64, VdError> {
        let key = self.key_of(node).ok_or(VdError::NotEventually(node))?;
        let mut base = 0.0;
        for &n in tree.chain(key).iter().take_while(|&&n| n != key) {
            match tree.kind(n) {
                NodeKind::Always(i) => base += i.a(),
                NodeKind::Eventually(_) if self.is_key(n) => match self.nodes[&n].t_big {
                    Some(t) => base += t,
                    None => return Err(VdError::UnanchoredBase(key)),
                },
                NodeKind::Until(_) => return Err(VdError::Until),
                _ => {}
            }
        }
        Ok(base)
    }
}

/// Satisfaction of an eventually operator at absolute time `t0`: sets
/// `T* := t*:= t0` (relative to the operator's base) and `tau := +1`.
pub fn record_eventually(tree: &FormulaTree, ev: &mut EventuallyState, node: usize, t0: f64) -> Result<(), VdError> {
    let rel = window_check(tree, ev, node, t0)?;
    let st = ev.get_mut(node).expect("checked");
    st.t_big = Some(rel);
    st.t_star = rel;
    st.tau = Tau::Pos;
    st.recorded = true;
    Ok(())
}

/// Fix the instant `T*` of an eventually operator whose subformula still has
/// to be certified over time; `tau` stays unchanged.
pub fn commit_eventually(tree: &FormulaTree, ev: &mut EventuallyState, node: usize, t0: f64) -> Result<(), VdError> {
    let rel = window_check(tree, ev, node, t0)?;
    ev.get_mut(node).expect("checked").t_big = Some(rel);
    Ok(())
}

fn window_check(tree: &FormulaTree, ev: &EventuallyState, node: usize, t0: f64) -> Result<f64, VdError> {
    let base = ev.base_of(tree, node)?;
    let st = ev.get(node).ok_or(VdError::NotEventually(node))?;
    let (lo, hi) = st.window();
    let rel = t0 - base;
    if rel < lo || rel > hi {
        return Err(VdError::OutsideWindow {
            node,
            t0,
            lo: base + lo,
            hi: base + hi,
        });
    }
    Ok(rel)
}

/// Forget every eventually instant, as when the sample budget runs out.
pub fn reset_eventually_all(ev: &mut EventuallyState) {
    for st in ev.nodes.values_mut() {
        st.t_star = 0.0;
        st.t_big = None;
        st.tau = Tau::Neg;
        st.recorded = false;
    }
}

#[derive(Clone, Copy, Debug)]
enum Merged {
    Always { a: f64, b: f64 },
    Eventually { key: usize },
}

fn merged_ops(path: &Path, tree: &FormulaTree, ev: &EventuallyState) -> Result<Vec<Merged>, VdError> {
    let mut ops: Vec<Merged> = Vec::new();
    // An always operator may absorb the next one unless a disjunction
    // intervenes.
    let mut can_merge_g = false;
    for &n in &path.nodes[..path.nodes.len() - 1] {
        match tree.kind(n) {
            NodeKind::Always(i) => {
                if let (true, Some(Merged::Always { a, b })) = (can_merge_g, ops.last_mut()) {
                    *a += i.a();
                    *b += i.b();
                } else {
                    ops.push(Merged::Always { a: i.a(), b: i.b() });
                }
                can_merge_g = true;
            }
            NodeKind::Eventually(_) => {
                if ev.is_key(n) {
                    ops.push(Merged::Eventually { key: n });
                }
                can_merge_g = false;
            }
            NodeKind::Until(_) => return Err(VdError::Until),
            NodeKind::Or => can_merge_g = false,
            NodeKind::And | NodeKind::Not => {}
            NodeKind::True | NodeKind::Pred(_) => unreachable!("leaf inside a path"),
        }
    }
    Ok(ops)
}

/// Number of temporal operators on the path after merging.
pub fn merged_depth(path: &Path, tree: &FormulaTree, ev: &EventuallyState) -> Result<usize, VdError> {
    merged_ops(path, tree, ev).map(|o| o.len())
}

pub fn compute_vd(path: &Path, tree: &FormulaTree, ev: &EventuallyState, horizon: f64) -> Result<ValidityDomain, VdError> {
    let ops = merged_ops(path, tree, ev)?;
    let owner = path.leaf.as_ref().map(|p| p.id());
    let vd = |kind, lo, hi, anchor| ValidityDomain {
        path: path.id.clone(),
        kind,
        lo,
        hi,
        owner,
        anchor,
    };
    if ops.is_empty() {
        return Ok(vd(VdKind::GCovered, 0.0, horizon, None));
    }
    let mut base = 0.0;
    for (k, op) in ops.iter().enumerate() {
        let last = k + 1 == ops.len();
        match *op {
            Merged::Always { a, b } => {
                if last {
                    return Ok(vd(VdKind::GCovered, base + a, base + b, None));
                }
                base += a;
            }
            Merged::Eventually { key } => {
                let st = &ev.nodes[&key];
                match st.t_big {
                    Some(t) => {
                        base += t;
                        if last {
                            return Ok(vd(VdKind::FSampled, base, base, Some(key)));
                        }
                    }
                    None => {
                        let (lo, hi) = st.window();
                        return Ok(vd(VdKind::FSampled, base + lo, base + hi, Some(key)));
                    }
                }
            }
        }
    }
    unreachable!("the last operator always returns")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{parse, time_horizon};

    fn setup(s: &str) -> (FormulaTree, Vec<Path>, EventuallyState, f64) {
        let f = parse(s).unwrap();
        let tree = FormulaTree::new(&f);
        let paths = tree.paths();
        let ev = EventuallyState::new(&tree);
        (tree, paths, ev, time_horizon(&f))
    }

    fn interval(v: &ValidityDomain) -> (f64, f64, VdKind) {
        (v.lo, v.hi, v.kind)
    }

    #[test]
    fn always_window() {
        let (tree, paths, ev, th) = setup("G[5,10](x1 <= 0)");
        assert_eq!(
            interval(&compute_vd(&paths[0], &tree, &ev, th).unwrap()),
            (5.0, 10.0, VdKind::GCovered)
        );
    }

    #[test]
    fn stability_after_commit() {
        let (tree, paths, mut ev, th) = setup("F[5,10]G[0,2](x1 <= 0)");
        let before = compute_vd(&paths[0], &tree, &ev, th).unwrap();
        assert_eq!(interval(&before), (5.0, 10.0, VdKind::FSampled));
        assert_eq!(before.anchor, Some(0));
        commit_eventually(&tree, &mut ev, 0, 7.0).unwrap();
        assert_eq!(
            interval(&compute_vd(&paths[0], &tree, &ev, th).unwrap()),
            (7.0, 9.0, VdKind::GCovered)
        );
    }

    #[test]
    fn recurring_point() {
        let (tree, paths, mut ev, th) = setup("G[2,10]F[0,5](x1 <= 0)");
        assert_eq!(
            interval(&compute_vd(&paths[0], &tree, &ev, th).unwrap()),
            (2.0, 7.0, VdKind::FSampled)
        );
        record_eventually(&tree, &mut ev, 1, 3.0).unwrap();
        assert_eq!(ev.get(1).unwrap().t_big, Some(1.0));
        assert_eq!(
            interval(&compute_vd(&paths[0], &tree, &ev, th).unwrap()),
            (3.0, 3.0, VdKind::FSampled)
        );
        // Reopened after satisfaction: the next window starts at the last
        // instant and is as wide as the interval.
        ev.get_mut(1).unwrap().t_big = None;
        assert_eq!(
            interval(&compute_vd(&paths[0], &tree, &ev, th).unwrap()),
            (3.0, 8.0, VdKind::FSampled)
        );
    }

    #[test]
    fn nested_always_merges() {
        let (tree, paths, ev, th) = setup("G[1,10]G[0,2](x1 <= 0)");
        assert_eq!(
            interval(&compute_vd(&paths[0], &tree, &ev, th).unwrap()),
            (1.0, 12.0, VdKind::GCovered)
        );
        let (tree, paths, ev, th) = setup("G[1,10](x2 <= 0 && G[0,2](x1 <= 0))");
        assert_eq!(
            interval(&compute_vd(&paths[0], &tree, &ev, th).unwrap()),
            (1.0, 10.0, VdKind::GCovered)
        );
        assert_eq!(
            interval(&compute_vd(&paths[1], &tree, &ev, th).unwrap()),
            (1.0, 12.0, VdKind::GCovered)
        );
    }

    #[test]
    fn nested_eventually_merges() {
        let (tree, paths, ev, th) = setup("F[1,2]F[3,4](x1 <= 0)");
        let v = compute_vd(&paths[0], &tree, &ev, th).unwrap();
        assert_eq!(interval(&v), (4.0, 6.0, VdKind::FSampled));
        assert_eq!(ev.key_of(1), Some(0));
    }

    #[test]
    fn predicate_only_path_spans_horizon() {
        let (tree, paths, ev, th) = setup("x1 >= 8 && G[10,30](x2 <= 2)");
        assert_eq!(
            interval(&compute_vd(&paths[0], &tree, &ev, th).unwrap()),
            (0.0, 30.0, VdKind::GCovered)
        );
    }

    #[test]
    fn record_rules() {
        let (tree, _, mut ev, _) = setup("F[5,10](x1 <= 0)");
        record_eventually(&tree, &mut ev, 0, 7.0).unwrap();
        assert_eq!(ev.get(0).unwrap().t_star, 7.0);
        record_eventually(&tree, &mut ev, 0, 8.0).unwrap();
        assert_eq!(ev.get(0).unwrap().t_star, 8.0);
        let (tree, _, mut ev, _) = setup("F[5,10](x1 <= 0)");
        let before = ev.clone();
        assert!(matches!(
            record_eventually(&tree, &mut ev, 0, 12.0),
            Err(VdError::OutsideWindow { .. })
        ));
        assert_eq!(ev, before);
    }

    #[test]
    fn reset() {
        let (tree, _, mut ev, _) = setup("F[5,10](x1 <= 0) && G[0,1](x1 <= 1)");
        let fresh = ev.clone();
        record_eventually(&tree, &mut ev, 1, 7.0).unwrap();
        reset_eventually_all(&mut ev);
        assert_eq!(ev, fresh);
        reset_eventually_all(&mut ev);
        assert_eq!(ev, fresh);
    }

    #[test]
    fn until_rejected() {
        let (tree, paths, ev, th) = setup("(x1 <= 0) U[0,1] (x2 <= 0)");
        assert_eq!(compute_vd(&paths[0], &tree, &ev, th), Err(VdError::Until));
    }
}
