//! Satisfaction bookkeeping for one disjunction-free branch.
//!
//! Every agent keeps an identical replica: it is updated only from the
//! merged per-path outcomes that all agents receive, so the replicas never
//! diverge.

use crate::expr::RobotId;
use crate::formula::{FormulaTree, NodeKind, Path, Tau};
use crate::planner::{EventuallyReport, PathReport, PlanError, SatisfactionReport};
use crate::validity::{
    commit_eventually, compute_vd, merged_depth, record_eventually, reset_eventually_all, EventuallyState, ValidityDomain, VdKind,
};

/// What the reporting robot observed for one path at the sampled instant.
#[derive(Clone, Debug, PartialEq)]
pub struct PathOutcome {
    pub path: usize,
    /// The predicate at the sampled instant, when the instant lies in the
    /// path's domain.
    pub leaf: Option<bool>,
    /// The predicate over the whole always-domain.
    pub cover: Option<bool>,
}

#[derive(Clone, Debug)]
pub struct Book {
    tree: FormulaTree,
    paths: Vec<Path>,
    reporters: Vec<RobotId>,
    ev: EventuallyState,
    tau: Vec<Tau>,
    g_ok: Vec<bool>,
    horizon: f64,
    /// Per eventually key: a temporal operator sits below its merged chain.
    temporal_below: Vec<bool>,
}

impl Book {
    pub fn new(tree: FormulaTree, horizon: f64, first_robot: RobotId) -> Result<Book, PlanError> {
        let paths = tree.paths();
        let ev = EventuallyState::new(&tree);
        for n in tree.nodes() {
            match n.kind {
                NodeKind::Until(_) => return Err(PlanError::Unsupported("until operators are not planned".into())),
                NodeKind::Or => return Err(PlanError::Unsupported("branch still contains a disjunction".into())),
                NodeKind::Not => return Err(PlanError::Unsupported("branch is not in positive normal form".into())),
                _ => {}
            }
        }
        for p in &paths {
            let d = merged_depth(p, &tree, &ev).map_err(|e| PlanError::Unsupported(e.to_string()))?;
            if d > 2 {
                return Err(PlanError::Unsupported(format!(
                    "path {p} nests {d} temporal operators; at most 2 are planned"
                )));
            }
        }
        let temporal_below = (0..tree.len())
            .map(|n| {
                let inner: Vec<usize> = ev.get(n).map(|s| s.merged.clone()).unwrap_or_default();
                (0..tree.len()).any(|d| d != n && tree.is_ancestor(n, d) && tree.kind(d).is_temporal() && !inner.contains(&d))
            })
            .collect();
        let reporters = paths
            .iter()
            .map(|p| p.leaf.as_ref().and_then(|l| l.owners().first().copied()).unwrap_or(first_robot))
            .collect();
        let mut book = Book {
            g_ok: vec![false; paths.len()],
            tau: vec![Tau::Neg; tree.len()],
            tree,
            paths,
            reporters,
            ev,
            horizon,
            temporal_below,
        };
        book.derive();
        Ok(book)
    }

    pub fn tree(&self) -> &FormulaTree {
        &self.tree
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn reporter(&self, path: usize) -> RobotId {
        self.reporters[path]
    }

    pub fn eventually(&self) -> &EventuallyState {
        &self.ev
    }

    pub fn tau(&self, node: usize) -> Tau {
        self.tau[node]
    }

    pub fn root(&self) -> Tau {
        self.tau[0]
    }

    pub fn domains(&self) -> Vec<ValidityDomain> {
        self.paths
            .iter()
            .map(|p| compute_vd(p, &self.tree, &self.ev, self.horizon).expect("paths validated at construction"))
            .collect()
    }

    /// Apply the merged outcomes of one sampled instant.
    pub fn apply(&mut self, outcomes: &[PathOutcome], domains: &[ValidityDomain], t0: f64, group: Option<usize>) {
        let mut leaf_ok = vec![None; self.paths.len()];
        for o in outcomes {
            leaf_ok[o.path] = o.leaf;
            if domains[o.path].kind == VdKind::GCovered {
                self.g_ok[o.path] = o.leaf.unwrap_or(true) && o.cover == Some(true);
            }
        }
        if let Some(n) = group {
            let members: Vec<usize> = (0..self.paths.len())
                .filter(|&p| {
                    let d = &domains[p];
                    d.kind == VdKind::FSampled && d.anchor == Some(n) && !d.is_point() && d.contains(t0)
                })
                .collect();
            if !members.is_empty() && members.iter().all(|&p| leaf_ok[p] == Some(true)) {
                self.satisfy_eventually(n, t0);
            }
        }
        self.derive();
    }

    /// Results of re-checking every always-domain.
    pub fn apply_certification(&mut self, outcomes: &[PathOutcome]) {
        for o in outcomes {
            self.g_ok[o.path] = o.cover == Some(true);
        }
        self.derive();
    }

    /// Forget all eventually instants (end of a pass of `L` samples).
    pub fn reset_eventually(&mut self) {
        reset_eventually_all(&mut self.ev);
        let keys: Vec<usize> = self.ev.keys().collect();
        for k in keys {
            self.invalidate_below(k);
        }
        self.derive();
    }

    fn satisfy_eventually(&mut self, n: usize, t0: f64) {
        if self.temporal_below[n] {
            if commit_eventually(&self.tree, &mut self.ev, n, t0).is_ok() {
                self.invalidate_below(n);
            }
            return;
        }
        if record_eventually(&self.tree, &mut self.ev, n, t0).is_err() {
            return;
        }
        if !self.coverage_complete(n) {
            let st = self.ev.get_mut(n).expect("eventually key");
            if st.recurrent {
                // Reopen for the next occurrence.
                st.t_big = None;
            }
        }
    }

    fn invalidate_below(&mut self, n: usize) {
        for (p, path) in self.paths.iter().enumerate() {
            if path.nodes.contains(&n) {
                self.g_ok[p] = false;
            }
        }
    }

    /// A recurrent eventually operator has been satisfied often enough to
    /// serve every instant of the always-window above it.
    fn coverage_complete(&self, n: usize) -> bool {
        let Some(st) = self.ev.get(n) else { return false };
        if !st.recurrent {
            return st.recorded;
        }
        let span: f64 = self
            .tree
            .chain(n)
            .iter()
            .filter_map(|&m| match self.tree.kind(m) {
                NodeKind::Always(i) => Some(i.b() - i.a()),
                _ => None,
            })
            .sum();
        st.recorded && st.t_star >= span + st.a
    }

    fn leaf_tau(&self, path: usize, d: &ValidityDomain) -> Tau {
        Tau::from_bool(match d.kind {
            VdKind::GCovered => self.g_ok[path],
            VdKind::FSampled => d.is_point(),
        })
    }

    /// Satisfaction variable of one node from its children and the
    /// eventually state.
    pub fn satisfaction_variable(&mut self, node: usize, domains: &[ValidityDomain], leaf_path: &[Option<usize>]) -> Tau {
        let children = &self.tree.node(node).children;
        let all = |tau: &[Tau]| children.iter().all(|&c| tau[c].is_pos());
        match self.tree.kind(node) {
            NodeKind::True => Tau::Pos,
            NodeKind::Pred(_) => {
                let p = leaf_path[node].expect("every leaf has a path");
                self.leaf_tau(p, &domains[p])
            }
            NodeKind::And | NodeKind::Always(_) => Tau::from_bool(all(&self.tau)),
            NodeKind::Or => Tau::from_bool(children.iter().any(|&c| self.tau[c].is_pos())),
            NodeKind::Not | NodeKind::Until(_) => Tau::Neg,
            NodeKind::Eventually(_) => {
                if !self.ev.is_key(node) {
                    return Tau::from_bool(all(&self.tau));
                }
                let children_ok = all(&self.tau);
                let temporal_below = self.temporal_below[node];
                let complete = self.coverage_complete(node);
                let st = self.ev.get_mut(node).expect("key");
                let ok = if st.recurrent {
                    complete
                } else if st.t_big.is_none() {
                    false
                } else if !temporal_below {
                    st.recorded
                } else {
                    if children_ok {
                        st.recorded = true;
                        st.t_star = st.t_big.expect("checked");
                    }
                    children_ok
                };
                st.tau = Tau::from_bool(ok);
                st.tau
            }
        }
    }

    fn derive(&mut self) {
        let domains = self.domains();
        let mut leaf_path = vec![None; self.tree.len()];
        for (p, path) in self.paths.iter().enumerate() {
            leaf_path[path.leaf_node()] = Some(p);
        }
        // Preorder numbering puts children after parents.
        for n in (0..self.tree.len()).rev() {
            self.tau[n] = self.satisfaction_variable(n, &domains, &leaf_path);
        }
    }

    pub fn report(&self) -> SatisfactionReport {
        let domains = self.domains();
        let paths = self
            .paths
            .iter()
            .zip(&domains)
            .map(|(p, d)| PathReport {
                id: p.id.clone(),
                text: p.to_string(),
                tau: self.tau[p.leaf_node()],
                kind: d.kind,
                lo: d.lo,
                hi: d.hi,
            })
            .collect();
        let eventually = self
            .ev
            .iter()
            .map(|(n, st)| {
                let base = self.ev.base_of(&self.tree, n).ok();
                let sub = self
                    .paths
                    .iter()
                    .find(|p| p.nodes.contains(&n))
                    .map(|p| p.to_string())
                    .unwrap_or_default();
                EventuallyReport {
                    node: n,
                    text: sub,
                    instant: match (base, st.recorded) {
                        (Some(b), true) => Some(b + st.t_star),
                        _ => None,
                    },
                    tau: st.tau,
                }
            })
            .collect();
        SatisfactionReport {
            root: self.root(),
            paths,
            eventually,
        }
    }

    /// Human-readable list of paths whose satisfaction variable is still -1.
    pub fn unsatisfied(&self) -> Vec<String> {
        self.paths
            .iter()
            .filter(|p| !self.tau[p.leaf_node()].is_pos() || p.nodes.iter().any(|&n| !self.tau[n].is_pos()))
            .map(|p| p.to_string())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{parse, time_horizon};

    fn book(s: &str) -> Book {
        let f = parse(s).unwrap();
        Book::new(FormulaTree::new(&f), time_horizon(&f), RobotId(1)).unwrap()
    }

    fn leaf(path: usize, ok: bool) -> PathOutcome {
        PathOutcome {
            path,
            leaf: Some(ok),
            cover: None,
        }
    }

    #[test]
    fn eventually_records_on_leaf_success() {
        let mut b = book("F[5,10](x1 <= 0)");
        let d = b.domains();
        b.apply(&[leaf(0, true)], &d, 7.0, Some(0));
        assert_eq!(b.root(), Tau::Pos);
        assert_eq!(b.report().eventually[0].instant, Some(7.0));
    }

    #[test]
    fn eventually_needs_every_conjunct() {
        let mut b = book("F[40,60](norm(x1 - x3) <= 1 && norm(x2 - x4) <= 1)");
        let d = b.domains();
        b.apply(&[leaf(0, true), leaf(1, false)], &d, 50.0, Some(0));
        assert_eq!(b.root(), Tau::Neg);
        b.apply(&[leaf(0, true), leaf(1, true)], &d, 51.0, Some(0));
        assert_eq!(b.root(), Tau::Pos);
    }

    #[test]
    fn always_needs_cover() {
        let mut b = book("G[20,80](x1 >= 1)");
        let d = b.domains();
        let o = PathOutcome {
            path: 0,
            leaf: Some(true),
            cover: Some(false),
        };
        b.apply(&[o], &d, 30.0, None);
        assert_eq!(b.root(), Tau::Neg);
        let o = PathOutcome {
            path: 0,
            leaf: Some(true),
            cover: Some(true),
        };
        b.apply(&[o], &d, 31.0, None);
        assert_eq!(b.root(), Tau::Pos);
    }

    #[test]
    fn stability_commits_then_certifies() {
        let mut b = book("F[0,100]G[0,20](x1 >= 2 && x1 <= 3)");
        let d = b.domains();
        assert_eq!(d[0].kind, VdKind::FSampled);
        b.apply(&[leaf(0, true), leaf(1, true)], &d, 40.0, Some(0));
        assert_eq!(b.root(), Tau::Neg);
        let d = b.domains();
        assert_eq!((d[0].lo, d[0].hi, d[0].kind), (40.0, 60.0, VdKind::GCovered));
        let cover = |p| PathOutcome {
            path: p,
            leaf: Some(true),
            cover: Some(true),
        };
        b.apply(&[cover(0), cover(1)], &d, 45.0, None);
        assert_eq!(b.root(), Tau::Pos);
        assert_eq!(b.report().eventually[0].instant, Some(40.0));
    }

    #[test]
    fn recurrence_tiles_the_window() {
        let mut b = book("G[0,100]F[0,20](norm(x1 - x3) <= 1)");
        let mut t = 0.0;
        let mut steps = 0;
        while b.root() != Tau::Pos {
            let d = b.domains();
            assert_eq!(d[0].kind, VdKind::FSampled);
            assert!(d[0].hi - d[0].lo == 20.0);
            t = d[0].hi - 1.0;
            b.apply(&[leaf(0, true)], &d, t, Some(1));
            steps += 1;
        }
        assert!(t >= 100.0);
        assert_eq!(steps, 6);
        b.reset_eventually();
        assert_eq!(b.root(), Tau::Neg);
    }

    #[test]
    fn bare_predicate() {
        let mut b = book("x1 - 3 <= 0");
        let d = b.domains();
        assert_eq!((d[0].lo, d[0].hi), (0.0, 0.0));
        b.apply_certification(&[PathOutcome {
            path: 0,
            leaf: None,
            cover: Some(true),
        }]);
        assert_eq!(b.root(), Tau::Pos);
    }

    #[test]
    fn deep_nesting_rejected() {
        let f = parse("G[0,10]F[0,5]G[0,1](x1 <= 0)").unwrap();
        assert!(matches!(
            Book::new(FormulaTree::new(&f), time_horizon(&f), RobotId(1)),
            Err(PlanError::Unsupported(_))
        ));
        let f = parse("G[0,10]G[0,5]G[0,1](x1 <= 0) && F[0,1]F[0,1](x1 <= 0)").unwrap();
        assert!(Book::new(FormulaTree::new(&f), time_horizon(&f), RobotId(1)).is_ok());
    }
}
