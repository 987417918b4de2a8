//! Flattened parse tree, root-to-leaf paths and the satisfaction-variable tree.

use std::fmt;

use super::{Formula, Interval};
use crate::cost::Predicate;

#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    True,
    Pred(Predicate),
    Not,
    And,
    Or,
    Always(Interval),
    Eventually(Interval),
    Until(Interval),
}

impl NodeKind {
    pub fn is_leaf(&self) -> bool {
        matches!(self, NodeKind::True | NodeKind::Pred(_))
    }

    pub fn is_temporal(&self) -> bool {
        matches!(self, NodeKind::Always(_) | NodeKind::Eventually(_) | NodeKind::Until(_))
    }
}

#[derive(Clone, Debug)]
pub struct TreeNode {
    pub kind: NodeKind,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Child indices from the root down to this node.
    pub address: Vec<usize>,
}

/// A formula flattened into preorder; node 0 is the root.
#[derive(Clone, Debug)]
pub struct FormulaTree {
    nodes: Vec<TreeNode>,
}

impl FormulaTree {
    pub fn new(f: &Formula) -> FormulaTree {
        let mut nodes = Vec::new();
        fn push(f: &Formula, parent: Option<usize>, address: Vec<usize>, nodes: &mut Vec<TreeNode>) -> usize {
            let kind = match f {
                Formula::True => NodeKind::True,
                Formula::Pred(p) => NodeKind::Pred(p.clone()),
                Formula::Not(_) => NodeKind::Not,
                Formula::And(_) => NodeKind::And,
                Formula::Or(_) => NodeKind::Or,
                Formula::Always(i, _) => NodeKind::Always(*i),
                Formula::Eventually(i, _) => NodeKind::Eventually(*i),
                Formula::Until(i, ..) => NodeKind::Until(*i),
            };
            let id = nodes.len();
            nodes.push(TreeNode {
                kind,
                parent,
                children: Vec::new(),
                address: address.clone(),
            });
            for (k, c) in f.children().into_iter().enumerate() {
                let mut a = address.clone();
                a.push(k);
                let child = push(c, Some(id), a, nodes);
                nodes[id].children.push(child);
            }
            id
        }
        push(f, None, Vec::new(), &mut nodes);
        FormulaTree { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn kind(&self, id: usize) -> &NodeKind {
        &self.nodes[id].kind
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].kind.is_leaf())
    }

    /// Node indices from the root to `id`, inclusive.
    pub fn chain(&self, id: usize) -> Vec<usize> {
        let mut out = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            out.push(p);
            cur = p;
        }
        out.reverse();
        out
    }

    pub fn is_ancestor(&self, anc: usize, mut node: usize) -> bool {
        while let Some(p) = self.nodes[node].parent {
            if p == anc {
                return true;
            }
            node = p;
        }
        false
    }

    /// Paths in left-to-right leaf order.
    pub fn paths(&self) -> Vec<Path> {
        self.leaves().map(|leaf| Path::new(self, leaf)).collect()
    }
}

/// Child indices from the root node to one leaf.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathId(pub Vec<usize>);

impl fmt::Display for PathId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "/")?;
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, "/")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ChainOp {
    Not,
    And,
    Or,
    Always(Interval),
    Eventually(Interval),
    /// Until, with `false` for the left operand and `true` for the right.
    Until(Interval, bool),
}

/// One root-to-leaf path.
#[derive(Clone, Debug)]
pub struct Path {
    pub id: PathId,
    /// Tree node indices, root first, leaf last.
    pub nodes: Vec<usize>,
    pub ops: Vec<ChainOp>,
    /// The leaf predicate; `None` for a `true` leaf.
    pub leaf: Option<Predicate>,
    /// Two temporal operators of the same kind are nested along the path.
    pub nested_same: bool,
}

impl Path {
    fn new(tree: &FormulaTree, leaf: usize) -> Path {
        let nodes = tree.chain(leaf);
        let mut ops = Vec::new();
        for w in nodes.windows(2) {
            let (n, child) = (w[0], w[1]);
            ops.push(match &tree.kind(n) {
                NodeKind::Not => ChainOp::Not,
                NodeKind::And => ChainOp::And,
                NodeKind::Or => ChainOp::Or,
                NodeKind::Always(i) => ChainOp::Always(*i),
                NodeKind::Eventually(i) => ChainOp::Eventually(*i),
                NodeKind::Until(i) => ChainOp::Until(*i, tree.node(n).children[1] == child),
                NodeKind::True | NodeKind::Pred(_) => unreachable!("leaves have no children"),
            });
        }
        let temporal: Vec<u8> = ops
            .iter()
            .filter_map(|o| match o {
                ChainOp::Always(_) => Some(0),
                ChainOp::Eventually(_) => Some(1),
                ChainOp::Until(..) => Some(2),
                _ => None,
            })
            .collect();
        let nested_same = temporal.windows(2).any(|w| w[0] == w[1] && w[0] != 2);
        let leaf_pred = match tree.kind(leaf) {
            NodeKind::Pred(p) => Some(p.clone()),
            _ => None,
        };
        Path {
            id: PathId(tree.node(leaf).address.clone()),
            nodes,
            ops,
            leaf: leaf_pred,
            nested_same,
        }
    }

    pub fn leaf_node(&self) -> usize {
        *self.nodes.last().unwrap()
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for op in &self.ops {
            match op {
                ChainOp::Always(i) => write!(f, "G{i} ")?,
                ChainOp::Eventually(i) => write!(f, "F{i} ")?,
                ChainOp::Until(i, _) => write!(f, "U{i} ")?,
                ChainOp::Not => write!(f, "! ")?,
                ChainOp::And | ChainOp::Or => {}
            }
        }
        match &self.leaf {
            Some(p) => write!(f, "({p})"),
            None => write!(f, "true"),
        }
    }
}

pub fn enumerate_paths(f: &Formula) -> Vec<(PathId, Path)> {
    FormulaTree::new(f).paths().into_iter().map(|p| (p.id.clone(), p)).collect()
}

/// Satisfaction variable: `+1` once the subtree is certified.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tau {
    Neg,
    Pos,
}

impl Tau {
    pub fn from_bool(b: bool) -> Tau {
        if b {
            Tau::Pos
        } else {
            Tau::Neg
        }
    }

    pub fn is_pos(self) -> bool {
        self == Tau::Pos
    }

    pub fn value(self) -> i8 {
        match self {
            Tau::Pos => 1,
            Tau::Neg => -1,
        }
    }
}

/// Same shape as the parse tree; one `tau` per node (leaves included).
#[derive(Clone, Debug)]
pub struct SatisfactionTree {
    tree: FormulaTree,
    tau: Vec<Tau>,
}

impl SatisfactionTree {
    pub fn new(f: &Formula) -> SatisfactionTree {
        SatisfactionTree::from_tree(FormulaTree::new(f))
    }

    pub fn from_tree(tree: FormulaTree) -> SatisfactionTree {
        let tau = vec![Tau::Neg; tree.len()];
        SatisfactionTree { tree, tau }
    }

    pub fn tree(&self) -> &FormulaTree {
        &self.tree
    }

    pub fn tau(&self, node: usize) -> Tau {
        self.tau[node]
    }

    pub fn set_tau(&mut self, node: usize, tau: Tau) {
        self.tau[node] = tau;
    }

    pub fn root(&self) -> Tau {
        self.tau[0]
    }

    /// Number of non-leaf (set) nodes.
    pub fn set_nodes(&self) -> usize {
        self.tree.nodes().iter().filter(|n| !n.kind.is_leaf()).count()
    }

    pub fn predicate_leaves(&self) -> Vec<&Predicate> {
        self.tree
            .nodes()
            .iter()
            .filter_map(|n| match &n.kind {
                NodeKind::Pred(p) => Some(p),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse;

    const EXAMPLE: &str = "F[0,10](x1 <= 0 || G[0,2](x2 <= 0)) && G[0,20]F[0,5](x3 <= 0) && G[0,30](x4 <= 0)";

    #[test]
    fn example_paths() {
        let f = parse(EXAMPLE).unwrap();
        let paths = enumerate_paths(&f);
        let shown: Vec<String> = paths.iter().map(|(_, p)| p.to_string()).collect();
        assert_eq!(
            shown,
            [
                "F[0,10] (x1 <= 0)",
                "F[0,10] G[0,2] (x2 <= 0)",
                "G[0,20] F[0,5] (x3 <= 0)",
                "G[0,30] (x4 <= 0)"
            ]
        );
        assert_eq!(paths[1].0, PathId(vec![0, 0, 1, 0]));
        assert!(paths.iter().all(|(_, p)| !p.nested_same));
    }

    #[test]
    fn example_satisfaction_tree() {
        let s = SatisfactionTree::new(&parse(EXAMPLE).unwrap());
        // tau_1..tau_7 and pi_1..pi_4
        assert_eq!(s.set_nodes(), 7);
        assert_eq!(s.predicate_leaves().len(), 4);
        assert!((0..s.tree().len()).all(|n| s.tau(n) == Tau::Neg));
    }

    #[test]
    fn small_trees() {
        let s = SatisfactionTree::new(&parse("x1 <= 0").unwrap());
        assert_eq!((s.set_nodes(), s.tree().len()), (0, 1));
        let s = SatisfactionTree::new(&parse("x1 <= 0 && x2 <= 0").unwrap());
        assert_eq!(s.set_nodes(), 1);
        assert_eq!(s.root(), Tau::Neg);
        assert_eq!(enumerate_paths(&parse("x1 <= 0 && x2 <= 0").unwrap()).len(), 2);
        assert_eq!(enumerate_paths(&parse("x1 <= 0").unwrap())[0].0, PathId(vec![]));
    }

    #[test]
    fn nested_same_flag() {
        let f = parse("G[1,10]G[0,2](x1 <= 0) && F[0,1](x1 <= 0 && F[0,1](x2 <= 0))").unwrap();
        let flags: Vec<bool> = enumerate_paths(&f).iter().map(|(_, p)| p.nested_same).collect();
        assert_eq!(flags, [true, false, true]);
    }
}
