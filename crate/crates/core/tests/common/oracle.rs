//! Direct recursion for validity domains, independent of `compute_vd`.

use maps2::formula::{FormulaTree, NodeKind};
use maps2::validity::{EventuallyState, VdKind};
use maps2::Formula;

#[derive(Debug, PartialEq)]
pub struct Vd {
    pub kind: VdKind,
    pub lo: f64,
    pub hi: f64,
}

pub struct Oracle<'a> {
    pub tree: &'a FormulaTree,
    pub ev: &'a EventuallyState,
    pub horizon: f64,
}

/// Pending always window: bounds and whether the next always may merge.
#[derive(Clone, Copy)]
struct Pending {
    a: f64,
    b: f64,
    open: bool,
}

impl Oracle<'_> {
    /// Validity domain of the path at `address` under root formula `f`.
    pub fn path_vd(&self, f: &Formula, address: &[usize]) -> Vd {
        self.vd(f, 0, address, 0.0, None, false)
    }

    fn vd(&self, f: &Formula, node: usize, address: &[usize], base: f64, pend: Option<Pending>, temporal: bool) -> Vd {
        let children = &self.tree.node(node).children;
        match f {
            Formula::True | Formula::Pred(_) => match (pend, temporal) {
                (Some(p), _) => Vd {
                    kind: VdKind::GCovered,
                    lo: base + p.a,
                    hi: base + p.b,
                },
                (None, false) => Vd {
                    kind: VdKind::GCovered,
                    lo: 0.0,
                    hi: self.horizon,
                },
                (None, true) => Vd {
                    kind: VdKind::FSampled,
                    lo: base,
                    hi: base,
                },
            },
            Formula::And(_) | Formula::Or(_) => {
                let k = address[0];
                let pend = if matches!(f, Formula::Or(_)) {
                    pend.map(|p| Pending { open: false, ..p })
                } else {
                    pend
                };
                self.vd(f.children()[k], children[k], &address[1..], base, pend, temporal)
            }
            Formula::Always(i, c) => {
                let (a, b) = (i.a(), i.b());
                let (base, pend) = match pend {
                    Some(p) if p.open => (
                        base,
                        Pending {
                            a: p.a + a,
                            b: p.b + b,
                            open: true,
                        },
                    ),
                    Some(p) => (base + p.a, Pending { a, b, open: true }),
                    None => (base, Pending { a, b, open: true }),
                };
                self.vd(c, children[0], &address[1..], base, Some(pend), true)
            }
            Formula::Eventually(i, c) => {
                let base = base + pend.map_or(0.0, |p| p.a);
                // Directly nested eventually operators form one window.
                let (mut a, mut b) = (i.a(), i.b());
                let (mut g, mut n, mut rest) = (c.as_ref(), children[0], &address[1..]);
                while let Formula::Eventually(j, cc) = g {
                    a += j.a();
                    b += j.b();
                    n = self.tree.node(n).children[0];
                    g = cc;
                    rest = &rest[1..];
                }
                let st = self.ev.get(node).expect("outermost eventually is a key");
                match st.t_big {
                    Some(tb) => self.vd(g, n, rest, base + tb, None, true),
                    None => {
                        let recurrent = self
                            .tree
                            .chain(node)
                            .iter()
                            .any(|&m| matches!(self.tree.kind(m), NodeKind::Always(_)));
                        let (lo, hi) = if recurrent && st.recorded {
                            (st.t_star, st.t_star + (b - a))
                        } else {
                            (a, b)
                        };
                        Vd {
                            kind: VdKind::FSampled,
                            lo: base + lo,
                            hi: base + hi,
                        }
                    }
                }
            }
            Formula::Not(_) | Formula::Until(..) => unreachable!("not generated"),
        }
    }
}

/// Random instants for each eventually operator, inside its window.
pub fn randomize(ev: &mut EventuallyState, picks: &[(u8, f64, f64)]) {
    let keys: Vec<usize> = ev.keys().collect();
    for (k, key) in keys.into_iter().enumerate() {
        let (mode, u, v) = picks[k % picks.len()];
        let st = ev.get_mut(key).unwrap();
        let (a, b) = (st.a, st.b);
        match mode % 3 {
            0 => {}
            1 => st.t_big = Some(a + u * (b - a)),
            _ => {
                st.recorded = true;
                st.t_star = a + v * (b - a);
                if u < 0.5 {
                    st.t_big = Some(a + u * (b - a));
                }
            }
        }
    }
}
