//! The product seen through a fixed collective lasso and a fixed binding set:
//! nodes pair a model state with the index of the next lasso edge. A robot
//! idles on automaton self-loops at its current state and progresses only
//! along the lasso edge of its layer.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::agent::ModelState;
use crate::binding::BindingSet;
use crate::omega::Lasso;

use super::{ProductAutomaton, ProductState, ProgressSlice};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LayerNode {
    pub s: ModelState,
    pub layer: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerMove {
    pub to: LayerNode,
    pub weight: f64,
    pub buchi_edge: usize,
    /// Lasso layer taken, for progress moves.
    pub progress: Option<usize>,
    /// Progress from the last layer back to the cycle start.
    pub wraps: bool,
}

pub struct LayeredView<'a> {
    pub g: &'a ProductAutomaton,
    pub beta: &'a Lasso,
    pub r: &'a BindingSet,
}

impl<'a> LayeredView<'a> {
    pub fn new(g: &'a ProductAutomaton, beta: &'a Lasso, r: &'a BindingSet) -> Self {
        LayeredView { g, beta, r }
    }

    /// Automaton state at `layer`; the virtual end layer is the cycle start.
    pub fn z_of(&self, layer: usize) -> usize {
        let k = if layer >= self.beta.len() { self.beta.cycle_start() } else { layer };
        self.g.buchi().edge(self.beta.edge(k)).from
    }

    pub fn product_state(&self, n: &LayerNode) -> ProductState {
        ProductState {
            s: n.s.clone(),
            z: self.z_of(n.layer),
        }
    }

    /// Moves out of `n`. With `end_layer`, a wrapping progress lands on the
    /// virtual layer `beta.len()` instead of the cycle start.
    pub fn moves(&self, n: &LayerNode, end_layer: bool) -> Vec<LayerMove> {
        let k = n.layer;
        let z = self.z_of(k);
        let q = ProductState { s: n.s.clone(), z };
        let b = self.g.buchi();
        let beta_edge = self.beta.edge(k);
        let mut out = Vec::new();
        for (q2, pe) in self.g.out_edges(&q) {
            for (&e, rs) in &pe.witnesses {
                if !rs.contains(self.r) {
                    continue;
                }
                if b.is_self_loop(e) && b.edge(e).from == z {
                    out.push(LayerMove {
                        to: LayerNode {
                            s: q2.s.clone(),
                            layer: k,
                        },
                        weight: pe.weight,
                        buchi_edge: e,
                        progress: None,
                        wraps: false,
                    });
                }
                if e == beta_edge {
                    let wraps = self.beta.is_last(k);
                    let layer = if wraps && end_layer {
                        self.beta.len()
                    } else {
                        self.beta.next_layer(k)
                    };
                    out.push(LayerMove {
                        to: LayerNode {
                            s: q2.s.clone(),
                            layer,
                        },
                        weight: pe.weight,
                        buchi_edge: e,
                        progress: Some(k),
                        wraps,
                    });
                }
            }
        }
        out
    }
}

/// Whether a robot holding `r` can follow the rest of the lasso from `start`
/// forever: some wrapping move lies on a cycle of the reachable layered graph.
fn can_follow_forever(view: &LayeredView, start: &LayerNode) -> bool {
    let mut ids: HashMap<LayerNode, usize> = HashMap::new();
    let mut nodes = vec![start.clone()];
    ids.insert(start.clone(), 0);
    let mut adj: Vec<Vec<usize>> = Vec::new();
    let mut wraps: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < nodes.len() {
        let mut succ = Vec::new();
        for m in view.moves(&nodes[i], false) {
            let next = ids.len();
            let j = *ids.entry(m.to.clone()).or_insert_with(|| {
                nodes.push(m.to.clone());
                next
            });
            succ.push(j);
            if m.wraps {
                wraps.push((i, j));
            }
        }
        adj.push(succ);
        i += 1;
    }
    if wraps.is_empty() {
        return false;
    }
    let comp = strongly_connected(&adj);
    wraps.iter().any(|&(u, v)| comp[u] == comp[v])
}

/// Component index per node (iterative Kosaraju).
fn strongly_connected(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut stack = vec![(root, 0usize)];
        while let Some((v, i)) = stack.pop() {
            if i < adj[v].len() {
                stack.push((v, i + 1));
                let w = adj[v][i];
                if !seen[w] {
                    seen[w] = true;
                    stack.push((w, 0));
                }
            } else {
                order.push(v);
            }
        }
    }
    let mut radj = vec![Vec::new(); n];
    for (v, succ) in adj.iter().enumerate() {
        for &w in succ {
            radj[w].push(v);
        }
    }
    let mut comp = vec![usize::MAX; n];
    let mut c = 0;
    for &root in order.iter().rev() {
        if comp[root] != usize::MAX {
            continue;
        }
        comp[root] = c;
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            for &w in &radj[v] {
                if comp[w] == usize::MAX {
                    comp[w] = c;
                    stack.push(w);
                }
            }
        }
        c += 1;
    }
    comp
}

/// Every binding set the robot can hold, unchanged, while following the
/// rest of the lasso from its slice.
pub fn feasible_bindings(g: &ProductAutomaton, slice: &ProgressSlice, beta: &Lasso) -> Vec<BindingSet> {
    let start = LayerNode {
        s: slice.state.s.clone(),
        layer: slice.layer,
    };
    g.context()
        .candidates()
        .iter()
        .filter(|r| can_follow_forever(&LayeredView::new(g, beta, r), &start))
        .cloned()
        .collect()
}

/// Bindings of `r_m` that no feasible set contains.
pub fn failed_bindings(feasible: &[BindingSet], r_m: &BindingSet) -> BindingSet {
    r_m.iter()
        .filter(|&rho| !feasible.iter().any(|r| r.contains(rho)))
        .collect()
}
