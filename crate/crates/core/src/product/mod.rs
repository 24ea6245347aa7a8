//! Per-robot product of a robot model with the task automaton. Every product
//! edge remembers, per automaton edge, which binding sets the robot could
//! hold while taking it.

mod layered;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentError, ExplicitModel, ModelState, Modification, RobotModel};
use crate::binding::{Binding, BindingContext, BindingSet};
use crate::omega::{BuchiAutomaton, CapabilitySets, GuardTuple, Lasso};
use crate::schema;

pub use layered::{failed_bindings, feasible_bindings, LayerMove, LayerNode, LayeredView};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProductState {
    pub s: ModelState,
    pub z: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductEdge {
    pub weight: f64,
    /// automaton edge id -> admissible binding sets
    pub witnesses: BTreeMap<usize, Vec<BindingSet>>,
}

/// Where a robot stands along the collective lasso: `layer` is the index of
/// the next lasso edge to take and `progress` counts lasso edges taken so far.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressSlice {
    pub robot: String,
    pub layer: usize,
    pub state: ProductState,
    pub progress: u64,
}

impl ProgressSlice {
    pub fn initial(robot: &str, s: ModelState, beta: &Lasso, b: &BuchiAutomaton) -> Self {
        ProgressSlice {
            robot: robot.to_string(),
            layer: 0,
            state: ProductState {
                s,
                z: b.edge(beta.edge(0)).from,
            },
            progress: 0,
        }
    }
}

/// Rebase `j` onto the lasso position of the modified robot `m` when `j` is
/// ahead of it. The physical state is kept.
pub fn slice_for(j: &ProgressSlice, m: &ProgressSlice) -> ProgressSlice {
    if j.progress > m.progress {
        ProgressSlice {
            robot: j.robot.clone(),
            layer: m.layer,
            state: ProductState {
                s: j.state.s.clone(),
                z: m.state.z,
            },
            progress: m.progress,
        }
    } else {
        j.clone()
    }
}

/// Props a guard demands of one binding.
pub fn capability_fn(sigma: &GuardTuple, rho: Binding) -> CapabilitySets {
    sigma.project(rho)
}

/// Binding sets a robot may hold while moving into a state labeled
/// `next_labels` under letter `sigma`.
pub fn binding_options(
    ctx: &BindingContext,
    sigma: &GuardTuple,
    next_labels: &BTreeSet<String>,
) -> Vec<BindingSet> {
    let ok: BindingSet = ctx
        .alphabet
        .iter()
        .filter(|&rho| {
            let c = capability_fn(sigma, rho);
            c.t.iter().chain(&c.ex_t).all(|p| next_labels.contains(p))
                && !c.f.iter().chain(&c.ex_f).any(|p| next_labels.contains(p))
        })
        .collect();
    ctx.candidates()
        .iter()
        .filter(|r| r.is_subset(&ok))
        .cloned()
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Add,
    Remove,
}

#[derive(Clone, Debug)]
pub struct ProductAutomaton {
    model: RobotModel,
    buchi: Arc<BuchiAutomaton>,
    ctx: BindingContext,
    initial: ProductState,
    states: BTreeSet<ProductState>,
    edges: BTreeMap<ProductState, BTreeMap<ProductState, ProductEdge>>,
    memo: HashMap<(BTreeSet<String>, usize), Vec<BindingSet>>,
}

impl ProductAutomaton {
    /// Product materialized by search from the model's initial state.
    pub fn build(model: RobotModel, buchi: Arc<BuchiAutomaton>, ctx: BindingContext) -> Self {
        let initial = ProductState {
            s: model.initial(),
            z: buchi.initial(),
        };
        Self::build_from(model, buchi, ctx, initial)
    }

    pub fn build_from(
        model: RobotModel,
        buchi: Arc<BuchiAutomaton>,
        ctx: BindingContext,
        initial: ProductState,
    ) -> Self {
        let unknown: BTreeSet<String> = model
            .props()
            .into_iter()
            .filter(|p| !buchi.edges().iter().any(|e| e.guard.literals().iter().any(|l| &l.prop == p)))
            .collect();
        if !unknown.is_empty() {
            log::debug!("robot {} props unused by the task: {unknown:?}", model.robot());
        }
        let mut g = ProductAutomaton {
            model,
            buchi,
            ctx,
            initial: initial.clone(),
            states: BTreeSet::new(),
            edges: BTreeMap::new(),
            memo: HashMap::new(),
        };
        g.expand_from(&initial);
        g
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn buchi(&self) -> &BuchiAutomaton {
        &self.buchi
    }

    pub fn buchi_arc(&self) -> Arc<BuchiAutomaton> {
        self.buchi.clone()
    }

    pub fn context(&self) -> &BindingContext {
        &self.ctx
    }

    pub fn initial(&self) -> &ProductState {
        &self.initial
    }

    pub fn states(&self) -> &BTreeSet<ProductState> {
        &self.states
    }

    pub fn contains(&self, q: &ProductState) -> bool {
        self.states.contains(q)
    }

    pub fn is_accepting(&self, q: &ProductState) -> bool {
        self.buchi.is_accepting(q.z)
    }

    pub fn out_edges(&self, q: &ProductState) -> impl Iterator<Item = (&ProductState, &ProductEdge)> {
        self.edges.get(q).into_iter().flat_map(|m| m.iter())
    }

    pub fn edge(&self, q: &ProductState, q2: &ProductState) -> Option<&ProductEdge> {
        self.edges.get(q).and_then(|m| m.get(q2))
    }

    pub fn num_edges(&self) -> usize {
        self.edges.values().map(|m| m.len()).sum()
    }

    pub fn labels(&self, q: &ProductState) -> BTreeSet<String> {
        self.model.labels(&q.s)
    }

    fn options(&mut self, labels: &BTreeSet<String>, e: usize) -> Vec<BindingSet> {
        if let Some(v) = self.memo.get(&(labels.clone(), e)) {
            return v.clone();
        }
        let v = binding_options(&self.ctx, &self.buchi.edge(e).guard, labels);
        self.memo.insert((labels.clone(), e), v.clone());
        v
    }

    /// Outgoing product edges of `q` over the current model, restricted to
    /// automaton edges accepted by `keep`.
    fn compute_out(
        &mut self,
        q: &ProductState,
        keep: &dyn Fn(usize) -> bool,
    ) -> BTreeMap<ProductState, ProductEdge> {
        let mut moves = self.model.successors(&q.s);
        moves.push((q.s.clone(), 0.0));
        let out_edges: Vec<usize> = self.buchi.out_edges(q.z).to_vec();
        let mut out: BTreeMap<ProductState, ProductEdge> = BTreeMap::new();
        for (s2, w) in moves {
            let labels = self.model.labels(&s2);
            for &e in &out_edges {
                if !keep(e) {
                    continue;
                }
                let opts = self.options(&labels, e);
                if opts.is_empty() {
                    continue;
                }
                let q2 = ProductState {
                    s: s2.clone(),
                    z: self.buchi.edge(e).to,
                };
                out.entry(q2)
                    .or_insert(ProductEdge {
                        weight: w,
                        witnesses: BTreeMap::new(),
                    })
                    .witnesses
                    .insert(e, opts);
            }
        }
        out
    }

    /// Materialize `q` and everything reachable from it that is missing.
    pub fn expand_from(&mut self, q: &ProductState) {
        if self.states.contains(q) {
            return;
        }
        let mut queue = VecDeque::from([q.clone()]);
        self.states.insert(q.clone());
        while let Some(p) = queue.pop_front() {
            let out = self.compute_out(&p, &|_| true);
            for q2 in out.keys() {
                if self.states.insert(q2.clone()) {
                    queue.push_back(q2.clone());
                }
            }
            self.edges.insert(p, out);
        }
    }

    /// Automaton edges an incremental update may touch: the lasso's edges
    /// and every self-loop at a lasso state.
    pub fn beta_edge_set(&self, beta: &Lasso) -> BTreeSet<usize> {
        let zs: BTreeSet<usize> = beta.edges().map(|e| self.buchi.edge(e).from).collect();
        let mut out: BTreeSet<usize> = beta.edges().collect();
        for &z in &zs {
            out.extend(self.buchi.out_edges(z).iter().copied().filter(|&e| self.buchi.is_self_loop(e)));
        }
        out
    }

    /// Incremental update with a delta model. `after` is the robot model
    /// once the modification is applied; it replaces the stored model.
    pub fn update(
        &mut self,
        delta: &ExplicitModel,
        direction: Direction,
        after: &RobotModel,
        beta: &Lasso,
        slice: &ProgressSlice,
    ) {
        let touched = self.beta_edge_set(beta);
        self.model = after.clone();
        match direction {
            Direction::Remove => {
                for (s, s2) in delta.edges.keys() {
                    let froms: Vec<ProductState> = self
                        .edges
                        .range(ProductState { s: s.clone(), z: 0 }..=ProductState { s: s.clone(), z: usize::MAX })
                        .map(|(q, _)| q.clone())
                        .collect();
                    for q in froms {
                        let out = self.edges.get_mut(&q).expect("listed above");
                        let targets: Vec<ProductState> =
                            out.keys().filter(|q2| &q2.s == s2).cloned().collect();
                        for q2 in targets {
                            let e = out.get_mut(&q2).expect("listed above");
                            e.witnesses.retain(|id, _| !touched.contains(id));
                            if e.witnesses.is_empty() {
                                out.remove(&q2);
                            }
                        }
                    }
                }
                self.expand_from(&slice.state);
                self.prune_unreachable(&slice.state);
            }
            Direction::Add => {
                let mut fresh = Vec::new();
                for ((s, s2), &w) in &delta.edges {
                    let froms: Vec<ProductState> = self
                        .states
                        .range(ProductState { s: s.clone(), z: 0 }..=ProductState { s: s.clone(), z: usize::MAX })
                        .cloned()
                        .collect();
                    for q in froms {
                        let labels = self.model.labels(s2);
                        for e in self.buchi.out_edges(q.z).to_vec() {
                            if !touched.contains(&e) {
                                continue;
                            }
                            let opts = self.options(&labels, e);
                            if opts.is_empty() {
                                continue;
                            }
                            let q2 = ProductState {
                                s: s2.clone(),
                                z: self.buchi.edge(e).to,
                            };
                            let out = self.edges.entry(q.clone()).or_default();
                            let pe = out.entry(q2.clone()).or_insert(ProductEdge {
                                weight: w,
                                witnesses: BTreeMap::new(),
                            });
                            pe.weight = w;
                            pe.witnesses.insert(e, opts);
                            if !self.states.contains(&q2) {
                                fresh.push(q2);
                            }
                        }
                    }
                }
                for q in fresh {
                    self.expand_from(&q);
                }
            }
        }
    }

    /// Fold a modification in: removals first, then additions, each through
    /// its delta model.
    pub fn fold(&mut self, m: &Modification, beta: &Lasso, slice: &ProgressSlice) -> Result<(), AgentError> {
        let removal = Modification {
            add: BTreeMap::new(),
            ..m.clone()
        };
        if removal.has_removals() {
            let d = self.model.delta_model(&removal)?;
            let after = self.model.apply(&removal)?;
            self.update(&d.removal, Direction::Remove, &after, beta, slice);
        }
        let addition = Modification {
            remove: BTreeMap::new(),
            ..m.clone()
        };
        if addition.has_additions() {
            let d = self.model.delta_model(&addition)?;
            let after = self.model.apply(&addition)?;
            self.update(&d.addition, Direction::Add, &after, beta, slice);
        }
        Ok(())
    }

    fn prune_unreachable(&mut self, from: &ProductState) {
        let mut seen = BTreeSet::from([from.clone()]);
        let mut queue = VecDeque::from([from.clone()]);
        while let Some(q) = queue.pop_front() {
            for (q2, _) in self.out_edges(&q) {
                if seen.insert(q2.clone()) {
                    queue.push_back(q2.clone());
                }
            }
        }
        self.states.retain(|q| seen.contains(q));
        self.edges.retain(|q, _| seen.contains(q));
    }

    /// The subgraph reachable from `from` through edges carrying a witness
    /// in `ids`, with witness maps restricted to `ids`.
    pub fn restricted(
        &self,
        from: &ProductState,
        ids: &BTreeSet<usize>,
    ) -> BTreeMap<(ProductState, ProductState), ProductEdge> {
        let mut out = BTreeMap::new();
        let mut seen = BTreeSet::from([from.clone()]);
        let mut queue = VecDeque::from([from.clone()]);
        while let Some(q) = queue.pop_front() {
            for (q2, e) in self.out_edges(&q) {
                let witnesses: BTreeMap<usize, Vec<BindingSet>> = e
                    .witnesses
                    .iter()
                    .filter(|(id, _)| ids.contains(id))
                    .map(|(id, v)| (*id, v.clone()))
                    .collect();
                if witnesses.is_empty() {
                    continue;
                }
                out.insert(
                    (q.clone(), q2.clone()),
                    ProductEdge {
                        weight: e.weight,
                        witnesses,
                    },
                );
                if seen.insert(q2.clone()) {
                    queue.push_back(q2.clone());
                }
            }
        }
        out
    }

    pub fn state_json(&self, q: &ProductState) -> serde_json::Value {
        serde_json::json!({
            "s": self.model.state_name(&q.s),
            "z": self.buchi.state_name(q.z),
        })
    }

    /// Debug dump, with the lasso layers each state's automaton state occupies.
    pub fn to_json(&self, beta: Option<&Lasso>) -> serde_json::Value {
        let layers = |z: usize| -> Vec<usize> {
            beta.map(|b| {
                (0..b.len())
                    .filter(|&k| self.buchi.edge(b.edge(k)).from == z)
                    .collect()
            })
            .unwrap_or_default()
        };
        let states: Vec<serde_json::Value> = self
            .states
            .iter()
            .map(|q| {
                let mut v = self.state_json(q);
                v["layers"] = serde_json::json!(layers(q.z));
                v
            })
            .collect();
        let edges: Vec<serde_json::Value> = self
            .edges
            .iter()
            .flat_map(|(q, m)| {
                m.iter().map(move |(q2, e)| {
                    serde_json::json!({
                        "from": self.state_json(q),
                        "to": self.state_json(q2),
                        "weight": e.weight,
                        "witnesses": e.witnesses.iter().map(|(id, rs)| serde_json::json!({
                            "edge": id,
                            "bindings": rs,
                        })).collect::<Vec<_>>(),
                    })
                })
            })
            .collect();
        serde_json::json!({
            "schema": schema::PRODUCT,
            "robot": self.model.robot(),
            "initial": self.state_json(&self.initial),
            "states": states,
            "edges": edges,
        })
    }
}

#[cfg(test)]
pub(crate) mod tests;
