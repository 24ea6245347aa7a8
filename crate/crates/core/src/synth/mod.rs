//! Team synthesis along a collective lasso of the task automaton: pick a
//! lasso, find which binding sets each robot can hold along it, allocate, and
//! extract per-robot minimum-cost behaviors.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alloc::{allocate, AllocationProblem, Assignment};
use crate::binding::{Binding, BindingSet};
use crate::omega::{lassos, BuchiAutomaton, Lasso};
use crate::product::{feasible_bindings, LayerMove, LayerNode, LayeredView, ProductAutomaton, ProgressSlice};
use crate::spec_lang::Task;


pub const DEFAULT_BOUND: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("robot {robot} cannot hold {r} along the lasso from its current state")]
    Infeasible { robot: String, r: BindingSet },
    #[error("no team plan along lassos of up to {bound} edges")]
    Unsat { bound: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Move {
    /// Automaton edge taken; `None` for a robot that holds no binding.
    pub buchi_edge: Option<usize>,
    /// Lasso layer completed by this move.
    pub progress: Option<usize>,
    pub weight: f64,
}

/// A lasso-shaped run: `moves[i]` leads from `nodes[i]` to `nodes[i + 1]`,
/// and the last move leads back to `nodes[loop_start]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Behavior {
    pub robot: String,
    pub bindings: BindingSet,
    pub nodes: Vec<LayerNode>,
    pub moves: Vec<Move>,
    pub loop_start: usize,
}

impl Behavior {
    pub fn idle(robot: &str, at: LayerNode) -> Self {
        Behavior {
            robot: robot.to_string(),
            bindings: BindingSet::new(),
            nodes: vec![at],
            moves: vec![Move {
                buchi_edge: None,
                progress: None,
                weight: 0.0,
            }],
            loop_start: 0,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.moves.iter().all(|m| m.buchi_edge.is_none())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn next_index(&self, i: usize) -> usize {
        if i + 1 < self.nodes.len() {
            i + 1
        } else {
            self.loop_start
        }
    }

    pub fn prefix_cost(&self) -> f64 {
        self.moves[..self.loop_start].iter().map(|m| m.weight).sum()
    }

    pub fn cycle_cost(&self) -> f64 {
        self.moves[self.loop_start..].iter().map(|m| m.weight).sum()
    }

    pub fn cost(&self) -> f64 {
        self.prefix_cost() + self.cycle_cost()
    }

    /// Steps from position `from` on: the rest of the current pass plus the
    /// whole loop, as (source node, move, target node).
    pub fn remaining_steps(&self, from: usize) -> Vec<(&LayerNode, &Move, &LayerNode)> {
        let mut idx: Vec<usize> = (from..self.nodes.len()).collect();
        idx.extend(self.loop_start..from.min(self.nodes.len()));
        idx.into_iter()
            .map(|i| (&self.nodes[i], &self.moves[i], &self.nodes[self.next_index(i)]))
            .collect()
    }
}

/// Robots that must take a lasso edge together, and which robot vouches
/// for each existential obligation on it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncObligation {
    pub layer: usize,
    pub buchi_edge: usize,
    pub robots: Vec<String>,
    pub witnesses: BTreeMap<Binding, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeamPlan {
    pub beta: Lasso,
    pub assignment: Assignment,
    pub behaviors: BTreeMap<String, Behavior>,
    pub obligations: Vec<SyncObligation>,
    /// Binding sets each robot could hold when the plan was made.
    pub feasible: BTreeMap<String, Vec<BindingSet>>,
}

pub fn sync_obligations(b: &BuchiAutomaton, beta: &Lasso, assignment: &Assignment) -> Vec<SyncObligation> {
    (0..beta.len())
        .filter(|&k| !b.is_self_loop(beta.edge(k)))
        .map(|k| {
            let e = beta.edge(k);
            let guard = &b.edge(e).guard;
            let mentioned = guard.bindings();
            let robots = assignment
                .iter()
                .filter(|(_, r)| r.intersects(&mentioned))
                .map(|(j, _)| j.clone())
                .collect();
            let witnesses = guard
                .ex_t
                .iter()
                .chain(&guard.ex_f)
                .filter_map(|(_, rho)| {
                    let holder = assignment.iter().find(|(_, r)| r.contains(*rho))?;
                    Some((*rho, holder.0.clone()))
                })
                .collect();
            SyncObligation {
                layer: k,
                buchi_edge: e,
                robots,
                witnesses,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Cost(f64);

impl Eq for Cost {}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// The layered view reachable from one node, indexed. Index order follows
/// `LayerNode` order so tie-breaking does not depend on discovery order.
struct Indexed {
    nodes: Vec<LayerNode>,
    out: Vec<Vec<(usize, LayerMove)>>,
}

impl Indexed {
    fn build(view: &LayeredView<'_>, start: &LayerNode) -> Indexed {
        let mut seen = BTreeMap::from([(start.clone(), Vec::new())]);
        let mut stack = vec![start.clone()];
        while let Some(n) = stack.pop() {
            let moves = view.moves(&n, false);
            for m in &moves {
                if !seen.contains_key(&m.to) {
                    seen.insert(m.to.clone(), Vec::new());
                    stack.push(m.to.clone());
                }
            }
            seen.insert(n, moves);
        }
        let index: HashMap<LayerNode, usize> = seen.keys().cloned().enumerate().map(|(i, n)| (n, i)).collect();
        let mut nodes = Vec::with_capacity(seen.len());
        let mut out = Vec::with_capacity(seen.len());
        for (n, moves) in seen {
            out.push(moves.into_iter().map(|m| (index[&m.to], m)).collect());
            nodes.push(n);
        }
        Indexed { nodes, out }
    }

    fn index_of(&self, n: &LayerNode) -> usize {
        self.nodes.binary_search(n).expect("node was indexed")
    }
}

/// Shortest paths over `(node, lapped)` keys, where `lapped` records a wrap
/// back to the cycle start once `track_laps` is set. On equal cost the
/// smaller predecessor wins. Stops once `target` is settled.
struct Search {
    dist: Vec<f64>,
    pred: Vec<Option<(usize, usize)>>,
}

impl Search {
    fn key(node: usize, lapped: bool) -> usize {
        node * 2 + lapped as usize
    }

    fn run(g: &Indexed, start: usize, track_laps: bool, target: Option<usize>) -> Search {
        let n = g.nodes.len() * 2;
        let mut dist = vec![f64::INFINITY; n];
        let mut pred: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut done = vec![false; n];
        let s = Search::key(start, false);
        dist[s] = 0.0;
        let mut heap = BinaryHeap::from([Reverse((Cost(0.0), s))]);
        while let Some(Reverse((Cost(d), k))) = heap.pop() {
            if done[k] {
                continue;
            }
            done[k] = true;
            if Some(k) == target {
                break;
            }
            let (node, lapped) = (k / 2, k % 2 == 1);
            for (mi, (to, m)) in g.out[node].iter().enumerate() {
                let k2 = Search::key(*to, track_laps && (lapped || m.wraps));
                if done[k2] {
                    continue;
                }
                let nd = d + m.weight;
                let better = nd < dist[k2] || (nd == dist[k2] && pred[k2].map(|(p, _)| k < p).unwrap_or(false));
                if better {
                    dist[k2] = nd;
                    pred[k2] = Some((k, mi));
                    heap.push(Reverse((Cost(nd), k2)));
                }
            }
        }
        Search { dist, pred }
    }

    fn path_to(&self, g: &Indexed, target: usize) -> Vec<(LayerNode, LayerMove)> {
        let mut out = Vec::new();
        let mut cur = target;
        while let Some((p, mi)) = self.pred[cur] {
            out.push((g.nodes[p / 2].clone(), g.out[p / 2][mi].1.clone()));
            cur = p;
        }
        out.reverse();
        out
    }
}

/// Minimum-cost behavior for a robot holding `r`, from its slice through the
/// rest of the lasso and then around its cycle forever. The loop returns to
/// the node where it starts after one or more passes over the cycle.
pub fn extract_behavior(
    g: &ProductAutomaton,
    beta: &Lasso,
    slice: &ProgressSlice,
    r: &BindingSet,
) -> Result<Behavior, SynthError> {
    let start = LayerNode {
        s: slice.state.s.clone(),
        layer: slice.layer,
    };
    if r.is_empty() {
        return Ok(Behavior::idle(&slice.robot, start));
    }
    let graph = Indexed::build(&LayeredView::new(g, beta, r), &start);
    let c = beta.cycle_start();
    let to_cycle = Search::run(&graph, graph.index_of(&start), false, None);
    let mut entries: Vec<(Cost, usize)> = (0..graph.nodes.len())
        .filter(|&i| graph.nodes[i].layer == c && to_cycle.dist[Search::key(i, false)].is_finite())
        .map(|i| (Cost(to_cycle.dist[Search::key(i, false)]), i))
        .collect();
    entries.sort();

    let mut best: Option<(f64, usize, Search)> = None;
    for (Cost(d1), entry) in entries {
        if let Some((b, _, _)) = &best {
            if d1 >= *b {
                break;
            }
        }
        let target = Search::key(entry, true);
        let around = Search::run(&graph, entry, true, Some(target));
        let d2 = around.dist[target];
        if d2.is_finite() && best.as_ref().map(|(b, _, _)| d1 + d2 < *b).unwrap_or(true) {
            best = Some((d1 + d2, entry, around));
        }
    }
    let (_, entry, around) = best.ok_or_else(|| SynthError::Infeasible {
        robot: slice.robot.clone(),
        r: r.clone(),
    })?;

    let mut nodes = Vec::new();
    let mut moves = Vec::new();
    for (n, m) in to_cycle.path_to(&graph, Search::key(entry, false)) {
        nodes.push(n);
        moves.push(m);
    }
    let loop_start = nodes.len();
    for (n, m) in around.path_to(&graph, Search::key(entry, true)) {
        nodes.push(n);
        moves.push(m);
    }
    Ok(Behavior {
        robot: slice.robot.clone(),
        bindings: r.clone(),
        nodes,
        moves: moves
            .into_iter()
            .map(|m| Move {
                buchi_edge: Some(m.buchi_edge),
                progress: m.progress,
                weight: m.weight,
            })
            .collect(),
        loop_start,
    })
}

/// New behavior for one robot along the current lasso, leaving everyone
/// else untouched. An empty `r_new` makes the robot idle.
pub fn local_resynthesize(
    g: &ProductAutomaton,
    beta: &Lasso,
    slice: &ProgressSlice,
    r_new: &BindingSet,
) -> Result<Behavior, SynthError> {
    extract_behavior(g, beta, slice, r_new)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthConfig {
    pub bound: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            bound: DEFAULT_BOUND,
            seed: 0,
        }
    }
}

struct Candidate {
    beta: Lasso,
    slices: Vec<ProgressSlice>,
    feasible: Vec<Vec<BindingSet>>,
    proxy: f64,
}

fn evaluate(products: &[ProductAutomaton], beta: Lasso, needed: &BindingSet) -> Option<Candidate> {
    let slices: Vec<ProgressSlice> = products
        .iter()
        .map(|g| ProgressSlice::initial(g.model().robot(), g.initial().s.clone(), &beta, g.buchi()))
        .collect();
    let feasible: Vec<Vec<BindingSet>> = products
        .par_iter()
        .zip(&slices)
        .map(|(g, s)| feasible_bindings(g, s, &beta))
        .collect();
    let support = feasible.iter().flatten().fold(BindingSet::new(), |acc, r| acc.union(r));
    if !needed.is_subset(&support) {
        return None;
    }
    let proxy = products
        .par_iter()
        .zip(&slices)
        .zip(&feasible)
        .map(|((g, s), rs)| {
            rs.iter()
                .filter_map(|r| extract_behavior(g, &beta, s, r).ok().map(|b| b.cost()))
                .fold(f64::INFINITY, f64::min)
        })
        .map(|c| if c.is_finite() { c } else { 0.0 })
        .sum();
    Some(Candidate {
        beta,
        slices,
        feasible,
        proxy,
    })
}

/// Team synthesis from each product's initial state. Lassos are tried by
/// length, and within one length by the summed cheapest behavior cost.
pub fn synthesize(products: &[ProductAutomaton], task: &Task, cfg: SynthConfig) -> Result<TeamPlan, SynthError> {
    let Some(first) = products.first() else {
        return Err(SynthError::Unsat { bound: cfg.bound });
    };
    let buchi = first.buchi_arc();
    let needed = task.bindings();
    for (len, bucket) in lassos(&buchi, cfg.bound) {
        let mut cands: Vec<Candidate> =
            bucket.into_iter().filter_map(|beta| evaluate(products, beta, &needed)).collect();
        cands.sort_by(|a, b| a.proxy.total_cmp(&b.proxy).then_with(|| a.beta.cmp(&b.beta)));
        log::debug!("lasso length {len}: {} candidates", cands.len());
        for cand in cands {
            let problem = AllocationProblem {
                bindings: needed.clone(),
                robots: products.iter().map(|g| g.model().robot().to_string()).collect(),
                candidates: cand.feasible.clone(),
                original: vec![BindingSet::new(); products.len()],
                min: task.min.clone(),
                distinct: task.distinct.clone(),
            };
            let Some(assignment) = allocate(&problem, cfg.seed) else {
                continue;
            };
            let behaviors: Result<Vec<Behavior>, SynthError> = products
                .par_iter()
                .zip(&cand.slices)
                .map(|(g, s)| extract_behavior(g, &cand.beta, s, &assignment[g.model().robot()]))
                .collect();
            let behaviors = behaviors?;
            return Ok(TeamPlan {
                obligations: sync_obligations(&buchi, &cand.beta, &assignment),
                beta: cand.beta,
                feasible: problem.robots.iter().cloned().zip(cand.feasible).collect(),
                assignment,
                behaviors: behaviors.into_iter().map(|b| (b.robot.clone(), b)).collect(),
            });
        }
    }
    Err(SynthError::Unsat { bound: cfg.bound })
}
