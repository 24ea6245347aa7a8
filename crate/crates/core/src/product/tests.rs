use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::agent::{
    CapState, Capability, CapabilityAddition, Modification, TransitionRef, WeightedTransition,
};
use crate::binding::Binding;
use crate::omega::{lassos, BuchiEdge, Obligation};

pub(crate) fn ob(p: &str, b: u32) -> Obligation {
    (p.to_string(), Binding(b))
}

pub(crate) fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub(crate) fn ctx(n: u32, distinct: Vec<BindingSet>) -> BindingContext {
    BindingContext::new((1..=n).map(Binding).collect(), distinct)
}

#[test]
fn capability_function_projects_one_binding() {
    let sigma = GuardTuple {
        t: BTreeSet::from([ob("roomB_c", 2), ob("camera", 2), ob("dock_c", 1)]),
        ..Default::default()
    };
    let c = capability_fn(&sigma, Binding(2));
    assert_eq!(c.t, set(&["roomB_c", "camera"]));
    assert!(c.ex_t.is_empty() && c.f.is_empty() && c.ex_f.is_empty());
    assert_eq!(capability_fn(&sigma, Binding(3)), CapabilitySets::default());

    let storage = GuardTuple {
        t: BTreeSet::from([ob("storage_c", 3), ob("beep", 3)]),
        ex_f: BTreeSet::from([ob("dock_c", 1)]),
        ..Default::default()
    };
    let c = capability_fn(&storage, Binding(1));
    assert_eq!(c.ex_f, set(&["dock_c"]));
    assert!(c.t.is_empty() && c.ex_t.is_empty() && c.f.is_empty());
}

#[test]
fn distinct_sets_are_never_offered() {
    let c = ctx(3, vec![BindingSet::from([1, 2])]);
    let opts = binding_options(&c, &GuardTuple::default(), &BTreeSet::new());
    assert_eq!(opts.len(), 5);
    assert!(!opts.contains(&BindingSet::from([1, 2])));
    assert!(!opts.contains(&BindingSet::from([1, 2, 3])));
}

#[test]
fn empty_guard_offers_every_candidate() {
    let c = ctx(3, vec![]);
    assert_eq!(binding_options(&c, &GuardTuple::default(), &set(&["x"])).len(), 7);
}

// Definition-level oracle: unions over the whole set, checked per subset.
fn options_oracle(c: &BindingContext, sigma: &GuardTuple, labels: &BTreeSet<String>) -> Vec<BindingSet> {
    let mut out = Vec::new();
    for r in c.alphabet.nonempty_subsets() {
        if c.distinct.iter().any(|d| d.is_subset(&r)) {
            continue;
        }
        let mut need_true = BTreeSet::new();
        let mut need_false = BTreeSet::new();
        for rho in r.iter() {
            let cs = capability_fn(sigma, rho);
            need_true.extend(cs.t.into_iter().chain(cs.ex_t));
            need_false.extend(cs.f.into_iter().chain(cs.ex_f));
        }
        if need_true.is_subset(labels) && need_false.is_disjoint(labels) {
            out.push(r);
        }
    }
    out.sort();
    out
}

fn arb_guard() -> impl Strategy<Value = GuardTuple> {
    prop::collection::btree_map((0..3u8, 1..=3u32), 0..4u8, 0..5).prop_map(|m| {
        let mut g = GuardTuple::default();
        for ((p, b), part) in m {
            let o = (format!("p{p}"), Binding(b));
            match part {
                0 => g.t.insert(o),
                1 => g.ex_t.insert(o),
                2 => g.f.insert(o),
                _ => g.ex_f.insert(o),
            };
        }
        g
    })
}

fn arb_labels() -> impl Strategy<Value = BTreeSet<String>> {
    prop::collection::btree_set((0..3u8).prop_map(|p| format!("p{p}")), 0..=3)
}

proptest! {
    #[test]
    fn binding_options_match_definition(g in arb_guard(), l in arb_labels(), with_distinct in any::<bool>()) {
        let distinct = if with_distinct { vec![BindingSet::from([1, 3])] } else { vec![] };
        let c = ctx(3, distinct);
        prop_assert_eq!(binding_options(&c, &g, &l), options_oracle(&c, &g, &l));
    }

    #[test]
    fn more_labels_never_hurt_positive_guards(g in arb_guard(), l in arb_labels(), extra in arb_labels()) {
        let c = ctx(3, vec![]);
        let mut g = g;
        g.f.clear();
        g.ex_f.clear();
        let small = binding_options(&c, &g, &l);
        let big_labels: BTreeSet<String> = l.union(&extra).cloned().collect();
        let big = binding_options(&c, &g, &big_labels);
        prop_assert!(small.iter().all(|r| big.contains(r)));
    }

    #[test]
    fn more_distinct_sets_never_add_options(g in arb_guard(), l in arb_labels()) {
        let loose = binding_options(&ctx(3, vec![]), &g, &l);
        let tight = binding_options(&ctx(3, vec![BindingSet::from([2, 3])]), &g, &l);
        prop_assert!(tight.iter().all(|r| loose.contains(r)));
    }
}

pub(crate) fn st(name: &str, labels: &[&str]) -> CapState {
    CapState {
        name: name.to_string(),
        labels: set(labels),
    }
}

pub(crate) fn tr(from: &str, to: &str, weight: f64) -> WeightedTransition {
    WeightedTransition {
        from: from.into(),
        to: to.into(),
        weight,
    }
}

fn true_automaton() -> Arc<BuchiAutomaton> {
    Arc::new(
        BuchiAutomaton::new(
            vec!["0".into()],
            0,
            BTreeSet::from([0]),
            vec![BuchiEdge {
                from: 0,
                to: 0,
                guard: GuardTuple::default(),
            }],
        )
        .unwrap(),
    )
}

#[test]
fn trivial_product_is_one_accepting_state() {
    let cap = Capability::new("c", vec![st("x", &["a"])], "x", vec![]).unwrap();
    let m = RobotModel::compose("r", vec![cap], &BTreeSet::new()).unwrap();
    let g = ProductAutomaton::build(m, true_automaton(), ctx(1, vec![]));
    assert_eq!(g.states().len(), 1);
    assert!(g.is_accepting(g.initial()));
    // the wait move is the only edge
    assert_eq!(g.num_edges(), 1);
}

#[test]
fn slice_rebasing() {
    let s = ModelState(vec![0]);
    let mk = |layer, z, progress| ProgressSlice {
        robot: "j".into(),
        layer,
        state: ProductState { s: s.clone(), z },
        progress,
    };
    let m = ProgressSlice {
        robot: "m".into(),
        layer: 1,
        state: ProductState {
            s: ModelState(vec![7]),
            z: 2,
        },
        progress: 1,
    };
    let ahead = slice_for(&mk(2, 3, 2), &m);
    assert_eq!(ahead.state, ProductState { s: s.clone(), z: 2 });
    assert_eq!((ahead.layer, ahead.progress), (1, 1));
    assert_eq!(slice_for(&mk(1, 2, 1), &m), mk(1, 2, 1));
    assert_eq!(slice_for(&mk(0, 0, 0), &m), mk(0, 0, 0));
}

#[test]
fn failed_bindings_are_the_uncovered_ones() {
    let feasible = vec![BindingSet::from([1]), BindingSet::from([3]), BindingSet::from([1, 3])];
    assert_eq!(failed_bindings(&feasible, &BindingSet::from([2, 3])), BindingSet::from([2]));
    assert_eq!(failed_bindings(&feasible, &BindingSet::new()), BindingSet::new());
}

// A line a - b - c where the task wants binding 1 at c eventually and
// forever after.
fn line_setup() -> (ProductAutomaton, Lasso) {
    let cap = Capability::new(
        "mot",
        vec![st("a", &["a"]), st("b", &["b"]), st("c", &["c"])],
        "a",
        vec![tr("a", "b", 1.0), tr("b", "a", 1.0), tr("b", "c", 1.0), tr("c", "b", 1.0)],
    )
    .unwrap();
    let m = RobotModel::compose("r", vec![cap], &BTreeSet::new()).unwrap();
    let at_c = GuardTuple {
        t: BTreeSet::from([ob("c", 1)]),
        ..Default::default()
    };
    let b = BuchiAutomaton::new(
        vec!["0".into(), "1".into()],
        0,
        BTreeSet::from([1]),
        vec![
            BuchiEdge { from: 0, to: 0, guard: GuardTuple::default() },
            BuchiEdge { from: 0, to: 1, guard: at_c.clone() },
            BuchiEdge { from: 1, to: 1, guard: at_c },
        ],
    )
    .unwrap();
    let beta = Lasso { prefix: vec![1], cycle: vec![2] };
    (ProductAutomaton::build(m, Arc::new(b), ctx(2, vec![])), beta)
}

#[test]
fn feasible_sets_on_a_line() {
    let (g, beta) = line_setup();
    let slice = ProgressSlice::initial("r", g.model().initial(), &beta, g.buchi());
    // binding 2 is unconstrained, binding 1 needs c reachable
    assert_eq!(
        feasible_bindings(&g, &slice, &beta),
        vec![BindingSet::from([1]), BindingSet::from([1, 2]), BindingSet::from([2])]
    );
}

#[test]
fn removal_cuts_feasibility() {
    let (mut g, beta) = line_setup();
    let slice = ProgressSlice::initial("r", g.model().initial(), &beta, g.buchi());
    let m = Modification {
        robot: "r".into(),
        time: 0,
        add: BTreeMap::new(),
        remove: [("mot".to_string(), vec![TransitionRef { from: "b".into(), to: "c".into() }])].into(),
    };
    g.fold(&m, &beta, &slice).unwrap();
    let r = feasible_bindings(&g, &slice, &beta);
    assert_eq!(r, vec![BindingSet::from([2])]);
    assert_eq!(failed_bindings(&r, &BindingSet::from([1])), BindingSet::from([1]));
}

// Random instances for the incremental-update oracle.

fn arb_cap(idx: usize) -> impl Strategy<Value = Capability> {
    (1..=4usize).prop_flat_map(move |n| {
        prop::collection::btree_map((0..n, 0..n), 0u8..4, 0..=n * n).prop_map(move |ts| {
            let states = (0..n)
                .map(|i| st(&format!("s{i}"), &[&format!("p{}", (idx + i) % 3)]))
                .collect();
            let ts = ts
                .into_iter()
                .map(|((a, b), w)| tr(&format!("s{a}"), &format!("s{b}"), w as f64))
                .collect();
            Capability::new(&format!("c{idx}"), states, "s0", ts).unwrap()
        })
    })
}

pub(crate) fn arb_model() -> impl Strategy<Value = RobotModel> {
    (1..=3usize).prop_flat_map(|k| {
        (0..k).map(arb_cap).collect::<Vec<_>>().prop_map(|caps| {
            RobotModel::compose("r", caps, &["p0", "p1", "p2"].iter().map(|s| s.to_string()).collect())
                .unwrap()
        })
    })
}

pub(crate) fn arb_automaton() -> impl Strategy<Value = Option<BuchiAutomaton>> {
    (1..=3usize).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec((0..n, 0..n, arb_guard()), 1..7),
            prop::collection::btree_set(0..n, 1..=n),
        )
            .prop_map(|(n, es, acc)| {
                let edges = es
                    .into_iter()
                    .map(|(from, to, mut guard)| {
                        // keep bindings 1 and 2 only
                        for part in [&mut guard.t, &mut guard.ex_t, &mut guard.f, &mut guard.ex_f] {
                            part.retain(|(_, b)| b.0 <= 2);
                        }
                        BuchiEdge { from, to, guard }
                    })
                    .collect();
                BuchiAutomaton::new((0..n).map(|i| i.to_string()).collect(), 0, acc, edges).ok()
            })
    })
}

fn arb_mod(m: &RobotModel, picks: &[(usize, usize, usize, bool, u8)]) -> Modification {
    let mut remove: BTreeMap<String, Vec<TransitionRef>> = BTreeMap::new();
    let mut add: BTreeMap<String, CapabilityAddition> = BTreeMap::new();
    for &(ci, a, b, rem, w) in picks {
        let c = &m.capabilities()[ci % m.capabilities().len()];
        let n = c.num_states();
        let (x, y) = ((a % n) as u32, (b % n) as u32);
        let from = c.state(x).name.clone();
        let to = c.state(y).name.clone();
        let exists = c.transitions().contains_key(&(x, y));
        if rem && exists {
            let e = remove.entry(c.name().to_string()).or_default();
            let r = TransitionRef { from, to };
            if !e.contains(&r) {
                e.push(r);
            }
        } else if !rem && !exists {
            let e = add.entry(c.name().to_string()).or_default();
            if !e.transitions.iter().any(|t| t.from == from && t.to == to) {
                e.transitions.push(tr(&from, &to, w as f64));
            }
        }
    }
    Modification { robot: "r".into(), time: 0, add, remove }
}

type Instance = (RobotModel, BuchiAutomaton, Vec<(usize, usize, usize, bool, u8)>, usize);

pub(crate) fn arb_instance() -> impl Strategy<Value = Instance> {
    (
        arb_model(),
        arb_automaton(),
        prop::collection::vec((0..3usize, 0..4usize, 0..4usize, any::<bool>(), 0u8..4), 0..6),
        any::<usize>(),
    )
        .prop_filter_map("empty automaton", |(m, b, picks, pick)| b.map(|b| (m, b, picks, pick)))
}

/// Run one incremental-versus-rebuild comparison. Returns `None` when the
/// instance has no lasso, otherwise whether the two graphs agree.
pub(crate) fn incremental_matches_rebuild(inst: &Instance) -> Option<bool> {
    let (model, b, picks, pick) = inst;
    let beta = lassos(b, 6).next()?.1.into_iter().next()?;
    let b = Arc::new(b.clone());
    let c = ctx(2, vec![]);
    let g = ProductAutomaton::build(model.clone(), b.clone(), c.clone());
    let beta_states: BTreeSet<usize> = beta.edges().map(|e| b.edge(e).from).collect();
    let candidates: Vec<&ProductState> = g.states().iter().filter(|q| beta_states.contains(&q.z)).collect();
    if candidates.is_empty() {
        return None;
    }
    let q = candidates[pick % candidates.len()].clone();
    let layer = (0..beta.len()).find(|&k| b.edge(beta.edge(k)).from == q.z).unwrap();
    let slice = ProgressSlice { robot: "r".into(), layer, state: q.clone(), progress: 0 };
    let m = arb_mod(model, picks);

    let mut inc = g.clone();
    inc.fold(&m, &beta, &slice).unwrap();
    let after = model.apply(&m).unwrap();
    let rebuilt = ProductAutomaton::build_from(after, b.clone(), c, q.clone());
    let ids = g.beta_edge_set(&beta);
    Some(inc.restricted(&q, &ids) == rebuilt.restricted(&q, &ids))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn incremental_update_matches_rebuild(inst in arb_instance()) {
        if let Some(ok) = incremental_matches_rebuild(&inst) {
            prop_assert!(ok);
        }
    }

    #[test]
    fn add_then_remove_restores(inst in arb_instance()) {
        let (model, b, picks, _) = &inst;
        let Some((_, bucket)) = lassos(b, 6).next() else { return Ok(()); };
        let beta = bucket[0].clone();
        let b = Arc::new(b.clone());
        let g = ProductAutomaton::build(model.clone(), b.clone(), ctx(2, vec![]));
        let slice = ProgressSlice::initial("r", model.initial(), &beta, &b);
        if !g.contains(&slice.state) {
            return Ok(());
        }
        let m = Modification { remove: BTreeMap::new(), ..arb_mod(model, picks) };
        let delta = model.delta_model(&m).unwrap();
        let after = model.apply(&m).unwrap();
        let mut h = g.clone();
        h.update(&delta.addition, Direction::Add, &after, &beta, &slice);
        h.update(&delta.addition, Direction::Remove, model, &beta, &slice);
        let ids = g.beta_edge_set(&beta);
        prop_assert!(g.restricted(&slice.state, &ids) == h.restricted(&slice.state, &ids));
    }

    #[test]
    fn stored_witnesses_revalidate(inst in arb_instance()) {
        let (model, b, picks, _) = &inst;
        let Some((_, bucket)) = lassos(b, 6).next() else { return Ok(()); };
        let beta = bucket[0].clone();
        let b = Arc::new(b.clone());
        let c = ctx(2, vec![]);
        let mut g = ProductAutomaton::build(model.clone(), b.clone(), c.clone());
        let slice = ProgressSlice::initial("r", model.initial(), &beta, &b);
        g.fold(&arb_mod(model, picks), &beta, &slice).unwrap();
        for q in g.states().iter() {
            for (q2, e) in g.out_edges(q) {
                let labels = g.labels(q2);
                for (id, rs) in &e.witnesses {
                    prop_assert_eq!(rs, &binding_options(&c, &b.edge(*id).guard, &labels));
                }
            }
        }
    }
}
