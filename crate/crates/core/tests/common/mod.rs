#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ltlpsi::agent::{CapState, Capability, CapabilityAddition, Modification, RobotModel, TransitionRef, WeightedTransition};
use ltlpsi::alloc::{AllocationProblem, Assignment};
use ltlpsi::binding::{Binding, BindingContext, BindingSet};
use ltlpsi::checker::{constraints_hold, satisfies, CheckOptions, LassoWord};
use ltlpsi::ltl::Ltl;
use ltlpsi::omega::{lassos, translate, BuchiAutomaton, BuchiEdge, GuardTuple};
use ltlpsi::product::{ProductAutomaton, ProductState, ProgressSlice};
use ltlpsi::runtime::Team;
use ltlpsi::scenario::Scenario;
use ltlpsi::sim::{self, RunMeta, RunResult};
use ltlpsi::spec_lang::{rewrite, AtomicBlock, BindingFormula, NegStyle, PropLit, Task, TaskFormula};
use ltlpsi::synth::{synthesize, SynthConfig, TeamPlan};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

pub fn warehouse() -> Scenario {
    Scenario::load(&fixture("warehouse/scenario.json")).expect("warehouse fixture loads")
}

pub fn plan_with_seed(s: &Scenario, products: &[ProductAutomaton], seed: u64) -> (TeamPlan, SynthConfig) {
    let cfg = SynthConfig { seed, ..s.config() };
    (synthesize(products, &s.task, cfg).expect("fixture is satisfiable"), cfg)
}

/// Plan with `seed`, then run with the given schedule.
pub fn run_with(s: &Scenario, seed: u64, schedule: &[Modification]) -> RunResult {
    let products = s.products();
    let (plan, cfg) = plan_with_seed(s, &products, seed);
    let team = Team::new(s.task.clone(), products, plan, cfg).expect("plan fits team");
    let meta = RunMeta {
        task: s.task_text.clone(),
        scenario_hash: s.hash(),
        seed,
    };
    sim::run(team, schedule, s.horizon, meta).expect("run completes")
}

/// Seed for the runs that start from the reference team assignment.
pub const REFERENCE_SEED: u64 = 2;

pub fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Deterministic runner for sampling values from strategies outside
/// `proptest!`.
pub fn runner(seed: u8) -> TestRunner {
    TestRunner::new_with_rng(Config::default(), TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]))
}

pub fn sample<S: Strategy>(strategy: &S, runner: &mut TestRunner) -> S::Value {
    strategy.new_tree(runner).expect("strategy yields values").current()
}

// Incremental product update instances.

fn st(name: &str, labels: &[&str]) -> CapState {
    CapState {
        name: name.to_string(),
        labels: set(labels),
    }
}

fn tr(from: &str, to: &str, weight: f64) -> WeightedTransition {
    WeightedTransition {
        from: from.into(),
        to: to.into(),
        weight,
    }
}

fn arb_guard() -> impl Strategy<Value = GuardTuple> {
    prop::collection::btree_map((0..3u8, 1..=2u32), 0..4u8, 0..5).prop_map(|m| {
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

fn arb_cap(idx: usize) -> impl Strategy<Value = Capability> {
    (1..=4usize).prop_flat_map(move |n| {
        prop::collection::btree_map((0..n, 0..n), 0u8..4, 0..=n * n).prop_map(move |ts| {
            let states = (0..n).map(|i| st(&format!("s{i}"), &[&format!("p{}", (idx + i) % 3)])).collect();
            let ts = ts
                .into_iter()
                .map(|((a, b), w)| tr(&format!("s{a}"), &format!("s{b}"), w as f64))
                .collect();
            Capability::new(&format!("c{idx}"), states, "s0", ts).unwrap()
        })
    })
}

/// Up to three capabilities of up to four states each.
pub fn arb_model() -> impl Strategy<Value = RobotModel> {
    (1..=3usize).prop_flat_map(|k| {
        (0..k).map(arb_cap).collect::<Vec<_>>().prop_map(|caps| {
            RobotModel::compose("r", caps, &set(&["p0", "p1", "p2"])).unwrap()
        })
    })
}

pub fn arb_automaton() -> impl Strategy<Value = Option<BuchiAutomaton>> {
    (1..=3usize).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec((0..n, 0..n, arb_guard()), 1..7),
            prop::collection::btree_set(0..n, 1..=n),
        )
            .prop_map(|(n, es, acc)| {
                let edges = es.into_iter().map(|(from, to, guard)| BuchiEdge { from, to, guard }).collect();
                BuchiAutomaton::new((0..n).map(|i| i.to_string()).collect(), 0, acc, edges).ok()
            })
    })
}

/// (from-capability, from-state, to-state, remove?, weight) picks.
pub type Pick = (usize, usize, usize, bool, u8);

pub fn modification(m: &RobotModel, picks: &[Pick]) -> Modification {
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
    Modification {
        robot: "r".into(),
        time: 0,
        add,
        remove,
    }
}

pub type UpdateInstance = (RobotModel, BuchiAutomaton, Vec<Pick>, usize);

pub fn arb_update_instance() -> impl Strategy<Value = UpdateInstance> {
    (
        arb_model(),
        arb_automaton(),
        prop::collection::vec((0..3usize, 0..4usize, 0..4usize, any::<bool>(), 0u8..4), 0..6),
        any::<usize>(),
    )
        .prop_filter_map("empty automaton", |(m, b, picks, pick)| b.map(|b| (m, b, picks, pick)))
}

/// Fold a random modification into the product incrementally and compare
/// with a product rebuilt from the modified model. `None` when the
/// instance has no lasso or no state on it.
pub fn update_matches_rebuild(inst: &UpdateInstance) -> Option<bool> {
    let (model, b, picks, pick) = inst;
    let beta = lassos(b, 6).next()?.1.into_iter().next()?;
    let b = Arc::new(b.clone());
    let ctx = BindingContext::new(BindingSet::from([1, 2]), vec![]);
    let g = ProductAutomaton::build(model.clone(), b.clone(), ctx.clone());
    let on_beta: BTreeSet<usize> = beta.edges().map(|e| b.edge(e).from).collect();
    let starts: Vec<&ProductState> = g.states().iter().filter(|q| on_beta.contains(&q.z)).collect();
    if starts.is_empty() {
        return None;
    }
    let q = starts[pick % starts.len()].clone();
    let layer = (0..beta.len()).find(|&k| b.edge(beta.edge(k)).from == q.z)?;
    let slice = ProgressSlice {
        robot: "r".into(),
        layer,
        state: q.clone(),
        progress: 0,
    };
    let m = modification(model, picks);
    let mut inc = g.clone();
    inc.fold(&m, &beta, &slice).ok()?;
    let after = model.apply(&m).ok()?;
    let rebuilt = ProductAutomaton::build_from(after, b, ctx, q.clone());
    let ids = g.beta_edge_set(&beta);
    Some(inc.restricted(&q, &ids) == rebuilt.restricted(&q, &ids))
}

// Semantics cross-validation instances. Blocks are drawn from the fragment
// where the holder quantifier distributes over the block body: plain and
// outer-negated bodies are conjunctions of literals, inner-negated bodies
// are disjunctions, and no prop appears with both signs across
// outer-negated blocks.

const PROPS: [&str; 2] = ["a", "b"];

#[derive(Clone, Debug)]
pub struct SemanticsInstance {
    pub task: Task,
    pub assignment: Assignment,
    pub word: LassoWord,
}

fn literals(rng: &mut ChaCha8Rng) -> Vec<PropLit> {
    let n = rng.gen_range(1..=2);
    let mut out: Vec<PropLit> = Vec::new();
    for _ in 0..n {
        let prop = PROPS[rng.gen_range(0..PROPS.len())];
        if out.iter().all(|l| l.prop != prop) {
            out.push(PropLit {
                prop: prop.into(),
                positive: rng.gen_bool(0.5),
            });
        }
    }
    out
}

fn binding_formula(rng: &mut ChaCha8Rng) -> BindingFormula {
    match rng.gen_range(0..4) {
        0 => BindingFormula::var(1),
        1 => BindingFormula::var(2),
        2 => BindingFormula::and(BindingFormula::var(1), BindingFormula::var(2)),
        _ => BindingFormula::or(BindingFormula::var(1), BindingFormula::var(2)),
    }
}

fn block(rng: &mut ChaCha8Rng, outer_signs: &mut BTreeMap<String, bool>) -> AtomicBlock {
    loop {
        let lits = literals(rng);
        let style = match rng.gen_range(0..3) {
            0 => NegStyle::Plain,
            1 => NegStyle::InnerNeg,
            _ => NegStyle::OuterNeg,
        };
        if style == NegStyle::OuterNeg {
            if lits.iter().any(|l| outer_signs.get(&l.prop).is_some_and(|&s| s != l.positive)) {
                continue;
            }
            for l in &lits {
                outer_signs.insert(l.prop.clone(), l.positive);
            }
        }
        let atoms = lits.into_iter().map(Ltl::lit);
        let phi = match style {
            NegStyle::InnerNeg => Ltl::any(atoms),
            _ => Ltl::all(atoms),
        };
        return AtomicBlock {
            phi,
            psi: binding_formula(rng),
            style,
        };
    }
}

fn formula(rng: &mut ChaCha8Rng, blocks: usize, outer: &mut BTreeMap<String, bool>) -> TaskFormula {
    if blocks == 1 {
        let b = TaskFormula::block(block(rng, outer));
        return match rng.gen_range(0..4) {
            0 => TaskFormula::eventually(b),
            1 => TaskFormula::always(b),
            _ => b,
        };
    }
    let left = rng.gen_range(1..blocks);
    let a = formula(rng, left, outer);
    let b = formula(rng, blocks - left, outer);
    let f = match rng.gen_range(0..4) {
        0 => TaskFormula::and(a, b),
        1 => TaskFormula::or(a, b),
        2 => TaskFormula::until(a, b),
        _ => TaskFormula::Release(Box::new(a), Box::new(b)),
    };
    match rng.gen_range(0..5) {
        0 => TaskFormula::eventually(f),
        1 => TaskFormula::always(f),
        _ => f,
    }
}

fn labels(rng: &mut ChaCha8Rng) -> BTreeSet<String> {
    PROPS.iter().filter(|_| rng.gen_bool(0.5)).map(|p| p.to_string()).collect()
}

pub fn semantics_instance(rng: &mut ChaCha8Rng) -> SemanticsInstance {
    let mut outer = BTreeMap::new();
    let n_blocks = rng.gen_range(1..=3);
    let f = formula(rng, n_blocks, &mut outer);
    let probe = Task::new(f.clone(), vec![], BTreeMap::new()).expect("generated formulas are valid");
    let alphabet = probe.bindings();
    let mut min = BTreeMap::new();
    if rng.gen_bool(0.3) {
        let b = alphabet.iter().next().expect("every block has a binding");
        min.insert(b, rng.gen_range(1..=2));
    }
    let distinct = if alphabet.len() == 2 && rng.gen_bool(0.2) {
        vec![BindingSet::from([1, 2])]
    } else {
        vec![]
    };
    let task = Task::new(f, distinct, min).expect("constraints use known bindings");

    let n_robots = rng.gen_range(1..=3);
    let robots: Vec<String> = (0..n_robots).map(|i| format!("r{i}")).collect();
    let assignment: Assignment = loop {
        let a: Assignment = robots
            .iter()
            .map(|r| (r.clone(), alphabet.iter().filter(|_| rng.gen_bool(0.5)).collect::<BindingSet>()))
            .collect();
        let held = a.values().fold(BindingSet::new(), |acc, r| acc.union(r));
        if alphabet.is_subset(&held) {
            break a;
        }
    };
    let prefix = rng.gen_range(0..=4);
    let cycle = rng.gen_range(1..=4);
    let labels = robots
        .iter()
        .map(|_| (0..prefix + cycle).map(|_| labels(rng)).collect())
        .collect();
    let word = LassoWord::new(robots, labels, prefix).expect("well-formed word");
    SemanticsInstance { task, assignment, word }
}

/// Direct evaluation against automaton acceptance of the rewritten task.
pub fn semantics_agree(inst: &SemanticsInstance) -> Result<(), String> {
    let direct = satisfies(&inst.word, &inst.assignment, &inst.task, CheckOptions::default()).is_ok();
    let via_automaton = constraints_hold(&inst.assignment, &inst.task).is_ok()
        && match translate(&rewrite(&inst.task)) {
            Ok(b) => {
                let rs: Vec<&BindingSet> = inst.word.robots.iter().map(|r| &inst.assignment[r]).collect();
                b.accepts_with(inst.word.len(), inst.word.loop_start, &mut |g, i| {
                    let team: Vec<(&BindingSet, &BTreeSet<String>)> =
                        rs.iter().enumerate().map(|(j, r)| (*r, &inst.word.labels[j][i])).collect();
                    g.holds_on(&team)
                })
            }
            Err(_) => false,
        };
    if direct == via_automaton {
        Ok(())
    } else {
        Err(format!(
            "task {:?} assignment {:?} word {:?}: checker {direct}, automaton {via_automaton}",
            inst.task.normalized, inst.assignment, inst.word
        ))
    }
}

// Allocation problems.

pub fn allocation_problem(rng: &mut ChaCha8Rng) -> AllocationProblem {
    let nb = rng.gen_range(1..=4u32);
    let bindings: BindingSet = (1..=nb).map(Binding).collect();
    let all = bindings.nonempty_subsets();
    let nr = rng.gen_range(1..=5);
    let robots: Vec<String> = (0..nr).map(|i| format!("r{i}")).collect();
    let mut distinct = Vec::new();
    if nb >= 2 && rng.gen_bool(0.3) {
        let a = rng.gen_range(1..=nb);
        let b = rng.gen_range(1..=nb);
        if a != b {
            distinct.push(BindingSet::from([a, b]));
        }
    }
    // Candidate sets never contain a distinct set.
    let allowed: Vec<BindingSet> = all.iter().filter(|r| !distinct.iter().any(|d| d.is_subset(r))).cloned().collect();
    let candidates: Vec<Vec<BindingSet>> = robots
        .iter()
        .map(|_| allowed.iter().filter(|_| rng.gen_bool(0.4)).cloned().collect())
        .collect();
    let original = candidates
        .iter()
        .map(|c| {
            if rng.gen_bool(0.7) && !c.is_empty() {
                c[rng.gen_range(0..c.len())].clone()
            } else if rng.gen_bool(0.5) {
                all[rng.gen_range(0..all.len())].clone()
            } else {
                BindingSet::new()
            }
        })
        .collect();
    let mut min = BTreeMap::new();
    for b in bindings.iter() {
        if rng.gen_bool(0.3) {
            min.insert(b, rng.gen_range(1..=2));
        }
    }
    AllocationProblem {
        bindings,
        robots,
        candidates,
        original,
        min,
        distinct,
    }
}

/// Independent statement of what a valid assignment is.
pub fn assignment_valid(p: &AllocationProblem, a: &Assignment) -> Result<(), String> {
    if a.len() != p.robots.len() || p.robots.iter().any(|r| !a.contains_key(r)) {
        return Err("assignment does not list exactly the problem's robots".into());
    }
    for (i, r) in p.robots.iter().enumerate() {
        let held = &a[r];
        if !held.is_empty() && !p.candidates[i].iter().any(|c| c == held) {
            return Err(format!("{r} holds {held}, not one of its candidates"));
        }
        for d in &p.distinct {
            if d.iter().all(|b| held.contains(b)) {
                return Err(format!("{r} holds all of distinct set {d}"));
            }
        }
    }
    for b in p.bindings.iter() {
        let need = p.min.get(&b).copied().unwrap_or(1).max(1) as usize;
        let have = a.values().filter(|r| r.contains(b)).count();
        if have < need {
            return Err(format!("binding {b} held {have} times, needs {need}"));
        }
    }
    Ok(())
}

pub fn chacha(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
