//! Tableau translation: formula sets as states, one transition per
//! consistent expansion, transition-based generalized acceptance (one set per
//! until-subformula), then degeneralization with a counter.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::ltl::Ltl;
use crate::spec_lang::AnnotatedLiteral;

use super::{BuchiAutomaton, BuchiEdge, GuardTuple, OmegaError};

type Formula = Ltl<AnnotatedLiteral>;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Cover {
    now: BTreeSet<AnnotatedLiteral>,
    next: BTreeSet<Formula>,
}

fn clashes(now: &BTreeSet<AnnotatedLiteral>, l: &AnnotatedLiteral) -> bool {
    now.iter().any(|m| m.prop == l.prop && m.binding == l.binding && m.positive != l.positive)
}

fn expand(
    mut todo: Vec<Formula>,
    mut seen: BTreeSet<Formula>,
    mut now: BTreeSet<AnnotatedLiteral>,
    mut next: BTreeSet<Formula>,
    out: &mut Vec<Cover>,
) {
    while let Some(f) = todo.pop() {
        if !seen.insert(f.clone()) {
            continue;
        }
        match f {
            Ltl::True => {}
            Ltl::False => return,
            Ltl::Lit(l) => {
                if clashes(&now, &l) {
                    return;
                }
                now.insert(l);
            }
            Ltl::And(a, b) => {
                todo.push(*a);
                todo.push(*b);
            }
            Ltl::Or(a, b) => {
                let mut left = todo.clone();
                left.push(*a);
                expand(left, seen.clone(), now.clone(), next.clone(), out);
                todo.push(*b);
            }
            Ltl::Until(a, b) => {
                let mut now_b = todo.clone();
                now_b.push((*b).clone());
                expand(now_b, seen.clone(), now.clone(), next.clone(), out);
                next.insert(Ltl::Until(a.clone(), b));
                todo.push(*a);
            }
            Ltl::Release(a, b) => {
                let mut both = todo.clone();
                both.push((*a).clone());
                both.push((*b).clone());
                expand(both, seen.clone(), now.clone(), next.clone(), out);
                next.insert(Ltl::Release(a, b.clone()));
                todo.push(*b);
            }
            Ltl::Not(_) | Ltl::Eventually(_) | Ltl::Always(_) => {
                unreachable!("translation input is in negation normal form")
            }
        }
    }
    out.push(Cover { now, next });
}

/// Drop covers implied by a weaker one: fewer literals now and fewer
/// obligations next also means every until it fulfils is fulfilled.
fn minimal_covers(mut covers: Vec<Cover>) -> Vec<Cover> {
    covers.sort();
    covers.dedup();
    let weaker = |a: &Cover, b: &Cover| a.now.is_subset(&b.now) && a.next.is_subset(&b.next);
    (0..covers.len())
        .filter(|&i| !(0..covers.len()).any(|j| j != i && weaker(&covers[j], &covers[i])))
        .map(|i| covers[i].clone())
        .collect()
}

fn collect_untils(f: &Formula, out: &mut BTreeSet<Formula>) {
    match f {
        Ltl::True | Ltl::False | Ltl::Lit(_) => {}
        Ltl::Until(a, b) => {
            out.insert(f.clone());
            collect_untils(a, out);
            collect_untils(b, out);
        }
        Ltl::And(a, b) | Ltl::Or(a, b) | Ltl::Release(a, b) => {
            collect_untils(a, out);
            collect_untils(b, out);
        }
        Ltl::Not(a) | Ltl::Eventually(a) | Ltl::Always(a) => collect_untils(a, out),
    }
}

struct GenEdge {
    from: usize,
    to: usize,
    guard: GuardTuple,
    acc: Vec<bool>,
}

/// Translate an LTL formula over annotated literals into a state-based
/// Büchi automaton with guard-tuple letters.
pub fn translate(f: &Formula) -> Result<BuchiAutomaton, OmegaError> {
    let f = f.nnf();
    let mut untils = BTreeSet::new();
    collect_untils(&f, &mut untils);
    let untils: Vec<Formula> = untils.into_iter().collect();

    // Generalized automaton over obligation sets.
    let mut ids: BTreeMap<BTreeSet<Formula>, usize> = BTreeMap::new();
    let mut sets: Vec<BTreeSet<Formula>> = Vec::new();
    let mut intern = |s: BTreeSet<Formula>, sets: &mut Vec<BTreeSet<Formula>>| -> usize {
        *ids.entry(s.clone()).or_insert_with(|| {
            sets.push(s);
            sets.len() - 1
        })
    };
    let start: BTreeSet<Formula> = [f].into_iter().filter(|x| *x != Ltl::True).collect();
    let init = intern(start, &mut sets);
    let mut gen_edges: Vec<GenEdge> = Vec::new();
    let mut queue = VecDeque::from([init]);
    let mut done = BTreeSet::new();
    while let Some(s) = queue.pop_front() {
        if !done.insert(s) {
            continue;
        }
        let mut covers = Vec::new();
        expand(sets[s].iter().cloned().collect(), BTreeSet::new(), BTreeSet::new(), BTreeSet::new(), &mut covers);
        for c in minimal_covers(covers) {
            let Some(guard) = GuardTuple::from_literals(&c.now) else {
                continue;
            };
            let acc = untils.iter().map(|u| !c.next.contains(u)).collect();
            let to = intern(c.next, &mut sets);
            queue.push_back(to);
            gen_edges.push(GenEdge {
                from: s,
                to,
                guard,
                acc,
            });
        }
    }

    // Degeneralize: state (set, counter), accepting when counter == n.
    let n = untils.len();
    let advance = |c: usize, acc: &[bool]| {
        let mut j = if c == n { 0 } else { c };
        while j < n && acc[j] {
            j += 1;
        }
        j
    };
    let mut deg_ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut deg_states: Vec<(usize, usize)> = Vec::new();
    let mut edges: Vec<(usize, usize, GuardTuple)> = Vec::new();
    let mut queue = VecDeque::from([(init, 0usize)]);
    deg_ids.insert((init, 0), 0);
    deg_states.push((init, 0));
    while let Some((s, c)) = queue.pop_front() {
        let from = deg_ids[&(s, c)];
        for e in gen_edges.iter().filter(|e| e.from == s) {
            let key = (e.to, advance(c, &e.acc));
            let to = *deg_ids.entry(key).or_insert_with(|| {
                deg_states.push(key);
                queue.push_back(key);
                deg_states.len() - 1
            });
            edges.push((from, to, e.guard.clone()));
        }
    }
    let accepting: BTreeSet<usize> = deg_states
        .iter()
        .enumerate()
        .filter(|(_, (_, c))| *c == n)
        .map(|(i, _)| i)
        .collect();

    let edges = irredundant(edges);
    let (states, initial, accepting, edges) = prune(deg_states.len(), 0, &accepting, edges)?;
    BuchiAutomaton::new(states, initial, accepting, edges)
}

/// Between each pair of states keep only the weakest guards.
fn irredundant(mut edges: Vec<(usize, usize, GuardTuple)>) -> Vec<(usize, usize, GuardTuple)> {
    edges.sort();
    edges.dedup();
    let mut out: Vec<(usize, usize, GuardTuple)> = Vec::new();
    let mut i = 0;
    while i < edges.len() {
        let mut j = i;
        while j < edges.len() && edges[j].0 == edges[i].0 && edges[j].1 == edges[i].1 {
            j += 1;
        }
        let group = &edges[i..j];
        for (k, e) in group.iter().enumerate() {
            let subsumed = group
                .iter()
                .enumerate()
                .any(|(m, o)| m != k && e.2.implies(&o.2) && !(o.2.implies(&e.2) && m > k));
            if !subsumed {
                out.push(e.clone());
            }
        }
        i = j;
    }
    out
}

type Pruned = (Vec<String>, usize, BTreeSet<usize>, Vec<BuchiEdge>);

/// Drop states that are unreachable or cannot reach an accepting cycle, and
/// renumber the rest in breadth-first order.
fn prune(
    n: usize,
    initial: usize,
    accepting: &BTreeSet<usize>,
    edges: Vec<(usize, usize, GuardTuple)>,
) -> Result<Pruned, OmegaError> {
    let mut succ = vec![Vec::new(); n];
    let mut pred = vec![Vec::new(); n];
    for (f, t, _) in &edges {
        succ[*f].push(*t);
        pred[*t].push(*f);
    }
    let reach = |start: &[usize], adj: &Vec<Vec<usize>>| {
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = start.to_vec();
        for &s in start {
            seen[s] = true;
        }
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    };
    // Accepting states on a cycle.
    let on_cycle: Vec<usize> = accepting
        .iter()
        .copied()
        .filter(|&a| reach(&succ[a], &succ)[a])
        .collect();
    if on_cycle.is_empty() {
        return Err(OmegaError::EmptyLanguage);
    }
    let co_reach = reach(&on_cycle, &pred);
    let fwd = reach(&[initial], &succ);
    if !co_reach[initial] {
        return Err(OmegaError::EmptyLanguage);
    }
    let keep = |v: usize| co_reach[v] && fwd[v];

    let mut order = vec![usize::MAX; n];
    let mut names = Vec::new();
    let mut queue = VecDeque::from([initial]);
    order[initial] = 0;
    names.push("0".to_string());
    let mut sorted_edges = edges;
    sorted_edges.sort();
    while let Some(v) = queue.pop_front() {
        for (f, t, _) in sorted_edges.iter() {
            if *f == v && keep(*t) && order[*t] == usize::MAX {
                order[*t] = names.len();
                names.push(names.len().to_string());
                queue.push_back(*t);
            }
        }
    }
    let mut out: Vec<BuchiEdge> = sorted_edges
        .into_iter()
        .filter(|(f, t, _)| keep(*f) && keep(*t))
        .map(|(f, t, g)| BuchiEdge {
            from: order[f],
            to: order[t],
            guard: g,
        })
        .collect();
    out.sort_by(|a, b| (a.from, a.to, &a.guard).cmp(&(b.from, b.to, &b.guard)));
    let acc = accepting
        .iter()
        .filter(|a| keep(**a))
        .map(|a| order[*a])
        .collect();
    Ok((names, 0, acc, out))
}
