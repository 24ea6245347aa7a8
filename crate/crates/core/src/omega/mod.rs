//! Büchi automata whose letters are four-part guard tuples over annotated
//! propositions, their translation from LTL, and lasso search.

mod lasso;
mod translate;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binding::{Binding, BindingSet};
use crate::schema;
use crate::spec_lang::{AnnotatedLiteral, Quantifier};

pub use lasso::{lassos, lassos_of_len, Lasso, Lassos};
pub use translate::translate;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OmegaError {
    #[error("the task has no satisfying behavior (empty automaton language)")]
    EmptyLanguage,
    #[error("inconsistent guard: {0}")]
    InconsistentGuard(String),
    #[error("malformed automaton: {0}")]
    Malformed(String),
}

/// `prop^binding`
pub type Obligation = (String, Binding);

/// One automaton letter: props that must be true for all / some robots
/// holding a binding, and props that must be false for all / some of them.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GuardTuple {
    #[serde(rename = "T", default)]
    pub t: BTreeSet<Obligation>,
    #[serde(rename = "exT", default)]
    pub ex_t: BTreeSet<Obligation>,
    #[serde(rename = "F", default)]
    pub f: BTreeSet<Obligation>,
    #[serde(rename = "exF", default)]
    pub ex_f: BTreeSet<Obligation>,
}

/// Per-binding projection of a guard, one prop set per part.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CapabilitySets {
    pub t: BTreeSet<String>,
    pub ex_t: BTreeSet<String>,
    pub f: BTreeSet<String>,
    pub ex_f: BTreeSet<String>,
}

impl GuardTuple {
    pub fn new(
        t: BTreeSet<Obligation>,
        ex_t: BTreeSet<Obligation>,
        f: BTreeSet<Obligation>,
        ex_f: BTreeSet<Obligation>,
    ) -> Result<GuardTuple, OmegaError> {
        let g = GuardTuple { t, ex_t, f, ex_f };
        g.check()?;
        Ok(g)
    }

    fn check(&self) -> Result<(), OmegaError> {
        let parts = [&self.t, &self.ex_t, &self.f, &self.ex_f];
        for (i, a) in parts.iter().enumerate() {
            for b in &parts[i + 1..] {
                if let Some(o) = a.intersection(b).next() {
                    return Err(OmegaError::InconsistentGuard(format!(
                        "{}^{} appears in two parts",
                        o.0, o.1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Guard for a conjunction of literals, or `None` if the conjunction
    /// cannot hold for a robot set where every binding has a holder.
    pub fn from_literals<'a>(
        lits: impl IntoIterator<Item = &'a AnnotatedLiteral>,
    ) -> Option<GuardTuple> {
        #[derive(Default)]
        struct Flags {
            all_t: bool,
            some_t: bool,
            all_f: bool,
            some_f: bool,
        }
        let mut flags: BTreeMap<Obligation, Flags> = BTreeMap::new();
        for l in lits {
            let e = flags.entry((l.prop.clone(), l.binding)).or_default();
            match (l.quantifier, l.positive) {
                (Quantifier::ForAll, true) => e.all_t = true,
                (Quantifier::Exists, true) => e.some_t = true,
                (Quantifier::ForAll, false) => e.all_f = true,
                (Quantifier::Exists, false) => e.some_f = true,
            }
        }
        let mut g = GuardTuple::default();
        for (o, fl) in flags {
            let wants_true = fl.all_t || fl.some_t;
            let wants_false = fl.all_f || fl.some_f;
            if wants_true && wants_false {
                return None;
            }
            if fl.all_t {
                g.t.insert(o);
            } else if fl.some_t {
                g.ex_t.insert(o);
            } else if fl.all_f {
                g.f.insert(o);
            } else if fl.some_f {
                g.ex_f.insert(o);
            }
        }
        Some(g)
    }

    pub fn literals(&self) -> Vec<AnnotatedLiteral> {
        let mk = |(p, b): &Obligation, q, pos| AnnotatedLiteral {
            prop: p.clone(),
            binding: *b,
            quantifier: q,
            positive: pos,
        };
        let mut out = Vec::new();
        out.extend(self.t.iter().map(|o| mk(o, Quantifier::ForAll, true)));
        out.extend(self.ex_t.iter().map(|o| mk(o, Quantifier::Exists, true)));
        out.extend(self.f.iter().map(|o| mk(o, Quantifier::ForAll, false)));
        out.extend(self.ex_f.iter().map(|o| mk(o, Quantifier::Exists, false)));
        out
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty() && self.ex_t.is_empty() && self.f.is_empty() && self.ex_f.is_empty()
    }

    /// Bindings mentioned anywhere in the guard.
    pub fn bindings(&self) -> BindingSet {
        [&self.t, &self.ex_t, &self.f, &self.ex_f]
            .into_iter()
            .flat_map(|s| s.iter().map(|(_, b)| *b))
            .collect()
    }

    /// The props each part demands of binding `rho`.
    pub fn project(&self, rho: Binding) -> CapabilitySets {
        let pick = |s: &BTreeSet<Obligation>| {
            s.iter()
                .filter(|(_, b)| *b == rho)
                .map(|(p, _)| p.clone())
                .collect()
        };
        CapabilitySets {
            t: pick(&self.t),
            ex_t: pick(&self.ex_t),
            f: pick(&self.f),
            ex_f: pick(&self.ex_f),
        }
    }

    /// Whether `self` is at least as strong as `other`, assuming every
    /// binding has at least one holder.
    pub fn implies(&self, other: &GuardTuple) -> bool {
        other.t.is_subset(&self.t)
            && other.f.is_subset(&self.f)
            && other.ex_t.iter().all(|o| self.t.contains(o) || self.ex_t.contains(o))
            && other.ex_f.iter().all(|o| self.f.contains(o) || self.ex_f.contains(o))
    }

    /// Evaluate the guard on one team letter: each entry is a robot's
    /// binding set and its current labels.
    pub fn holds_on(&self, team: &[(&BindingSet, &BTreeSet<String>)]) -> bool {
        let holders = |b: Binding| team.iter().filter(move |(r, _)| r.contains(b));
        self.t.iter().all(|(p, b)| holders(*b).all(|(_, l)| l.contains(p)))
            && self.ex_t.iter().all(|(p, b)| holders(*b).any(|(_, l)| l.contains(p)))
            && self.f.iter().all(|(p, b)| holders(*b).all(|(_, l)| !l.contains(p)))
            && self.ex_f.iter().all(|(p, b)| holders(*b).any(|(_, l)| !l.contains(p)))
    }
}

impl fmt::Display for GuardTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let part = |s: &BTreeSet<Obligation>| {
            let items: Vec<String> = s.iter().map(|(p, b)| format!("{p}^{b}")).collect();
            format!("{{{}}}", items.join(", "))
        };
        write!(
            f,
            "({}, {}, {}, {})",
            part(&self.t),
            part(&self.ex_t),
            part(&self.f),
            part(&self.ex_f)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuchiEdge {
    pub from: usize,
    pub to: usize,
    pub guard: GuardTuple,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuchiAutomaton {
    states: Vec<String>,
    initial: usize,
    accepting: BTreeSet<usize>,
    edges: Vec<BuchiEdge>,
    out: Vec<Vec<usize>>,
}

impl BuchiAutomaton {
    pub fn new(
        states: Vec<String>,
        initial: usize,
        accepting: BTreeSet<usize>,
        edges: Vec<BuchiEdge>,
    ) -> Result<BuchiAutomaton, OmegaError> {
        let n = states.len();
        if initial >= n {
            return Err(OmegaError::Malformed("initial state out of range".into()));
        }
        if accepting.iter().any(|z| *z >= n) {
            return Err(OmegaError::Malformed("accepting state out of range".into()));
        }
        let names: BTreeSet<&String> = states.iter().collect();
        if names.len() != n {
            return Err(OmegaError::Malformed("duplicate state name".into()));
        }
        let mut out = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            if e.from >= n || e.to >= n {
                return Err(OmegaError::Malformed(format!("edge {i} has an endpoint out of range")));
            }
            e.guard.check()?;
            out[e.from].push(i);
        }
        let b = BuchiAutomaton {
            states,
            initial,
            accepting,
            edges,
            out,
        };
        if !b.has_accepting_lasso() {
            return Err(OmegaError::EmptyLanguage);
        }
        Ok(b)
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_name(&self, z: usize) -> &str {
        &self.states[z]
    }

    pub fn state_id(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn is_accepting(&self, z: usize) -> bool {
        self.accepting.contains(&z)
    }

    pub fn accepting(&self) -> &BTreeSet<usize> {
        &self.accepting
    }

    pub fn edges(&self) -> &[BuchiEdge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> &BuchiEdge {
        &self.edges[id]
    }

    pub fn out_edges(&self, z: usize) -> &[usize] {
        &self.out[z]
    }

    pub fn is_self_loop(&self, id: usize) -> bool {
        self.edges[id].from == self.edges[id].to
    }

    /// Every binding mentioned by some guard.
    pub fn bindings(&self) -> BindingSet {
        self.edges
            .iter()
            .fold(BindingSet::new(), |acc, e| acc.union(&e.guard.bindings()))
    }

    fn reachable_from(&self, start: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(z) = queue.pop_front() {
            for &e in &self.out[z] {
                if seen.insert(self.edges[e].to) {
                    queue.push_back(self.edges[e].to);
                }
            }
        }
        seen
    }

    fn has_accepting_lasso(&self) -> bool {
        self.reachable_from(self.initial).into_iter().any(|z| {
            self.is_accepting(z)
                && self.out[z]
                    .iter()
                    .any(|&e| self.reachable_from(self.edges[e].to).contains(&z))
        })
    }

    /// Acceptance of an ultimately periodic word of length `len` whose last
    /// position is followed by `loop_start`; `letter_ok(guard, i)` says
    /// whether letter `i` satisfies a guard.
    pub fn accepts_with(
        &self,
        len: usize,
        loop_start: usize,
        letter_ok: &mut dyn FnMut(&GuardTuple, usize) -> bool,
    ) -> bool {
        let succ = |i: usize| if i + 1 < len { i + 1 } else { loop_start };
        let nz = self.states.len();
        let idx = |z: usize, i: usize| z * len + i;
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nz * len];
        let mut sat: BTreeMap<(usize, usize), bool> = BTreeMap::new();
        for z in 0..nz {
            for i in 0..len {
                for &e in &self.out[z] {
                    let ok = *sat
                        .entry((e, i))
                        .or_insert_with(|| letter_ok(&self.edges[e].guard, i));
                    if ok {
                        adj[idx(z, i)].push(idx(self.edges[e].to, succ(i)));
                    }
                }
            }
        }
        let reach = |start: usize, adj: &Vec<Vec<usize>>| {
            let mut seen = vec![false; nz * len];
            let mut stack = vec![start];
            seen[start] = true;
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
        let from_init = reach(idx(self.initial, 0), &adj);
        (0..nz * len).any(|v| {
            from_init[v]
                && self.accepting.contains(&(v / len))
                && adj[v].iter().any(|&w| reach(w, &adj)[v])
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        let edges: Vec<serde_json::Value> = self
            .edges
            .iter()
            .map(|e| {
                serde_json::json!({
                    "from": self.states[e.from],
                    "to": self.states[e.to],
                    "guard": e.guard,
                })
            })
            .collect();
        serde_json::json!({
            "schema": schema::AUTOMATON,
            "states": self.states,
            "initial": self.states[self.initial],
            "accepting": self.accepting.iter().map(|z| &self.states[*z]).collect::<Vec<_>>(),
            "edges": edges,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<BuchiAutomaton, OmegaError> {
        #[derive(Deserialize)]
        struct EdgeDoc {
            from: String,
            to: String,
            #[serde(default)]
            guard: GuardTuple,
        }
        #[derive(Deserialize)]
        struct Doc {
            schema: String,
            states: Vec<String>,
            initial: String,
            accepting: Vec<String>,
            edges: Vec<EdgeDoc>,
        }
        let doc: Doc =
            serde_json::from_value(v.clone()).map_err(|e| OmegaError::Malformed(e.to_string()))?;
        schema::check(&doc.schema, schema::AUTOMATON).map_err(OmegaError::Malformed)?;
        let id = |name: &str| {
            doc.states
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| OmegaError::Malformed(format!("unknown state `{name}`")))
        };
        let initial = id(&doc.initial)?;
        let accepting = doc.accepting.iter().map(|s| id(s)).collect::<Result<_, _>>()?;
        let edges = doc
            .edges
            .iter()
            .map(|e| {
                Ok(BuchiEdge {
                    from: id(&e.from)?,
                    to: id(&e.to)?,
                    guard: e.guard.clone(),
                })
            })
            .collect::<Result<Vec<_>, OmegaError>>()?;
        BuchiAutomaton::new(doc.states.clone(), initial, accepting, edges)
    }
}
