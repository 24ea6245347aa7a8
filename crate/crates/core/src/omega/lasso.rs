//! Accepting lassos: a simple path from the initial state followed by a
//! simple cycle through an accepting state. A lasso is addressed by layers
//! `0..len`, one per edge, where the layer after the last wraps back to the
//! start of the cycle.

use serde::{Deserialize, Serialize};

use super::BuchiAutomaton;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Lasso {
    pub prefix: Vec<usize>,
    pub cycle: Vec<usize>,
}

impl Lasso {
    pub fn len(&self) -> usize {
        self.prefix.len() + self.cycle.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First layer of the cycle.
    pub fn cycle_start(&self) -> usize {
        self.prefix.len()
    }

    /// Edge id at layer `k`.
    pub fn edge(&self, k: usize) -> usize {
        if k < self.prefix.len() {
            self.prefix[k]
        } else {
            self.cycle[k - self.prefix.len()]
        }
    }

    pub fn next_layer(&self, k: usize) -> usize {
        if k + 1 < self.len() {
            k + 1
        } else {
            self.cycle_start()
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.prefix.iter().chain(&self.cycle).copied()
    }

    pub fn is_last(&self, k: usize) -> bool {
        k + 1 == self.len()
    }
}

/// All accepting lassos of exactly `len` edges, sorted by edge ids.
pub fn lassos_of_len(b: &BuchiAutomaton, len: usize) -> Vec<Lasso> {
    let mut out = Vec::new();
    if len == 0 {
        return out;
    }
    let mut on_path = vec![false; b.num_states()];
    let mut prefix = Vec::new();
    prefixes(b, b.initial(), len, &mut on_path, &mut prefix, &mut out);
    out.sort();
    out
}

fn prefixes(
    b: &BuchiAutomaton,
    z: usize,
    len: usize,
    on_path: &mut Vec<bool>,
    prefix: &mut Vec<usize>,
    out: &mut Vec<Lasso>,
) {
    on_path[z] = true;
    // Close a cycle here with the remaining budget.
    let budget = len - prefix.len();
    let mut in_cycle = vec![false; b.num_states()];
    let mut cycle = Vec::new();
    cycles(b, z, z, budget, on_path, &mut in_cycle, &mut cycle, &mut |c| {
        out.push(Lasso {
            prefix: prefix.clone(),
            cycle: c.to_vec(),
        })
    });
    if budget > 1 {
        for &e in b.out_edges(z) {
            let to = b.edge(e).to;
            if !on_path[to] {
                prefix.push(e);
                prefixes(b, to, len, on_path, prefix, out);
                prefix.pop();
            }
        }
    }
    on_path[z] = false;
}

#[allow(clippy::too_many_arguments)]
fn cycles(
    b: &BuchiAutomaton,
    start: usize,
    z: usize,
    budget: usize,
    on_prefix: &[bool],
    in_cycle: &mut Vec<bool>,
    cycle: &mut Vec<usize>,
    emit: &mut dyn FnMut(&[usize]),
) {
    for &e in b.out_edges(z) {
        let to = b.edge(e).to;
        cycle.push(e);
        if to == start {
            if cycle.len() == budget && cycle.iter().any(|&c| b.is_accepting(b.edge(c).from)) {
                emit(cycle);
            }
        } else if cycle.len() < budget && !on_prefix[to] && !in_cycle[to] {
            in_cycle[to] = true;
            cycles(b, start, to, budget, on_prefix, in_cycle, cycle, emit);
            in_cycle[to] = false;
        }
        cycle.pop();
    }
}

/// Lassos bucketed by length, shortest first, up to `max_len` edges.
pub struct Lassos<'a> {
    b: &'a BuchiAutomaton,
    next_len: usize,
    max_len: usize,
}

impl Iterator for Lassos<'_> {
    type Item = (usize, Vec<Lasso>);

    fn next(&mut self) -> Option<Self::Item> {
        while self.next_len <= self.max_len {
            let len = self.next_len;
            self.next_len += 1;
            let bucket = lassos_of_len(self.b, len);
            if !bucket.is_empty() {
                return Some((len, bucket));
            }
        }
        None
    }
}

pub fn lassos(b: &BuchiAutomaton, max_len: usize) -> Lassos<'_> {
    Lassos {
        b,
        next_len: 1,
        max_len,
    }
}
