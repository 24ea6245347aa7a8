//! Greedy binding (re)allocation under minimum-count and distinctness
//! constraints, preferring each robot's previous assignment, and an
//! exhaustive allocator used as an oracle.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binding::{Binding, BindingSet};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationProblem {
    pub bindings: BindingSet,
    /// Robot names, in a fixed order shared by `candidates` and `original`.
    pub robots: Vec<String>,
    pub candidates: Vec<Vec<BindingSet>>,
    pub original: Vec<BindingSet>,
    #[serde(default)]
    pub min: BTreeMap<Binding, u32>,
    #[serde(default)]
    pub distinct: Vec<BindingSet>,
}

pub type Assignment = BTreeMap<String, BindingSet>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AllocError {
    #[error("exhaustive allocation supports at most {max_robots} robots and {max_bindings} bindings, got {robots} and {bindings}")]
    TooLarge {
        robots: usize,
        bindings: usize,
        max_robots: usize,
        max_bindings: usize,
    },
}

/// How each robot was picked, for logs and tests.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Pick {
    /// The previous assignment was already valid and is kept as a whole.
    Unchanged,
    Unique { robot: String, unique: BindingSet },
    LeastFlexible { robot: String },
    Any { robot: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AllocationOutcome {
    pub assignment: Option<Assignment>,
    pub picks: Vec<Pick>,
}

impl AllocationProblem {
    pub fn original_assignment(&self) -> Assignment {
        self.robots.iter().cloned().zip(self.original.iter().cloned()).collect()
    }

    /// Check an assignment against coverage, minimum counts, distinctness
    /// and per-robot feasibility.
    pub fn check(&self, a: &Assignment) -> Result<(), String> {
        for (i, robot) in self.robots.iter().enumerate() {
            let r = a.get(robot).ok_or_else(|| format!("robot {robot} missing"))?;
            if !r.is_empty() && !self.candidates[i].contains(r) {
                return Err(format!("robot {robot} cannot hold {r}"));
            }
            if let Some(c) = self.distinct.iter().find(|c| c.is_subset(r)) {
                return Err(format!("robot {robot} holds {r}, which contains distinct set {c}"));
            }
        }
        for rho in self.bindings.iter() {
            let holders = a.values().filter(|r| r.contains(rho)).count();
            let need = self.min.get(&rho).copied().unwrap_or(1).max(1) as usize;
            if holders < need {
                return Err(format!("binding {rho} held by {holders} robots, needs {need}"));
            }
        }
        Ok(())
    }
}

pub fn changed_robots(before: &Assignment, after: &Assignment) -> Vec<String> {
    after
        .iter()
        .filter(|(k, v)| before.get(*k).map(|b| b != *v).unwrap_or(!v.is_empty()))
        .map(|(k, _)| k.clone())
        .collect()
}

fn rand_of<T: Clone + Ord>(rng: &mut ChaCha8Rng, mut items: Vec<T>) -> Option<T> {
    if items.is_empty() {
        return None;
    }
    items.sort();
    let i = rng.gen_range(0..items.len());
    Some(items.swap_remove(i))
}

fn largest(rng: &mut ChaCha8Rng, sets: &[BindingSet]) -> BindingSet {
    let max = sets.iter().map(|r| r.len()).max().unwrap_or(0);
    rand_of(rng, sets.iter().filter(|r| r.len() == max).cloned().collect()).unwrap_or_default()
}

fn prefer(original: &BindingSet, admissible: &[BindingSet], rng: &mut ChaCha8Rng) -> BindingSet {
    if !original.is_empty() && admissible.contains(original) {
        original.clone()
    } else {
        largest(rng, admissible)
    }
}

/// The greedy allocator.
pub fn allocate(p: &AllocationProblem, seed: u64) -> Option<Assignment> {
    allocate_traced(p, seed).assignment
}

pub fn allocate_traced(p: &AllocationProblem, seed: u64) -> AllocationOutcome {
    let original = p.original_assignment();
    if !p.original.iter().all(|r| r.is_empty()) && p.check(&original).is_ok() {
        return AllocationOutcome {
            assignment: Some(original),
            picks: vec![Pick::Unchanged],
        };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unassigned = p.bindings.clone();
    let mut min = p.min.clone();
    let mut remaining: Vec<usize> = (0..p.robots.len()).collect();
    let mut out = Assignment::new();
    let mut picks = Vec::new();
    let support = |j: usize| -> BindingSet {
        p.candidates[j].iter().fold(BindingSet::new(), |acc, r| acc.union(r))
    };

    while !remaining.is_empty() {
        // Bindings still needed that only one remaining robot can take.
        let uniques: Vec<(usize, BindingSet)> = remaining
            .iter()
            .map(|&j| {
                let others = remaining
                    .iter()
                    .filter(|&&k| k != j)
                    .fold(BindingSet::new(), |acc, &k| acc.union(&support(k)));
                (j, support(j).intersection(&unassigned).difference(&others))
            })
            .filter(|(_, u)| !u.is_empty())
            .collect();

        let (j, r_new) = if let Some((j, unique)) = rand_of(&mut rng, uniques) {
            let mut admissible: Vec<BindingSet> =
                p.candidates[j].iter().filter(|r| unique.is_subset(r)).cloned().collect();
            if admissible.is_empty() {
                // The unique bindings are spread over several sets; keep the
                // sets that cover the most of them.
                let best = p.candidates[j].iter().map(|r| r.intersection(&unique).len()).max().unwrap_or(0);
                admissible = p.candidates[j]
                    .iter()
                    .filter(|r| r.intersection(&unique).len() == best)
                    .cloned()
                    .collect();
            }
            picks.push(Pick::Unique {
                robot: p.robots[j].clone(),
                unique,
            });
            (j, prefer(&p.original[j], &admissible, &mut rng))
        } else {
            let useful: Vec<usize> = remaining
                .iter()
                .copied()
                .filter(|&j| p.candidates[j].iter().any(|r| r.intersects(&unassigned)))
                .collect();
            if let Some(fewest) = useful.iter().map(|&j| p.candidates[j].len()).min() {
                let tied: Vec<usize> =
                    useful.into_iter().filter(|&j| p.candidates[j].len() == fewest).collect();
                let j = rand_of(&mut rng, tied).expect("nonempty");
                let admissible: Vec<BindingSet> = p.candidates[j]
                    .iter()
                    .filter(|r| r.intersects(&unassigned))
                    .cloned()
                    .collect();
                picks.push(Pick::LeastFlexible {
                    robot: p.robots[j].clone(),
                });
                (j, prefer(&p.original[j], &admissible, &mut rng))
            } else {
                let j = rand_of(&mut rng, remaining.clone()).expect("nonempty");
                picks.push(Pick::Any {
                    robot: p.robots[j].clone(),
                });
                (j, prefer(&p.original[j], &p.candidates[j], &mut rng))
            }
        };

        remaining.retain(|&k| k != j);
        for rho in r_new.iter() {
            if let Some(k) = min.get_mut(&rho) {
                *k = k.saturating_sub(1);
                if *k == 0 {
                    min.remove(&rho);
                }
            }
            if !min.contains_key(&rho) {
                unassigned.remove(rho);
            }
        }
        out.insert(p.robots[j].clone(), r_new);
    }

    AllocationOutcome {
        assignment: unassigned.is_empty().then_some(out),
        picks,
    }
}

pub const OPTIMAL_MAX_ROBOTS: usize = 6;
pub const OPTIMAL_MAX_BINDINGS: usize = 4;

/// Exhaustive search for a valid assignment changing the fewest robots.
pub fn allocate_optimal(p: &AllocationProblem) -> Result<Option<Assignment>, AllocError> {
    if p.robots.len() > OPTIMAL_MAX_ROBOTS || p.bindings.len() > OPTIMAL_MAX_BINDINGS {
        return Err(AllocError::TooLarge {
            robots: p.robots.len(),
            bindings: p.bindings.len(),
            max_robots: OPTIMAL_MAX_ROBOTS,
            max_bindings: OPTIMAL_MAX_BINDINGS,
        });
    }
    let options: Vec<Vec<BindingSet>> = p
        .candidates
        .iter()
        .zip(&p.original)
        .map(|(rs, orig)| {
            // Try the previous assignment first, then the empty set, then the rest.
            let mut v: Vec<BindingSet> = Vec::new();
            if rs.contains(orig) || orig.is_empty() {
                v.push(orig.clone());
            }
            for r in std::iter::once(BindingSet::new()).chain(rs.iter().cloned()) {
                if !v.contains(&r) {
                    v.push(r);
                }
            }
            v
        })
        .collect();
    let mut best: Option<(usize, Vec<BindingSet>)> = None;
    let mut current = Vec::new();
    search(p, &options, &mut current, 0, &mut best);
    Ok(best.map(|(_, v)| p.robots.iter().cloned().zip(v).collect()))
}

fn search(
    p: &AllocationProblem,
    options: &[Vec<BindingSet>],
    current: &mut Vec<BindingSet>,
    changes: usize,
    best: &mut Option<(usize, Vec<BindingSet>)>,
) {
    if let Some((b, _)) = best {
        if changes >= *b {
            return;
        }
    }
    let j = current.len();
    if j == options.len() {
        let a: Assignment = p.robots.iter().cloned().zip(current.iter().cloned()).collect();
        if p.check(&a).is_ok() {
            *best = Some((changes, current.clone()));
        }
        return;
    }
    for r in &options[j] {
        let delta = usize::from(*r != p.original[j]);
        current.push(r.clone());
        search(p, options, current, changes + delta, best);
        current.pop();
    }
}
