//! Direct evaluation of a task on an ultimately periodic team word and a
//! binding assignment, used as the reference semantics.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::alloc::Assignment;
use crate::binding::BindingSet;
use crate::ltl::{eval_lasso, release_fixpoint, until_fixpoint, LassoShape};
use crate::spec_lang::{zeta, AtomicBlock, NegStyle, PropLit, Task, TaskFormula};

/// Per-robot label sequences sharing one loop point. Position 0 is the
/// first step of execution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LassoWord {
    pub robots: Vec<String>,
    /// `labels[j][i]`: props true for robot `j` at position `i`.
    pub labels: Vec<Vec<BTreeSet<String>>>,
    pub loop_start: usize,
}

impl LassoWord {
    pub fn new(robots: Vec<String>, labels: Vec<Vec<BTreeSet<String>>>, loop_start: usize) -> Result<Self, String> {
        if robots.len() != labels.len() {
            return Err(format!("{} robots but {} label rows", robots.len(), labels.len()));
        }
        let len = labels.first().map(|r| r.len()).unwrap_or(0);
        if len == 0 {
            return Err("empty word".into());
        }
        if labels.iter().any(|r| r.len() != len) {
            return Err("robots disagree on word length".into());
        }
        if loop_start >= len {
            return Err(format!("loop start {loop_start} outside word of length {len}"));
        }
        Ok(LassoWord {
            robots,
            labels,
            loop_start,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.first().map(|r| r.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> LassoShape {
        LassoShape::new(self.len(), self.loop_start)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CheckOptions {
    /// Read `G a` at `i` as "a at every position after `i`".
    pub strict_always: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    /// Word position, or `None` for the binding constraints.
    pub position: Option<usize>,
    pub subformula: String,
    pub reason: String,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.position {
            Some(i) => write!(f, "at position {i}: {} fails: {}", self.subformula, self.reason),
            None => write!(f, "{} fails: {}", self.subformula, self.reason),
        }
    }
}

fn held(assignment: &Assignment, robot: &str) -> BindingSet {
    assignment.get(robot).cloned().unwrap_or_default()
}

/// The `cdistinct` and `cmin` constraints, which do not depend on time.
pub fn constraints_hold(assignment: &Assignment, task: &Task) -> Result<(), Counterexample> {
    for (robot, r) in assignment {
        if let Some(c) = task.distinct.iter().find(|c| c.is_subset(r)) {
            return Err(Counterexample {
                position: None,
                subformula: format!("cdistinct {c}"),
                reason: format!("robot {robot} holds {r}"),
            });
        }
    }
    for (rho, k) in &task.min {
        let n = assignment.values().filter(|r| r.contains(*rho)).count();
        if n < *k as usize {
            return Err(Counterexample {
                position: None,
                subformula: format!("cmin ({rho}, {k})"),
                reason: format!("only {n} robots hold binding {rho}"),
            });
        }
    }
    Ok(())
}

/// Truth of a block's action formula per robot and position.
fn phi_values(word: &LassoWord, phi: &crate::ltl::Ltl<PropLit>, opts: CheckOptions) -> Vec<Vec<bool>> {
    (0..word.robots.len())
        .map(|j| {
            eval_lasso(phi, word.shape(), opts.strict_always, &mut |l: &PropLit, i| {
                word.labels[j][i].contains(&l.prop) == l.positive
            })
        })
        .collect()
}

/// A block's value at every position when the binding set `k` is fixed.
pub fn block_with(
    word: &LassoWord,
    assignment: &Assignment,
    block: &AtomicBlock,
    k: &BindingSet,
    opts: CheckOptions,
) -> Vec<bool> {
    let union = assignment.values().fold(BindingSet::new(), |acc, r| acc.union(r));
    if !k.is_subset(&union) {
        return vec![false; word.len()];
    }
    let phi = phi_values(word, &block.phi, opts);
    let involved: Vec<usize> = (0..word.robots.len())
        .filter(|&j| held(assignment, &word.robots[j]).intersects(k))
        .collect();
    (0..word.len())
        .map(|i| match block.style {
            NegStyle::Plain => involved.iter().all(|&j| phi[j][i]),
            NegStyle::InnerNeg => involved.iter().all(|&j| !phi[j][i]),
            NegStyle::OuterNeg => involved.iter().any(|&j| !phi[j][i]),
        })
        .collect()
}

/// A block's value at every position: some binding set of `zeta` works.
pub fn block_values(
    word: &LassoWord,
    assignment: &Assignment,
    block: &AtomicBlock,
    alphabet: &BindingSet,
    opts: CheckOptions,
) -> Vec<bool> {
    let mut out = vec![false; word.len()];
    for k in zeta(&block.psi, alphabet) {
        for (o, v) in out.iter_mut().zip(block_with(word, assignment, block, &k, opts)) {
            *o |= v;
        }
    }
    out
}

struct Eval<'a> {
    word: &'a LassoWord,
    assignment: &'a Assignment,
    alphabet: BindingSet,
    opts: CheckOptions,
    memo: HashMap<*const TaskFormula, Vec<bool>>,
}

impl Eval<'_> {
    fn values(&mut self, f: &TaskFormula) -> Vec<bool> {
        let key = f as *const TaskFormula;
        if let Some(v) = self.memo.get(&key) {
            return v.clone();
        }
        let shape = self.word.shape();
        let n = shape.len;
        let v = match f {
            TaskFormula::Block(b) => block_values(self.word, self.assignment, b, &self.alphabet, self.opts),
            TaskFormula::Not(a) => self.values(a).into_iter().map(|x| !x).collect(),
            TaskFormula::And(a, b) => {
                let (va, vb) = (self.values(a), self.values(b));
                va.iter().zip(&vb).map(|(x, y)| *x && *y).collect()
            }
            TaskFormula::Or(a, b) => {
                let (va, vb) = (self.values(a), self.values(b));
                va.iter().zip(&vb).map(|(x, y)| *x || *y).collect()
            }
            TaskFormula::Until(a, b) => {
                let (va, vb) = (self.values(a), self.values(b));
                until_fixpoint(&va, &vb, shape)
            }
            TaskFormula::Release(a, b) => {
                let (va, vb) = (self.values(a), self.values(b));
                release_fixpoint(&va, &vb, shape)
            }
            TaskFormula::Eventually(a) => {
                let va = self.values(a);
                until_fixpoint(&vec![true; n], &va, shape)
            }
            TaskFormula::Always(a) => {
                let va = self.values(a);
                let g = release_fixpoint(&vec![false; n], &va, shape);
                if self.opts.strict_always {
                    (0..n).map(|i| g[shape.succ(i)]).collect()
                } else {
                    g
                }
            }
        };
        self.memo.insert(key, v.clone());
        v
    }

    /// Positions from `i` on in visiting order, each once.
    fn from(&self, i: usize) -> Vec<usize> {
        let shape = self.word.shape();
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let mut j = i;
        while seen.insert(j) {
            out.push(j);
            j = shape.succ(j);
        }
        out
    }

    /// Why `f` is false at `i`.
    fn explain(&mut self, f: &TaskFormula, i: usize) -> Counterexample {
        let here = |reason: String| Counterexample {
            position: Some(i),
            subformula: f.to_string(),
            reason,
        };
        match f {
            TaskFormula::And(a, b) => {
                if !self.values(a)[i] {
                    self.explain(a, i)
                } else {
                    self.explain(b, i)
                }
            }
            TaskFormula::Always(a) => {
                let va = self.values(a);
                let mut order = self.from(i);
                if self.opts.strict_always {
                    order = self.from(self.word.shape().succ(i));
                }
                match order.into_iter().find(|&j| !va[j]) {
                    Some(j) => self.explain(a, j),
                    None => here("never holds".into()),
                }
            }
            TaskFormula::Release(a, b) => {
                let (va, vb) = (self.values(a), self.values(b));
                for j in self.from(i) {
                    if !vb[j] {
                        return self.explain(b, j);
                    }
                    if va[j] {
                        break;
                    }
                }
                here("released too late".into())
            }
            TaskFormula::Block(b) => here(self.block_reason(b, i)),
            TaskFormula::Eventually(_) => here("never holds from here on".into()),
            TaskFormula::Until(_, _) => here("right side never reached while left side holds".into()),
            TaskFormula::Or(_, _) => here("neither side holds".into()),
            TaskFormula::Not(_) => here("negated formula holds".into()),
        }
    }

    fn block_reason(&self, b: &AtomicBlock, i: usize) -> String {
        let union = self.assignment.values().fold(BindingSet::new(), |acc, r| acc.union(r));
        let phi = phi_values(self.word, &b.phi, self.opts);
        let mut parts = Vec::new();
        for k in zeta(&b.psi, &self.alphabet) {
            if !k.is_subset(&union) {
                parts.push(format!("{k} is not assigned"));
                continue;
            }
            let involved: Vec<&String> = self
                .word
                .robots
                .iter()
                .enumerate()
                .filter(|(j, robot)| {
                    held(self.assignment, robot).intersects(&k)
                        && match b.style {
                            NegStyle::Plain => !phi[*j][i],
                            NegStyle::InnerNeg => phi[*j][i],
                            NegStyle::OuterNeg => true,
                        }
                })
                .map(|(_, r)| r)
                .collect();
            let names: Vec<&str> = involved.iter().map(|s| s.as_str()).collect();
            match b.style {
                NegStyle::OuterNeg => parts.push(format!("every holder of {k} satisfies the body ({})", names.join(", "))),
                _ => parts.push(format!("with {k}, robots {} disagree", names.join(", "))),
            }
        }
        parts.join("; ")
    }
}

/// Whether the word and assignment satisfy the task at position 0.
pub fn satisfies(
    word: &LassoWord,
    assignment: &Assignment,
    task: &Task,
    opts: CheckOptions,
) -> Result<(), Counterexample> {
    constraints_hold(assignment, task)?;
    let mut ev = Eval {
        word,
        assignment,
        alphabet: task.bindings(),
        opts,
        memo: HashMap::new(),
    };
    if ev.values(&task.normalized)[0] {
        Ok(())
    } else {
        Err(ev.explain(&task.normalized, 0))
    }
}
