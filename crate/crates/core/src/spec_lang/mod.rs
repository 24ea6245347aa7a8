//! Task language: action formulas annotated with binding formulas, plus the
//! `cdistinct` / `cmin` constraints.

mod parser;
mod rewrite;
mod zeta;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binding::{Binding, BindingSet};
use crate::ltl::{Literal, Ltl};

pub use parser::parse_task;
pub use rewrite::rewrite;
pub use zeta::{minimal_models, zeta};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpecError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: negation is not allowed inside a binding formula")]
    NegatedBinding { line: usize, col: usize },
    #[error("{line}:{col}: empty binding formula")]
    EmptyBinding { line: usize, col: usize },
    #[error("{line}:{col}: unknown escape sequence")]
    UnknownEscape { line: usize, col: usize },
    #[error("{line}:{col}: binding annotations cannot be nested")]
    NestedAnnotation { line: usize, col: usize },
    #[error("{line}:{col}: `{what}` must appear inside a binding annotation")]
    Unannotated { line: usize, col: usize, what: String },
    #[error("negation nested deeper than one level around block {block}")]
    NestedNegation { block: String },
    #[error("invalid constraint: {0}")]
    Constraint(String),
}

/// An action proposition with a sign, as it appears inside a block.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PropLit {
    pub prop: String,
    pub positive: bool,
}

impl PropLit {
    pub fn pos(prop: impl Into<String>) -> Self {
        PropLit {
            prop: prop.into(),
            positive: true,
        }
    }
}

impl Literal for PropLit {
    fn negate(&self) -> Self {
        PropLit {
            prop: self.prop.clone(),
            positive: !self.positive,
        }
    }
}

impl fmt::Display for PropLit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.positive {
            write!(f, "{}", self.prop)
        } else {
            write!(f, "!{}", self.prop)
        }
    }
}

/// The action formula of a block: LTL over action propositions.
pub type ActionFormula = Ltl<PropLit>;

/// Negation-free Boolean formula over bindings.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BindingFormula {
    Var(Binding),
    And(Box<BindingFormula>, Box<BindingFormula>),
    Or(Box<BindingFormula>, Box<BindingFormula>),
}

impl BindingFormula {
    pub fn var(b: u32) -> Self {
        BindingFormula::Var(Binding(b))
    }

    pub fn and(a: Self, b: Self) -> Self {
        BindingFormula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Self, b: Self) -> Self {
        BindingFormula::Or(Box::new(a), Box::new(b))
    }

    pub fn eval(&self, set: &BindingSet) -> bool {
        match self {
            BindingFormula::Var(b) => set.contains(*b),
            BindingFormula::And(a, b) => a.eval(set) && b.eval(set),
            BindingFormula::Or(a, b) => a.eval(set) || b.eval(set),
        }
    }

    pub fn bindings(&self) -> BindingSet {
        match self {
            BindingFormula::Var(b) => BindingSet::singleton(*b),
            BindingFormula::And(a, b) | BindingFormula::Or(a, b) => a.bindings().union(&b.bindings()),
        }
    }
}

impl fmt::Display for BindingFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BindingFormula::Var(b) => write!(f, "{b}"),
            BindingFormula::And(a, b) => write!(f, "({a} & {b})"),
            BindingFormula::Or(a, b) => write!(f, "({a} | {b})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegStyle {
    /// `(phi)@{psi}`
    Plain,
    /// `(!phi)@{psi}`; `phi` is stored without the leading negation.
    InnerNeg,
    /// `!((phi)@{psi})`
    OuterNeg,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AtomicBlock {
    pub phi: ActionFormula,
    pub psi: BindingFormula,
    pub style: NegStyle,
}

impl AtomicBlock {
    pub fn plain(phi: ActionFormula, psi: BindingFormula) -> Self {
        AtomicBlock {
            phi,
            psi,
            style: NegStyle::Plain,
        }
    }

    /// Block-level negation, or `None` when that would need a second level.
    pub fn negated(&self) -> Option<AtomicBlock> {
        let phi = match self.style {
            NegStyle::Plain => self.phi.clone(),
            NegStyle::InnerNeg => Ltl::not(self.phi.clone()),
            NegStyle::OuterNeg => return None,
        };
        Some(AtomicBlock {
            phi,
            psi: self.psi.clone(),
            style: NegStyle::OuterNeg,
        })
    }
}

impl fmt::Display for AtomicBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.style {
            NegStyle::Plain => write!(f, "({})@{{{}}}", self.phi, self.psi),
            NegStyle::InnerNeg => write!(f, "(!{})@{{{}}}", self.phi, self.psi),
            NegStyle::OuterNeg => write!(f, "!(({})@{{{}}})", self.phi, self.psi),
        }
    }
}

/// Task-level formula. After normalization `Not` no longer occurs; negation
/// lives only in block styles.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskFormula {
    Block(AtomicBlock),
    Not(Box<TaskFormula>),
    And(Box<TaskFormula>, Box<TaskFormula>),
    Or(Box<TaskFormula>, Box<TaskFormula>),
    Until(Box<TaskFormula>, Box<TaskFormula>),
    Release(Box<TaskFormula>, Box<TaskFormula>),
    Eventually(Box<TaskFormula>),
    Always(Box<TaskFormula>),
}

impl TaskFormula {
    pub fn block(b: AtomicBlock) -> Self {
        TaskFormula::Block(b)
    }

    pub fn not(a: Self) -> Self {
        TaskFormula::Not(Box::new(a))
    }

    pub fn and(a: Self, b: Self) -> Self {
        TaskFormula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Self, b: Self) -> Self {
        TaskFormula::Or(Box::new(a), Box::new(b))
    }

    pub fn until(a: Self, b: Self) -> Self {
        TaskFormula::Until(Box::new(a), Box::new(b))
    }

    pub fn eventually(a: Self) -> Self {
        TaskFormula::Eventually(Box::new(a))
    }

    pub fn always(a: Self) -> Self {
        TaskFormula::Always(Box::new(a))
    }

    pub fn blocks(&self) -> Vec<&AtomicBlock> {
        let mut out = Vec::new();
        self.collect_blocks(&mut out);
        out
    }

    fn collect_blocks<'a>(&'a self, out: &mut Vec<&'a AtomicBlock>) {
        match self {
            TaskFormula::Block(b) => out.push(b),
            TaskFormula::Not(a) | TaskFormula::Eventually(a) | TaskFormula::Always(a) => {
                a.collect_blocks(out)
            }
            TaskFormula::And(a, b)
            | TaskFormula::Or(a, b)
            | TaskFormula::Until(a, b)
            | TaskFormula::Release(a, b) => {
                a.collect_blocks(out);
                b.collect_blocks(out);
            }
        }
    }

    /// Push task-level negations down to the blocks.
    pub fn normalize(&self) -> Result<TaskFormula, SpecError> {
        self.normalize_signed(true)
    }

    fn normalize_signed(&self, positive: bool) -> Result<TaskFormula, SpecError> {
        use TaskFormula as T;
        let bin = |ctor: fn(Box<T>, Box<T>) -> T, a: &T, b: &T| -> Result<T, SpecError> {
            Ok(ctor(
                Box::new(a.normalize_signed(positive)?),
                Box::new(b.normalize_signed(positive)?),
            ))
        };
        match (self, positive) {
            (T::Block(b), true) => Ok(T::Block(b.clone())),
            (T::Block(b), false) => b.negated().map(T::Block).ok_or_else(|| SpecError::NestedNegation {
                block: b.to_string(),
            }),
            (T::Not(a), p) => a.normalize_signed(!p),
            (T::And(a, b), true) | (T::Or(a, b), false) => bin(T::And, a, b),
            (T::Or(a, b), true) | (T::And(a, b), false) => bin(T::Or, a, b),
            (T::Until(a, b), true) | (T::Release(a, b), false) => bin(T::Until, a, b),
            (T::Release(a, b), true) | (T::Until(a, b), false) => bin(T::Release, a, b),
            (T::Eventually(a), true) | (T::Always(a), false) => {
                Ok(T::Eventually(Box::new(a.normalize_signed(positive)?)))
            }
            (T::Always(a), true) | (T::Eventually(a), false) => {
                Ok(T::Always(Box::new(a.normalize_signed(positive)?)))
            }
        }
    }
}

impl fmt::Display for TaskFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskFormula::Block(b) => write!(f, "{b}"),
            TaskFormula::Not(a) => write!(f, "!({a})"),
            TaskFormula::And(a, b) => write!(f, "({a} & {b})"),
            TaskFormula::Or(a, b) => write!(f, "({a} | {b})"),
            TaskFormula::Until(a, b) => write!(f, "({a} U {b})"),
            TaskFormula::Release(a, b) => write!(f, "({a} R {b})"),
            TaskFormula::Eventually(a) => write!(f, "F({a})"),
            TaskFormula::Always(a) => write!(f, "G({a})"),
        }
    }
}

/// A validated task: formula plus binding constraints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Task {
    pub formula: TaskFormula,
    pub normalized: TaskFormula,
    pub distinct: Vec<BindingSet>,
    pub min: BTreeMap<Binding, u32>,
}

impl Task {
    pub fn new(
        formula: TaskFormula,
        distinct: Vec<BindingSet>,
        min: BTreeMap<Binding, u32>,
    ) -> Result<Task, SpecError> {
        let normalized = formula.normalize()?;
        let alphabet = binding_alphabet(&formula);
        for c in &distinct {
            if c.len() < 2 {
                return Err(SpecError::Constraint(format!(
                    "cdistinct set {c} needs at least two bindings"
                )));
            }
        }
        for (b, k) in &min {
            if *k == 0 {
                return Err(SpecError::Constraint(format!("cmin for {b} must be positive")));
            }
            if !alphabet.contains(*b) {
                return Err(SpecError::Constraint(format!(
                    "cmin references binding {b}, which no annotation uses"
                )));
            }
        }
        Ok(Task {
            formula,
            normalized,
            distinct,
            min,
        })
    }

    /// Every binding mentioned by some annotation.
    pub fn bindings(&self) -> BindingSet {
        binding_alphabet(&self.formula)
    }

    pub fn action_props(&self) -> std::collections::BTreeSet<String> {
        self.formula
            .blocks()
            .iter()
            .flat_map(|b| b.phi.literals().into_iter().map(|l| l.prop.clone()))
            .collect()
    }

    pub fn context(&self) -> crate::binding::BindingContext {
        crate::binding::BindingContext::new(self.bindings(), self.distinct.clone())
    }
}

fn binding_alphabet(f: &TaskFormula) -> BindingSet {
    f.blocks()
        .iter()
        .fold(BindingSet::new(), |acc, b| acc.union(&b.psi.bindings()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Quantifier {
    #[serde(rename = "forall")]
    ForAll,
    #[serde(rename = "exists")]
    Exists,
}

/// `prop^binding` with a quantifier over the robots holding `binding`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AnnotatedLiteral {
    pub prop: String,
    pub binding: Binding,
    pub quantifier: Quantifier,
    pub positive: bool,
}

impl AnnotatedLiteral {
    pub fn new(prop: impl Into<String>, binding: u32, quantifier: Quantifier, positive: bool) -> Self {
        AnnotatedLiteral {
            prop: prop.into(),
            binding: Binding(binding),
            quantifier,
            positive,
        }
    }
}

impl Literal for AnnotatedLiteral {
    fn negate(&self) -> Self {
        AnnotatedLiteral {
            prop: self.prop.clone(),
            binding: self.binding,
            quantifier: match self.quantifier {
                Quantifier::ForAll => Quantifier::Exists,
                Quantifier::Exists => Quantifier::ForAll,
            },
            positive: !self.positive,
        }
    }
}

impl fmt::Display for AnnotatedLiteral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = match self.quantifier {
            Quantifier::ForAll => "all",
            Quantifier::Exists => "some",
        };
        let neg = if self.positive { "" } else { "!" };
        write!(f, "{q}:{neg}{}^{}", self.prop, self.binding)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lit_strategy() -> impl Strategy<Value = AnnotatedLiteral> {
        (0u32..4, any::<bool>(), any::<bool>()).prop_map(|(b, q, p)| {
            let q = if q { Quantifier::ForAll } else { Quantifier::Exists };
            AnnotatedLiteral::new("a", b, q, p)
        })
    }

    proptest! {
        #[test]
        fn literal_negation_is_an_involution(l in lit_strategy()) {
            prop_assert_eq!(l.negate().negate(), l.clone());
            prop_assert_ne!(l.negate(), l);
        }
    }

    #[test]
    fn negation_table() {
        let n = |q, p| AnnotatedLiteral::new("x", 1, q, p).negate();
        use Quantifier::*;
        assert_eq!(n(ForAll, true), AnnotatedLiteral::new("x", 1, Exists, false));
        assert_eq!(n(ForAll, false), AnnotatedLiteral::new("x", 1, Exists, true));
        assert_eq!(n(Exists, true), AnnotatedLiteral::new("x", 1, ForAll, false));
        assert_eq!(n(Exists, false), AnnotatedLiteral::new("x", 1, ForAll, true));
    }

    #[test]
    fn cmin_must_reference_used_binding() {
        let f = TaskFormula::block(AtomicBlock::plain(Ltl::lit(PropLit::pos("a")), BindingFormula::var(1)));
        let mut min = BTreeMap::new();
        min.insert(Binding(2), 1);
        assert!(matches!(Task::new(f, vec![], min), Err(SpecError::Constraint(_))));
    }

    #[test]
    fn double_block_negation_is_flagged() {
        let b = AtomicBlock::plain(Ltl::lit(PropLit::pos("a")), BindingFormula::var(1));
        let f = TaskFormula::not(TaskFormula::not(TaskFormula::not(TaskFormula::block(b))));
        let once = f.normalize().unwrap();
        assert!(matches!(once, TaskFormula::Block(AtomicBlock { style: NegStyle::OuterNeg, .. })));
        let g = TaskFormula::not(TaskFormula::block(once.blocks()[0].clone()));
        assert!(matches!(g.normalize(), Err(SpecError::NestedNegation { .. })));
    }
}
