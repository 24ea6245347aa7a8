use crate::binding::BindingSet;
use crate::ltl::Ltl;

use super::{zeta, AnnotatedLiteral, AtomicBlock, NegStyle, Quantifier, Task, TaskFormula};

/// Rewrite a task into LTL over annotated literals, in negation normal form.
pub fn rewrite(task: &Task) -> Ltl<AnnotatedLiteral> {
    let alphabet = task.bindings();
    rewrite_formula(&task.normalized, &alphabet).nnf()
}

fn rewrite_formula(f: &TaskFormula, alphabet: &BindingSet) -> Ltl<AnnotatedLiteral> {
    match f {
        TaskFormula::Block(b) => rewrite_block(b, alphabet),
        TaskFormula::Not(a) => Ltl::not(rewrite_formula(a, alphabet)),
        TaskFormula::And(a, b) => Ltl::and(rewrite_formula(a, alphabet), rewrite_formula(b, alphabet)),
        TaskFormula::Or(a, b) => Ltl::or(rewrite_formula(a, alphabet), rewrite_formula(b, alphabet)),
        TaskFormula::Until(a, b) => {
            Ltl::until(rewrite_formula(a, alphabet), rewrite_formula(b, alphabet))
        }
        TaskFormula::Release(a, b) => {
            Ltl::release(rewrite_formula(a, alphabet), rewrite_formula(b, alphabet))
        }
        TaskFormula::Eventually(a) => Ltl::eventually(rewrite_formula(a, alphabet)),
        TaskFormula::Always(a) => Ltl::always(rewrite_formula(a, alphabet)),
    }
}

/// One block becomes a disjunction over the binding sets of `zeta(psi)`. For
/// plain and inner-negated blocks every robot holding a binding of the set
/// must comply, so the per-binding copies are conjoined. An outer-negated
/// block asks for one violating robot, so the copies are disjoined.
pub(crate) fn rewrite_block(b: &AtomicBlock, alphabet: &BindingSet) -> Ltl<AnnotatedLiteral> {
    let (body, quantifier) = match b.style {
        NegStyle::Plain => (b.phi.nnf(), Quantifier::ForAll),
        NegStyle::InnerNeg => (Ltl::not(b.phi.clone()).nnf(), Quantifier::ForAll),
        NegStyle::OuterNeg => (Ltl::not(b.phi.clone()).nnf(), Quantifier::Exists),
    };
    Ltl::any(zeta(&b.psi, alphabet).into_iter().map(|k| {
        let copies = k.iter().map(|rho| {
            body.map(&mut |l| {
                Ltl::Lit(AnnotatedLiteral {
                    prop: l.prop.clone(),
                    binding: rho,
                    quantifier,
                    positive: l.positive,
                })
            })
        });
        match quantifier {
            Quantifier::ForAll => Ltl::all(copies),
            Quantifier::Exists => Ltl::any(copies),
        }
    }))
}
