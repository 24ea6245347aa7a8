use std::collections::BTreeSet;

use crate::binding::BindingSet;

use super::BindingFormula;

fn minimize(sets: BTreeSet<BindingSet>) -> BTreeSet<BindingSet> {
    sets.iter()
        .filter(|s| !sets.iter().any(|t| t != *s && t.is_subset(s)))
        .cloned()
        .collect()
}

/// Subset-minimal sets of bindings that make `psi` true.
pub fn minimal_models(psi: &BindingFormula) -> BTreeSet<BindingSet> {
    match psi {
        BindingFormula::Var(b) => [BindingSet::singleton(*b)].into_iter().collect(),
        BindingFormula::Or(a, b) => {
            let mut all = minimal_models(a);
            all.extend(minimal_models(b));
            minimize(all)
        }
        BindingFormula::And(a, b) => {
            let ma = minimal_models(a);
            let mb = minimal_models(b);
            let all = ma
                .iter()
                .flat_map(|x| mb.iter().map(move |y| x.union(y)))
                .collect();
            minimize(all)
        }
    }
}

/// All unions of minimal models of `psi`, sorted. Bindings outside
/// `alphabet` never appear because `psi` only mentions alphabet members.
pub fn zeta(psi: &BindingFormula, alphabet: &BindingSet) -> Vec<BindingSet> {
    debug_assert!(psi.bindings().is_subset(alphabet));
    let mins: Vec<BindingSet> = minimal_models(psi).into_iter().collect();
    assert!(mins.len() < 20, "binding formula has too many minimal models");
    let mut out = BTreeSet::new();
    for mask in 1u32..(1 << mins.len()) {
        let u = mins
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .fold(BindingSet::new(), |acc, (_, m)| acc.union(m));
        out.insert(u);
    }
    out.into_iter().collect()
}
