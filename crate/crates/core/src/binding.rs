use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A binding proposition. Written as a decimal integer in task text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Binding(pub u32);

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A set of bindings held by one robot, or one model of a binding formula.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BindingSet(BTreeSet<Binding>);

impl BindingSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(b: Binding) -> Self {
        let mut s = Self::new();
        s.insert(b);
        s
    }

    pub fn insert(&mut self, b: Binding) -> bool {
        self.0.insert(b)
    }

    pub fn remove(&mut self, b: Binding) -> bool {
        self.0.remove(&b)
    }

    pub fn contains(&self, b: Binding) -> bool {
        self.0.contains(&b)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Binding> + '_ {
        self.0.iter().copied()
    }

    pub fn is_subset(&self, other: &BindingSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn intersects(&self, other: &BindingSet) -> bool {
        self.0.iter().any(|b| other.0.contains(b))
    }

    pub fn union(&self, other: &BindingSet) -> BindingSet {
        BindingSet(self.0.union(&other.0).copied().collect())
    }

    pub fn intersection(&self, other: &BindingSet) -> BindingSet {
        BindingSet(self.0.intersection(&other.0).copied().collect())
    }

    pub fn difference(&self, other: &BindingSet) -> BindingSet {
        BindingSet(self.0.difference(&other.0).copied().collect())
    }

    /// All nonempty subsets, in ascending order of the subset ordering used by `Ord`.
    pub fn nonempty_subsets(&self) -> Vec<BindingSet> {
        let items: Vec<Binding> = self.iter().collect();
        assert!(items.len() < 32, "binding alphabet too large");
        let mut out: Vec<BindingSet> = (1u32..(1u32 << items.len()))
            .map(|mask| {
                items
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, b)| *b)
                    .collect()
            })
            .collect();
        out.sort();
        out
    }
}

impl FromIterator<Binding> for BindingSet {
    fn from_iter<I: IntoIterator<Item = Binding>>(iter: I) -> Self {
        BindingSet(iter.into_iter().collect())
    }
}

impl<const N: usize> From<[u32; N]> for BindingSet {
    fn from(v: [u32; N]) -> Self {
        v.into_iter().map(Binding).collect()
    }
}

impl fmt::Display for BindingSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, b) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{b}")?;
        }
        write!(f, "}}")
    }
}

/// The binding alphabet of a task together with its `c_distinct` constraint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BindingContext {
    pub alphabet: BindingSet,
    pub distinct: Vec<BindingSet>,
    candidates: Vec<BindingSet>,
}

impl BindingContext {
    pub fn new(alphabet: BindingSet, distinct: Vec<BindingSet>) -> Self {
        let candidates = alphabet
            .nonempty_subsets()
            .into_iter()
            .filter(|r| !distinct.iter().any(|c| c.is_subset(r)))
            .collect();
        BindingContext {
            alphabet,
            distinct,
            candidates,
        }
    }

    /// Every nonempty binding set that respects `c_distinct`, sorted.
    pub fn candidates(&self) -> &[BindingSet] {
        &self.candidates
    }
}
