//! Generic propositional LTL without the next operator, plus evaluation over
//! ultimately periodic words.

use std::fmt;

/// Literals know how to negate themselves, which lets negation normal form
/// push `!` all the way into the atoms.
pub trait Literal: Clone + Ord + fmt::Debug {
    fn negate(&self) -> Self;
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ltl<L> {
    True,
    False,
    Lit(L),
    Not(Box<Ltl<L>>),
    And(Box<Ltl<L>>, Box<Ltl<L>>),
    Or(Box<Ltl<L>>, Box<Ltl<L>>),
    Until(Box<Ltl<L>>, Box<Ltl<L>>),
    Release(Box<Ltl<L>>, Box<Ltl<L>>),
    Eventually(Box<Ltl<L>>),
    Always(Box<Ltl<L>>),
}

impl<L> Ltl<L> {
    pub fn lit(l: L) -> Self {
        Ltl::Lit(l)
    }

    pub fn not(a: Self) -> Self {
        Ltl::Not(Box::new(a))
    }

    pub fn and(a: Self, b: Self) -> Self {
        match (a, b) {
            (Ltl::True, x) | (x, Ltl::True) => x,
            (Ltl::False, _) | (_, Ltl::False) => Ltl::False,
            (a, b) => Ltl::And(Box::new(a), Box::new(b)),
        }
    }

    pub fn or(a: Self, b: Self) -> Self {
        match (a, b) {
            (Ltl::False, x) | (x, Ltl::False) => x,
            (Ltl::True, _) | (_, Ltl::True) => Ltl::True,
            (a, b) => Ltl::Or(Box::new(a), Box::new(b)),
        }
    }

    pub fn until(a: Self, b: Self) -> Self {
        Ltl::Until(Box::new(a), Box::new(b))
    }

    pub fn release(a: Self, b: Self) -> Self {
        Ltl::Release(Box::new(a), Box::new(b))
    }

    pub fn eventually(a: Self) -> Self {
        Ltl::Eventually(Box::new(a))
    }

    pub fn always(a: Self) -> Self {
        Ltl::Always(Box::new(a))
    }

    pub fn all(items: impl IntoIterator<Item = Self>) -> Self {
        items.into_iter().fold(Ltl::True, Ltl::and)
    }

    pub fn any(items: impl IntoIterator<Item = Self>) -> Self {
        items.into_iter().fold(Ltl::False, Ltl::or)
    }

    /// Structure-preserving relabeling of the atoms.
    pub fn map<M>(&self, f: &mut impl FnMut(&L) -> Ltl<M>) -> Ltl<M> {
        match self {
            Ltl::True => Ltl::True,
            Ltl::False => Ltl::False,
            Ltl::Lit(l) => f(l),
            Ltl::Not(a) => Ltl::not(a.map(f)),
            Ltl::And(a, b) => Ltl::and(a.map(f), b.map(f)),
            Ltl::Or(a, b) => Ltl::or(a.map(f), b.map(f)),
            Ltl::Until(a, b) => Ltl::until(a.map(f), b.map(f)),
            Ltl::Release(a, b) => Ltl::release(a.map(f), b.map(f)),
            Ltl::Eventually(a) => Ltl::eventually(a.map(f)),
            Ltl::Always(a) => Ltl::always(a.map(f)),
        }
    }

    pub fn literals(&self) -> Vec<&L> {
        let mut out = Vec::new();
        self.collect_literals(&mut out);
        out
    }

    fn collect_literals<'a>(&'a self, out: &mut Vec<&'a L>) {
        match self {
            Ltl::True | Ltl::False => {}
            Ltl::Lit(l) => out.push(l),
            Ltl::Not(a) | Ltl::Eventually(a) | Ltl::Always(a) => a.collect_literals(out),
            Ltl::And(a, b) | Ltl::Or(a, b) | Ltl::Until(a, b) | Ltl::Release(a, b) => {
                a.collect_literals(out);
                b.collect_literals(out);
            }
        }
    }
}

impl<L: Literal> Ltl<L> {
    /// Negation normal form using only `True`, `False`, `Lit`, `And`, `Or`,
    /// `Until` and `Release`.
    pub fn nnf(&self) -> Ltl<L> {
        self.nnf_signed(true)
    }

    fn nnf_signed(&self, positive: bool) -> Ltl<L> {
        match (self, positive) {
            (Ltl::True, true) | (Ltl::False, false) => Ltl::True,
            (Ltl::True, false) | (Ltl::False, true) => Ltl::False,
            (Ltl::Lit(l), true) => Ltl::Lit(l.clone()),
            (Ltl::Lit(l), false) => Ltl::Lit(l.negate()),
            (Ltl::Not(a), p) => a.nnf_signed(!p),
            (Ltl::And(a, b), true) | (Ltl::Or(a, b), false) => {
                Ltl::and(a.nnf_signed(positive), b.nnf_signed(positive))
            }
            (Ltl::Or(a, b), true) | (Ltl::And(a, b), false) => {
                Ltl::or(a.nnf_signed(positive), b.nnf_signed(positive))
            }
            (Ltl::Until(a, b), true) | (Ltl::Release(a, b), false) => {
                Ltl::until(a.nnf_signed(positive), b.nnf_signed(positive))
            }
            (Ltl::Release(a, b), true) | (Ltl::Until(a, b), false) => {
                Ltl::release(a.nnf_signed(positive), b.nnf_signed(positive))
            }
            (Ltl::Eventually(a), true) | (Ltl::Always(a), false) => {
                Ltl::until(Ltl::True, a.nnf_signed(positive))
            }
            (Ltl::Always(a), true) | (Ltl::Eventually(a), false) => {
                Ltl::release(Ltl::False, a.nnf_signed(positive))
            }
        }
    }
}

impl<L: fmt::Display> fmt::Display for Ltl<L> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ltl::True => write!(f, "true"),
            Ltl::False => write!(f, "false"),
            Ltl::Lit(l) => write!(f, "{l}"),
            Ltl::Not(a) => write!(f, "!({a})"),
            Ltl::And(a, b) => write!(f, "({a} & {b})"),
            Ltl::Or(a, b) => write!(f, "({a} | {b})"),
            Ltl::Until(a, b) => write!(f, "({a} U {b})"),
            Ltl::Release(a, b) => write!(f, "({a} R {b})"),
            Ltl::Eventually(a) => write!(f, "F({a})"),
            Ltl::Always(a) => write!(f, "G({a})"),
        }
    }
}

/// Shape of an ultimately periodic word: positions `0..len`, and the successor
/// of the last position is `loop_start`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LassoShape {
    pub len: usize,
    pub loop_start: usize,
}

impl LassoShape {
    pub fn new(len: usize, loop_start: usize) -> Self {
        assert!(len >= 1 && loop_start < len, "bad lasso shape {len}/{loop_start}");
        LassoShape { len, loop_start }
    }

    pub fn succ(&self, i: usize) -> usize {
        if i + 1 < self.len {
            i + 1
        } else {
            self.loop_start
        }
    }
}

/// Truth value of `f` at every position of the lasso. With `strict_always`,
/// `G a` at `i` quantifies over positions strictly after `i`.
pub fn eval_lasso<L>(
    f: &Ltl<L>,
    shape: LassoShape,
    strict_always: bool,
    atom: &mut dyn FnMut(&L, usize) -> bool,
) -> Vec<bool> {
    let n = shape.len;
    match f {
        Ltl::True => vec![true; n],
        Ltl::False => vec![false; n],
        Ltl::Lit(l) => (0..n).map(|i| atom(l, i)).collect(),
        Ltl::Not(a) => eval_lasso(a, shape, strict_always, atom)
            .into_iter()
            .map(|v| !v)
            .collect(),
        Ltl::And(a, b) => {
            let va = eval_lasso(a, shape, strict_always, atom);
            let vb = eval_lasso(b, shape, strict_always, atom);
            va.iter().zip(&vb).map(|(x, y)| *x && *y).collect()
        }
        Ltl::Or(a, b) => {
            let va = eval_lasso(a, shape, strict_always, atom);
            let vb = eval_lasso(b, shape, strict_always, atom);
            va.iter().zip(&vb).map(|(x, y)| *x || *y).collect()
        }
        Ltl::Until(a, b) => {
            let va = eval_lasso(a, shape, strict_always, atom);
            let vb = eval_lasso(b, shape, strict_always, atom);
            until_fixpoint(&va, &vb, shape)
        }
        Ltl::Release(a, b) => {
            let va = eval_lasso(a, shape, strict_always, atom);
            let vb = eval_lasso(b, shape, strict_always, atom);
            release_fixpoint(&va, &vb, shape)
        }
        Ltl::Eventually(a) => {
            let va = eval_lasso(a, shape, strict_always, atom);
            until_fixpoint(&vec![true; n], &va, shape)
        }
        Ltl::Always(a) => {
            let va = eval_lasso(a, shape, strict_always, atom);
            let g = release_fixpoint(&vec![false; n], &va, shape);
            if strict_always {
                (0..n).map(|i| g[shape.succ(i)]).collect()
            } else {
                g
            }
        }
    }
}

pub(crate) fn until_fixpoint(a: &[bool], b: &[bool], shape: LassoShape) -> Vec<bool> {
    let mut v = vec![false; shape.len];
    loop {
        let mut changed = false;
        for i in (0..shape.len).rev() {
            let nv = b[i] || (a[i] && v[shape.succ(i)]);
            if nv != v[i] {
                v[i] = nv;
                changed = true;
            }
        }
        if !changed {
            return v;
        }
    }
}

pub(crate) fn release_fixpoint(a: &[bool], b: &[bool], shape: LassoShape) -> Vec<bool> {
    let mut v = vec![true; shape.len];
    loop {
        let mut changed = false;
        for i in (0..shape.len).rev() {
            let nv = b[i] && (a[i] || v[shape.succ(i)]);
            if nv != v[i] {
                v[i] = nv;
                changed = true;
            }
        }
        if !changed {
            return v;
        }
    }
}
