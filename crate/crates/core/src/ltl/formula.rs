//! Deep embedding of the temporal fragment: boolean connectives, always,
//! eventually, temporal entailment, state/action atoms and value
//! quantifiers. There is deliberately no next operator.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::model::Model;

/// One-state predicate over the abstract state, parameterized by naturals.
pub type StateFn<M> = Arc<dyn Fn(&[u64], &<M as Model>::State) -> bool + Send + Sync>;

/// Two-state predicate over `(pre, post, action)`; the action is absent on
/// stutter steps.
pub type StepFn<M> = Arc<
    dyn Fn(&[u64], &<M as Model>::State, &<M as Model>::State, Option<&<M as Model>::Action>) -> bool
        + Send
        + Sync,
>;

/// Argument of an atom.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(u64),
    /// Wildcard; only meaningful in action-label patterns.
    Any,
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Const(n) => write!(f, "{n}"),
            Term::Any => f.write_str("_"),
        }
    }
}

pub struct StateAtom<M: Model> {
    pub name: String,
    pub args: Vec<Term>,
    pub eval: StateFn<M>,
}

impl<M: Model> Clone for StateAtom<M> {
    fn clone(&self) -> Self {
        Self { name: self.name.clone(), args: self.args.clone(), eval: self.eval.clone() }
    }
}

pub enum ActionAtom<M: Model> {
    /// Matches steps whose action label has this name and whose leading
    /// numeric arguments match `args`.
    Label { name: String, args: Vec<Term> },
    Pred { name: String, args: Vec<Term>, eval: StepFn<M> },
}

impl<M: Model> Clone for ActionAtom<M> {
    fn clone(&self) -> Self {
        match self {
            ActionAtom::Label { name, args } => ActionAtom::Label { name: name.clone(), args: args.clone() },
            ActionAtom::Pred { name, args, eval } => {
                ActionAtom::Pred { name: name.clone(), args: args.clone(), eval: eval.clone() }
            }
        }
    }
}

/// Quantifier domain: an enumerated finite set, or the naturals from a lower
/// bound minus an explicit exclusion set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Domain {
    Finite(BTreeSet<u64>),
    NatFrom { lower: u64, excluded: BTreeSet<u64> },
}

impl Domain {
    pub fn nat(lower: u64) -> Self {
        Domain::NatFrom { lower, excluded: BTreeSet::new() }
    }

    pub fn finite(values: impl IntoIterator<Item = u64>) -> Self {
        Domain::Finite(values.into_iter().collect())
    }

    pub fn contains(&self, v: u64) -> bool {
        match self {
            Domain::Finite(set) => set.contains(&v),
            Domain::NatFrom { lower, excluded } => v >= *lower && !excluded.contains(&v),
        }
    }

    /// Removes `v`; for the naturals an exclusion at the lower bound advances
    /// the bound past every consecutive excluded value.
    pub fn exclude(&mut self, v: u64) {
        match self {
            Domain::Finite(set) => {
                set.remove(&v);
            }
            Domain::NatFrom { lower, excluded } => {
                if v < *lower {
                    return;
                }
                excluded.insert(v);
                while excluded.remove(lower) {
                    *lower += 1;
                }
            }
        }
    }
}

/// Side condition `P(i)` of a quantifier, conjunctive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Constraint {
    Ge(u64),
    Lt(u64),
    Ne(u64),
}

impl Constraint {
    pub fn holds(&self, v: u64) -> bool {
        match *self {
            Constraint::Ge(n) => v >= n,
            Constraint::Lt(n) => v < n,
            Constraint::Ne(n) => v != n,
        }
    }
}

pub struct Quantifier<M: Model> {
    pub var: String,
    pub domain: Domain,
    pub cond: Vec<Constraint>,
    pub body: Box<Formula<M>>,
}

impl<M: Model> Clone for Quantifier<M> {
    fn clone(&self) -> Self {
        Self {
            var: self.var.clone(),
            domain: self.domain.clone(),
            cond: self.cond.clone(),
            body: self.body.clone(),
        }
    }
}

impl<M: Model> Quantifier<M> {
    /// `v` is in the domain and satisfies the side condition.
    pub fn admits(&self, v: u64) -> bool {
        self.domain.contains(v) && self.cond.iter().all(|c| c.holds(v))
    }

    /// Upper limit implied by `Lt` constraints, if any.
    pub fn upper_limit(&self) -> Option<u64> {
        self.cond
            .iter()
            .filter_map(|c| match c {
                Constraint::Lt(n) => Some(*n),
                _ => None,
            })
            .min()
    }

    /// Every admitted value when the domain is finite after applying the
    /// side condition; `None` when it is infinite.
    pub fn finite_members(&self) -> Option<Vec<u64>> {
        match &self.domain {
            Domain::Finite(set) => Some(set.iter().copied().filter(|v| self.admits(*v)).collect()),
            Domain::NatFrom { lower, .. } => {
                let hi = self.upper_limit()?;
                Some((*lower..hi).filter(|v| self.admits(*v)).collect())
            }
        }
    }
}

pub enum Formula<M: Model> {
    Top,
    Bottom,
    State(StateAtom<M>),
    Action(ActionAtom<M>),
    And(Box<Formula<M>>, Box<Formula<M>>),
    Or(Box<Formula<M>>, Box<Formula<M>>),
    Implies(Box<Formula<M>>, Box<Formula<M>>),
    Always(Box<Formula<M>>),
    Eventually(Box<Formula<M>>),
    /// `a ⇒ b`, sugar for `□(a → b)`.
    Entails(Box<Formula<M>>, Box<Formula<M>>),
    Forall(Quantifier<M>),
    Exists(Quantifier<M>),
}

impl<M: Model> Clone for Formula<M> {
    fn clone(&self) -> Self {
        match self {
            Formula::Top => Formula::Top,
            Formula::Bottom => Formula::Bottom,
            Formula::State(a) => Formula::State(a.clone()),
            Formula::Action(a) => Formula::Action(a.clone()),
            Formula::And(a, b) => Formula::And(a.clone(), b.clone()),
            Formula::Or(a, b) => Formula::Or(a.clone(), b.clone()),
            Formula::Implies(a, b) => Formula::Implies(a.clone(), b.clone()),
            Formula::Always(a) => Formula::Always(a.clone()),
            Formula::Eventually(a) => Formula::Eventually(a.clone()),
            Formula::Entails(a, b) => Formula::Entails(a.clone(), b.clone()),
            Formula::Forall(q) => Formula::Forall(q.clone()),
            Formula::Exists(q) => Formula::Exists(q.clone()),
        }
    }
}

impl<M: Model> Formula<M> {
    pub fn and(a: Self, b: Self) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Self, b: Self) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Self, b: Self) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn always(a: Self) -> Self {
        Formula::Always(Box::new(a))
    }

    pub fn eventually(a: Self) -> Self {
        Formula::Eventually(Box::new(a))
    }

    pub fn entails(a: Self, b: Self) -> Self {
        Formula::Entails(Box::new(a), Box::new(b))
    }

    pub fn always_eventually(a: Self) -> Self {
        Self::always(Self::eventually(a))
    }

    pub fn label(name: &str, args: Vec<Term>) -> Self {
        Formula::Action(ActionAtom::Label { name: name.to_string(), args })
    }

    pub fn forall(var: &str, domain: Domain, cond: Vec<Constraint>, body: Self) -> Self {
        Formula::Forall(Quantifier { var: var.to_string(), domain, cond, body: Box::new(body) })
    }

    pub fn exists(var: &str, domain: Domain, cond: Vec<Constraint>, body: Self) -> Self {
        Formula::Exists(Quantifier { var: var.to_string(), domain, cond, body: Box::new(body) })
    }

    /// Rewrites every `Entails(a, b)` into `Always(Implies(a, b))`.
    pub fn normalize(&self) -> Self {
        match self {
            Formula::Entails(a, b) => Self::always(Self::implies(a.normalize(), b.normalize())),
            Formula::And(a, b) => Self::and(a.normalize(), b.normalize()),
            Formula::Or(a, b) => Self::or(a.normalize(), b.normalize()),
            Formula::Implies(a, b) => Self::implies(a.normalize(), b.normalize()),
            Formula::Always(a) => Self::always(a.normalize()),
            Formula::Eventually(a) => Self::eventually(a.normalize()),
            Formula::Forall(q) => Formula::Forall(Quantifier { body: Box::new(q.body.normalize()), ..q.clone() }),
            Formula::Exists(q) => Formula::Exists(Quantifier { body: Box::new(q.body.normalize()), ..q.clone() }),
            other => other.clone(),
        }
    }

    /// Replaces free occurrences of `var` by the constant `v`.
    pub fn subst(&self, var: &str, v: u64) -> Self {
        let sub = |args: &[Term]| -> Vec<Term> {
            args.iter()
                .map(|t| match t {
                    Term::Var(x) if x == var => Term::Const(v),
                    other => other.clone(),
                })
                .collect()
        };
        match self {
            Formula::Top => Formula::Top,
            Formula::Bottom => Formula::Bottom,
            Formula::State(a) => Formula::State(StateAtom { args: sub(&a.args), ..a.clone() }),
            Formula::Action(ActionAtom::Label { name, args }) => {
                Formula::Action(ActionAtom::Label { name: name.clone(), args: sub(args) })
            }
            Formula::Action(ActionAtom::Pred { name, args, eval }) => {
                Formula::Action(ActionAtom::Pred { name: name.clone(), args: sub(args), eval: eval.clone() })
            }
            Formula::And(a, b) => Self::and(a.subst(var, v), b.subst(var, v)),
            Formula::Or(a, b) => Self::or(a.subst(var, v), b.subst(var, v)),
            Formula::Implies(a, b) => Self::implies(a.subst(var, v), b.subst(var, v)),
            Formula::Entails(a, b) => Self::entails(a.subst(var, v), b.subst(var, v)),
            Formula::Always(a) => Self::always(a.subst(var, v)),
            Formula::Eventually(a) => Self::eventually(a.subst(var, v)),
            Formula::Forall(q) | Formula::Exists(q) => {
                let body = if q.var == var { q.body.as_ref().clone() } else { q.body.subst(var, v) };
                let q = Quantifier { body: Box::new(body), ..q.clone() };
                if matches!(self, Formula::Forall(_)) {
                    Formula::Forall(q)
                } else {
                    Formula::Exists(q)
                }
            }
        }
    }

    /// Short name of the outermost shape, used for discharge statistics.
    pub fn shape(&self) -> &'static str {
        match self {
            Formula::Top => "true",
            Formula::Bottom => "false",
            Formula::State(_) => "state",
            Formula::Action(_) => "action",
            Formula::And(..) => "and",
            Formula::Or(..) => "or",
            Formula::Implies(..) => "implies",
            Formula::Always(a) if matches!(**a, Formula::Eventually(_)) => "always-eventually",
            Formula::Always(_) => "always",
            Formula::Eventually(a) if matches!(**a, Formula::Always(_)) => "eventually-always",
            Formula::Eventually(_) => "eventually",
            Formula::Entails(..) => "entails",
            Formula::Forall(_) => "forall",
            Formula::Exists(_) => "exists",
        }
    }

    /// Whether an eventually occurs anywhere; such obligations can be blocked
    /// by a violated fairness assumption.
    pub fn has_eventually(&self) -> bool {
        match self {
            Formula::Eventually(_) => true,
            Formula::Top | Formula::Bottom | Formula::State(_) | Formula::Action(_) => false,
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Entails(a, b) => {
                a.has_eventually() || b.has_eventually()
            }
            Formula::Always(a) => a.has_eventually(),
            Formula::Forall(q) | Formula::Exists(q) => q.body.has_eventually(),
        }
    }

    /// Variables used but not bound.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        let mut terms = |args: &[Term], bound: &Vec<String>| {
            for t in args {
                if let Term::Var(x) = t {
                    if !bound.contains(x) {
                        out.insert(x.clone());
                    }
                }
            }
        };
        match self {
            Formula::Top | Formula::Bottom => {}
            Formula::State(a) => terms(&a.args, bound),
            Formula::Action(ActionAtom::Label { args, .. }) | Formula::Action(ActionAtom::Pred { args, .. }) => {
                terms(args, bound)
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Entails(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Formula::Always(a) | Formula::Eventually(a) => a.collect_free(bound, out),
            Formula::Forall(q) | Formula::Exists(q) => {
                bound.push(q.var.clone());
                q.body.collect_free(bound, out);
                bound.pop();
            }
        }
    }
}

impl<M: Model> PartialEq for Formula<M> {
    /// Syntactic equality after entailment normalization. Atoms compare by
    /// name and arguments.
    fn eq(&self, other: &Self) -> bool {
        self.normalize().to_string() == other.normalize().to_string()
    }
}

impl<M: Model> fmt::Debug for Formula<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Named atoms a model exposes to the formula parser.
pub struct AtomRegistry<M: Model> {
    pub(crate) states: BTreeMap<String, (usize, StateFn<M>)>,
    pub(crate) steps: BTreeMap<String, (usize, StepFn<M>)>,
}

impl<M: Model> Default for AtomRegistry<M> {
    fn default() -> Self {
        Self { states: BTreeMap::new(), steps: BTreeMap::new() }
    }
}

impl<M: Model> AtomRegistry<M> {
    pub fn state(
        mut self,
        name: &str,
        arity: usize,
        f: impl Fn(&[u64], &M::State) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.states.insert(name.to_string(), (arity, Arc::new(f)));
        self
    }

    pub fn step(
        mut self,
        name: &str,
        arity: usize,
        f: impl Fn(&[u64], &M::State, &M::State, Option<&M::Action>) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.steps.insert(name.to_string(), (arity, Arc::new(f)));
        self
    }

    pub fn state_names(&self) -> impl Iterator<Item = &str> {
        self.states.keys().map(String::as_str)
    }

    pub fn step_names(&self) -> impl Iterator<Item = &str> {
        self.steps.keys().map(String::as_str)
    }

    /// `(state name args)` as a formula.
    pub fn state_atom(&self, name: &str, args: Vec<Term>) -> Option<Formula<M>> {
        let (arity, f) = self.states.get(name)?;
        (*arity == args.len()).then(|| Formula::State(StateAtom { name: name.to_string(), args, eval: f.clone() }))
    }

    /// `(pred name args)` as a formula.
    pub fn step_atom(&self, name: &str, args: Vec<Term>) -> Option<Formula<M>> {
        let (arity, f) = self.steps.get(name)?;
        (*arity == args.len())
            .then(|| Formula::Action(ActionAtom::Pred { name: name.to_string(), args, eval: f.clone() }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ExampleModel;

    type F = Formula<ExampleModel>;

    #[test]
    fn nat_exclusion_advances_lower_bound() {
        let mut d = Domain::nat(3);
        d.exclude(5);
        assert_eq!(d, Domain::NatFrom { lower: 3, excluded: [5].into() });
        d.exclude(3);
        assert_eq!(d, Domain::NatFrom { lower: 4, excluded: [5].into() });
        d.exclude(4);
        assert_eq!(d, Domain::nat(6));
        d.exclude(1);
        assert_eq!(d, Domain::nat(6));
    }

    #[test]
    fn finite_members_respect_conditions() {
        let q: Quantifier<ExampleModel> = Quantifier {
            var: "i".into(),
            domain: Domain::nat(2),
            cond: vec![Constraint::Lt(6), Constraint::Ne(4)],
            body: Box::new(F::Top),
        };
        assert_eq!(q.finite_members(), Some(vec![2, 3, 5]));
        let open = Quantifier { cond: vec![], ..q };
        assert_eq!(open.finite_members(), None);
    }

    #[test]
    fn entails_normalizes_to_always_implies() {
        let a = F::label("ASend", vec![]);
        let b = F::eventually(F::label("ARecv", vec![]));
        assert_eq!(F::entails(a.clone(), b.clone()), F::always(F::implies(a, b)));
    }

    #[test]
    fn subst_respects_shadowing() {
        let inner = F::exists("r", Domain::nat(0), vec![], F::label("BSend", vec![Term::Var("r".into())]));
        let f = F::and(F::label("BSend", vec![Term::Var("r".into())]), inner);
        let g = f.subst("r", 7);
        assert_eq!(g.to_string(), "(and (action BSend 7) (exists r (nat 0) (action BSend r)))");
        assert!(g.free_vars().is_empty());
        assert_eq!(f.free_vars(), ["r".to_string()].into());
    }

    #[test]
    fn shapes() {
        let a = F::label("ASend", vec![]);
        assert_eq!(F::always_eventually(a.clone()).shape(), "always-eventually");
        assert_eq!(F::eventually(a.clone()).shape(), "eventually");
        assert!(F::always_eventually(a.clone()).has_eventually());
        assert!(!F::always(a).has_eventually());
    }
}
