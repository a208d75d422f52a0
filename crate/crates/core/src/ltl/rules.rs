//! The syntactic rule catalog. Each rule maps a parent obligation
//! `show_at(φ, i)` to the child obligations that together establish it.
//! Only these rules are accepted; there is no general entailment.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::formula::{Formula, Quantifier};
use crate::error::Violation;
use crate::model::Model;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rule {
    /// `□φ@i` → `φ@i`, `□φ@(i+1)`
    AlwaysUnfold,
    /// `◇φ@i` → `φ@at`, `at ≥ i`
    EventuallyConcretize { at: u64 },
    /// `◇φ@i` → `◇φ@to`, `to ≥ i`
    EventuallyIndexAdvance { to: u64 },
    /// `□◇φ@i` → `□◇φ@to`, `to ≥ i`
    AlwaysEventuallyIndexAdvance { to: u64 },
    /// `∃v.φ(v)@i` → `φ(value)@i`
    ExistsWitness { value: u64 },
    /// `(φ₁ ∧ φ₂)@i` → `φ₁@i`, `φ₂@i`
    Split,
    /// `∀v. P(v) → A(v)@i` → `A(value)@i`, `∀v. v ≠ value ∧ P(v) → A(v)@i`
    QSplit { value: u64 },
    /// `∀v∈∅. A(v)@i` → nothing
    QEmpty,
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::AlwaysUnfold => "AlwaysUnfold",
            Rule::EventuallyConcretize { .. } => "EventuallyConcretize",
            Rule::EventuallyIndexAdvance { .. } => "EventuallyIndexAdvance",
            Rule::AlwaysEventuallyIndexAdvance { .. } => "AlwaysEventuallyIndexAdvance",
            Rule::ExistsWitness { .. } => "ExistsWitness",
            Rule::Split => "Split",
            Rule::QSplit { .. } => "QSplit",
            Rule::QEmpty => "QEmpty",
        }
    }

    /// Number of children the rule produces when it applies.
    pub fn arity(&self) -> usize {
        match self {
            Rule::AlwaysUnfold | Rule::Split | Rule::QSplit { .. } => 2,
            Rule::QEmpty => 0,
            _ => 1,
        }
    }

    /// The strengthening rules (everything except the split family).
    pub fn is_strengthening(&self) -> bool {
        matches!(
            self,
            Rule::AlwaysUnfold
                | Rule::EventuallyConcretize { .. }
                | Rule::EventuallyIndexAdvance { .. }
                | Rule::AlwaysEventuallyIndexAdvance { .. }
                | Rule::ExistsWitness { .. }
        )
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::EventuallyConcretize { at } => write!(f, "EventuallyConcretize({at})"),
            Rule::EventuallyIndexAdvance { to } | Rule::AlwaysEventuallyIndexAdvance { to } => {
                write!(f, "{}({to})", self.name())
            }
            Rule::ExistsWitness { value } | Rule::QSplit { value } => write!(f, "{}({value})", self.name()),
            _ => f.write_str(self.name()),
        }
    }
}

fn mismatch<M: Model>(rule: Rule, f: &Formula<M>) -> Violation {
    Violation::RuleShapeMismatch { rule: rule.to_string(), formula: f.to_string() }
}

fn advance(rule: Rule, from: u64, to: u64) -> Result<u64, Violation> {
    if to < from {
        Err(Violation::IndexRegression { rule: rule.to_string(), from, to })
    } else {
        Ok(to)
    }
}

/// Children of `show_at(f, i)` under `rule`. `Entails` is normalized first,
/// so `AlwaysUnfold` applies to it.
pub fn apply<M: Model>(rule: Rule, f: &Formula<M>, i: u64) -> Result<Vec<(Formula<M>, u64)>, Violation> {
    let f = &f.normalize();
    match (rule, f) {
        (Rule::AlwaysUnfold, Formula::Always(body)) => {
            let next = i.checked_add(1).ok_or_else(|| mismatch(rule, f))?;
            Ok(vec![((**body).clone(), i), (f.clone(), next)])
        }
        (Rule::EventuallyConcretize { at }, Formula::Eventually(body)) => {
            Ok(vec![((**body).clone(), advance(rule, i, at)?)])
        }
        (Rule::EventuallyIndexAdvance { to }, Formula::Eventually(_)) => Ok(vec![(f.clone(), advance(rule, i, to)?)]),
        (Rule::AlwaysEventuallyIndexAdvance { to }, Formula::Always(body)) if matches!(**body, Formula::Eventually(_)) => {
            Ok(vec![(f.clone(), advance(rule, i, to)?)])
        }
        (Rule::ExistsWitness { value }, Formula::Exists(q)) => {
            if !q.admits(value) {
                return Err(Violation::WitnessNotInDomain { value, formula: f.to_string() });
            }
            Ok(vec![(q.body.subst(&q.var, value), i)])
        }
        (Rule::Split, Formula::And(a, b)) => Ok(vec![((**a).clone(), i), ((**b).clone(), i)]),
        (Rule::QSplit { value }, Formula::Forall(q)) => {
            if !q.domain.contains(value) {
                return Err(Violation::WitnessNotInDomain { value, formula: f.to_string() });
            }
            if !q.cond.iter().all(|c| c.holds(value)) {
                return Err(Violation::PredicateFalseAtWitness { value, formula: f.to_string() });
            }
            let child = q.body.subst(&q.var, value);
            let mut domain = q.domain.clone();
            domain.exclude(value);
            let rest = Formula::Forall(Quantifier { domain, ..q.clone() });
            Ok(vec![(child, i), (rest, i)])
        }
        (Rule::QEmpty, Formula::Forall(q)) => match q.finite_members() {
            Some(m) if m.is_empty() => Ok(Vec::new()),
            _ => Err(Violation::DomainNotEmpty { formula: f.to_string() }),
        },
        _ => Err(mismatch(rule, f)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::{Constraint, Domain};
    use crate::model::ExampleModel;

    type F = Formula<ExampleModel>;

    fn parse(text: &str) -> F {
        ExampleModel::default().parse_formula(text).unwrap()
    }

    fn show(children: &[(F, u64)]) -> Vec<String> {
        children.iter().map(|(f, i)| format!("{f}@{i}")).collect()
    }

    #[test]
    fn always_unfold() {
        let f = parse("(always (eventually (action ASend)))");
        let c = apply(Rule::AlwaysUnfold, &f, 3).unwrap();
        assert_eq!(show(&c), ["(eventually (action ASend))@3", "(always (eventually (action ASend)))@4"]);
    }

    #[test]
    fn concretize_and_regression() {
        let f = parse("(eventually (action ASend))");
        let c = apply(Rule::EventuallyConcretize { at: 7 }, &f, 3).unwrap();
        assert_eq!(show(&c), ["(action ASend)@7"]);
        let e = apply(Rule::EventuallyConcretize { at: 2 }, &f, 3).unwrap_err();
        assert_eq!(e.kind(), "IndexRegression");
        let e = apply(Rule::AlwaysEventuallyIndexAdvance { to: 9 }, &f, 3).unwrap_err();
        assert_eq!(e.kind(), "RuleShapeMismatch");
    }

    #[test]
    fn split_requires_conjunction() {
        let f = parse("(and (action ASend) (state b_work_none))");
        assert_eq!(show(&apply(Rule::Split, &f, 3).unwrap()), ["(action ASend)@3", "(state b_work_none)@3"]);
        let e = apply(Rule::Split, &parse("(eventually (action ASend))"), 0).unwrap_err();
        assert_eq!(e.kind(), "RuleShapeMismatch");
    }

    #[test]
    fn qsplit_advances_nat_bound() {
        let f = parse("(forall i (nat 0) (eventually (state a_ctr_ge i)))");
        let c = apply(Rule::QSplit { value: 0 }, &f, 0).unwrap();
        assert_eq!(
            show(&c),
            ["(eventually (state a_ctr_ge 0))@0", "(forall i (nat 1) (eventually (state a_ctr_ge i)))@0"]
        );
        let c = apply(Rule::QSplit { value: 4 }, &c[1].0, 0).unwrap();
        assert_eq!(c[1].0.to_string(), "(forall i (nat 1 (except 4)) (eventually (state a_ctr_ge i)))");
    }

    #[test]
    fn qsplit_errors() {
        let f = F::forall("i", Domain::nat(2), vec![Constraint::Lt(5)], F::Top);
        assert_eq!(apply(Rule::QSplit { value: 1 }, &f, 0).unwrap_err().kind(), "WitnessNotInDomain");
        assert_eq!(apply(Rule::QSplit { value: 6 }, &f, 0).unwrap_err().kind(), "PredicateFalseAtWitness");
    }

    #[test]
    fn qempty_cases() {
        let empty = F::forall("i", Domain::finite([]), vec![], F::Bottom);
        assert!(apply(Rule::QEmpty, &empty, 0).unwrap().is_empty());
        let contradictory = F::forall("i", Domain::nat(5), vec![Constraint::Lt(5)], F::Bottom);
        assert!(apply(Rule::QEmpty, &contradictory, 0).unwrap().is_empty());
        let open = F::forall("i", Domain::nat(0), vec![], F::Bottom);
        assert_eq!(apply(Rule::QEmpty, &open, 0).unwrap_err().kind(), "DomainNotEmpty");
        // splitting every element of a two-element set leaves an empty domain
        let two = F::forall("i", Domain::finite([1, 2]), vec![], F::Top);
        let rest = apply(Rule::QSplit { value: 1 }, &two, 0).unwrap().pop().unwrap().0;
        let rest = apply(Rule::QSplit { value: 2 }, &rest, 0).unwrap().pop().unwrap().0;
        assert!(apply(Rule::QEmpty, &rest, 0).unwrap().is_empty());
    }

    #[test]
    fn exists_witness() {
        let f = parse("(exists r (nat 0) (action BSend r))");
        assert_eq!(show(&apply(Rule::ExistsWitness { value: 5 }, &f, 2).unwrap()), ["(action BSend 5)@2"]);
        let g = parse("(exists r (set 1) (action BSend r))");
        assert_eq!(apply(Rule::ExistsWitness { value: 5 }, &g, 2).unwrap_err().kind(), "WitnessNotInDomain");
    }
}
