//! Exhaustive soundness check of the proof rules on the toy model: for
//! every generated parent, rule instance and complete short trace, all
//! children true implies the parent true.

use crate::error::Violation;
use crate::ltl::{apply_rule, holds_at_with, Constraint, Domain, EvalOptions, Formula, Rule, Term, Verdict};
use crate::model::{Model, ToyAction, ToyModel, ToyState};
use crate::trace::Trace;

type F = Formula<ToyModel>;

/// The rule implementation under test.
pub type RuleApplier = fn(Rule, &F, u64) -> Result<Vec<(F, u64)>, Violation>;

/// Catalog rule names in declaration order.
pub const RULE_NAMES: [&str; 8] = [
    "AlwaysUnfold",
    "EventuallyConcretize",
    "EventuallyIndexAdvance",
    "AlwaysEventuallyIndexAdvance",
    "ExistsWitness",
    "Split",
    "QSplit",
    "QEmpty",
];

/// Values the toy model can mention; unbounded domains are cut here.
const CAP: u64 = 2;

#[derive(Debug)]
pub enum SoundnessFailure {
    UnknownRule(String),
    Counterexample { rule: Rule, parent: String, index: u64, trace: Trace<ToyModel> },
}

impl std::fmt::Display for SoundnessFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SoundnessFailure::UnknownRule(r) => write!(f, "unknown rule `{r}`"),
            SoundnessFailure::Counterexample { rule, parent, index, trace } => {
                write!(f, "{rule} unsound for {parent}@{index} on a trace of {} records", trace.len())
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SoundnessReport {
    pub rule: &'static str,
    pub parents: usize,
    pub applications: usize,
    pub traces: usize,
    /// Applications on traces where every child held.
    pub justified: usize,
}

/// Every terminated toy trace with at most `max_len` records, each record
/// being `Ping`, `Pong` or a stutter step.
pub fn toy_traces(max_len: usize) -> Vec<Trace<ToyModel>> {
    let model = ToyModel;
    let mut out = vec![Trace::new(ToyState::default())];
    let mut frontier = out.clone();
    for _ in 0..max_len {
        let mut grown = Vec::new();
        for t in &frontier {
            for a in [Some(ToyAction::Ping), Some(ToyAction::Pong), None] {
                let mut u = t.clone();
                let post = match a {
                    Some(a) => model.apply(u.final_state(), a),
                    None => *u.final_state(),
                };
                u.push_step("toy", a, post, Vec::new());
                grown.push(u);
            }
        }
        out.extend(grown.iter().cloned());
        frontier = grown;
    }
    for t in &mut out {
        t.terminated = true;
    }
    out
}

fn atoms() -> Vec<F> {
    let m = ToyModel;
    let p = |t: &str| m.parse_formula(t).expect("toy atom parses");
    vec![
        F::Top,
        F::Bottom,
        p("(state x_is 0)"),
        p("(state x_is 1)"),
        p("(state y_is 1)"),
        p("(state synced)"),
        p("(action Ping)"),
        p("(action Pong)"),
    ]
}

/// One-variable bodies for the quantifier rules.
fn bodies() -> Vec<F> {
    let m = ToyModel;
    let v = || vec![Term::Var("v".into())];
    let x = m.atoms().state_atom("x_is", v()).expect("x_is");
    let y = m.atoms().state_atom("y_is", v()).expect("y_is");
    vec![
        x.clone(),
        F::eventually(y.clone()),
        F::always(y.clone()),
        F::and(F::eventually(x), F::implies(y, m.parse_formula("(action Pong)").expect("Pong"))),
    ]
}

/// Operands for the unary temporal parents: atoms plus a few compounds.
fn operands() -> Vec<F> {
    let a = atoms();
    let mut out = a.clone();
    out.push(F::always(a[3].clone()));
    out.push(F::eventually(a[6].clone()));
    out.push(F::and(a[2].clone(), a[7].clone()));
    out.push(F::implies(a[4].clone(), F::eventually(a[5].clone())));
    out
}

fn domains() -> Vec<(Domain, Vec<Constraint>)> {
    vec![
        (Domain::finite([0, 1]), vec![]),
        (Domain::finite([1]), vec![]),
        (Domain::nat(0), vec![]),
        (Domain::nat(0), vec![Constraint::Lt(2)]),
        (Domain::nat(1), vec![Constraint::Ne(2)]),
    ]
}

type RuleGen = Box<dyn Fn(u64) -> Vec<Rule>>;

/// Parent formulas and rule instances for one rule over indices
/// `0..=max_len`.
fn instances(rule: &str, max_len: u64) -> Option<(Vec<F>, RuleGen)> {
    let later = |mk: fn(u64) -> Rule| -> RuleGen {
        Box::new(move |i| (i..=max_len + 1).map(mk).collect())
    };
    let values = |mk: fn(u64) -> Rule| -> RuleGen {
        Box::new(move |_| (0..=CAP).map(mk).collect())
    };
    let fixed = |r: Rule| -> RuleGen { Box::new(move |_| vec![r]) };
    let ops = operands();
    let quantified = |exists: bool| -> Vec<F> {
        domains()
            .into_iter()
            .flat_map(|(d, c)| {
                bodies().into_iter().map(move |b| {
                    if exists {
                        F::exists("v", d.clone(), c.clone(), b)
                    } else {
                        F::forall("v", d.clone(), c.clone(), b)
                    }
                })
            })
            .collect()
    };
    let (parents, rule): (Vec<F>, RuleGen) = match rule {
        "AlwaysUnfold" => (ops.into_iter().map(F::always).collect(), fixed(Rule::AlwaysUnfold)),
        "EventuallyConcretize" => {
            (ops.into_iter().map(F::eventually).collect(), later(|at| Rule::EventuallyConcretize { at }))
        }
        "EventuallyIndexAdvance" => {
            (ops.into_iter().map(F::eventually).collect(), later(|to| Rule::EventuallyIndexAdvance { to }))
        }
        "AlwaysEventuallyIndexAdvance" => (
            ops.into_iter().map(F::always_eventually).collect(),
            later(|to| Rule::AlwaysEventuallyIndexAdvance { to }),
        ),
        "ExistsWitness" => (quantified(true), values(|value| Rule::ExistsWitness { value })),
        "Split" => {
            let a = atoms();
            let mut ps: Vec<F> = a.iter().flat_map(|x| a.iter().map(move |y| F::and(x.clone(), y.clone()))).collect();
            ps.push(F::and(F::always(a[2].clone()), F::eventually(a[6].clone())));
            (ps, fixed(Rule::Split))
        }
        "QSplit" => (quantified(false), values(|value| Rule::QSplit { value })),
        "QEmpty" => {
            let mut ps: Vec<F> = bodies().into_iter().map(|b| F::forall("v", Domain::finite([]), vec![], b)).collect();
            ps.push(F::forall("v", Domain::nat(5), vec![Constraint::Lt(5)], F::Bottom));
            ps.extend(quantified(false));
            (ps, fixed(Rule::QEmpty))
        }
        _ => return None,
    };
    Some((parents, rule))
}

pub fn check_rule_soundness(rule: &str, max_len: usize) -> Result<SoundnessReport, SoundnessFailure> {
    check_rule_soundness_with(apply_rule::<ToyModel>, rule, max_len)
}

/// As [`check_rule_soundness`], with the rule implementation supplied.
pub fn check_rule_soundness_with(
    applier: RuleApplier,
    rule: &str,
    max_len: usize,
) -> Result<SoundnessReport, SoundnessFailure> {
    let name = RULE_NAMES.iter().copied().find(|n| *n == rule).ok_or_else(|| SoundnessFailure::UnknownRule(rule.into()))?;
    let (parents, rules) = instances(rule, max_len as u64).expect("every catalog rule has instances");
    let model = ToyModel;
    let opts = EvalOptions { cap: Some(CAP) };
    // (parent, index, rule, children) for every application that succeeds
    let mut apps = Vec::new();
    for (k, parent) in parents.iter().enumerate() {
        for i in 0..=max_len as u64 {
            for r in rules(i) {
                if let Ok(children) = applier(r, parent, i) {
                    apps.push((k, i, r, children));
                }
            }
        }
    }
    let traces = toy_traces(max_len);
    let eval = |f: &F, t: &Trace<ToyModel>, i: u64| {
        // past the end a terminated trace stutters on its final state
        let i = i.min(t.len() as u64);
        holds_at_with(&model, f, t, i, opts).expect("toy formulas are closed")
    };
    let mut report =
        SoundnessReport { rule: name, parents: parents.len(), applications: apps.len(), traces: traces.len(), justified: 0 };
    for t in &traces {
        for (k, i, r, children) in &apps {
            if *i > t.len() as u64 {
                continue;
            }
            if children.iter().all(|(c, j)| eval(c, t, *j) == Verdict::True) {
                report.justified += 1;
                if eval(&parents[*k], t, *i) != Verdict::True {
                    return Err(SoundnessFailure::Counterexample {
                        rule: *r,
                        parent: parents[*k].to_string(),
                        index: *i,
                        trace: t.clone(),
                    });
                }
            }
        }
    }
    Ok(report)
}

/// A broken `AlwaysUnfold` that forgets the tail obligation; any sound
/// checker must reject it.
pub fn truncated_always_unfold(rule: Rule, f: &F, i: u64) -> Result<Vec<(F, u64)>, Violation> {
    let mut children = apply_rule(rule, f, i)?;
    if rule == Rule::AlwaysUnfold {
        children.truncate(1);
    }
    Ok(children)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_count() {
        assert_eq!(toy_traces(0).len(), 1);
        assert_eq!(toy_traces(2).len(), 1 + 3 + 9);
        assert!(toy_traces(3).iter().all(|t| t.terminated));
    }

    #[test]
    fn catalog_sound_on_short_traces() {
        for r in RULE_NAMES {
            let rep = check_rule_soundness(r, 3).unwrap();
            assert!(rep.applications > 0, "{r}");
        }
    }

    #[test]
    fn broken_unfold_is_caught() {
        let err = check_rule_soundness_with(truncated_always_unfold, "AlwaysUnfold", 3).unwrap_err();
        assert!(matches!(err, SoundnessFailure::Counterexample { rule: Rule::AlwaysUnfold, .. }));
    }

    #[test]
    fn unknown_rule() {
        assert!(matches!(check_rule_soundness("Modus", 1), Err(SoundnessFailure::UnknownRule(_))));
    }
}
