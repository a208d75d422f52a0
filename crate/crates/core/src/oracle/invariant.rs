//! Invariant, inductiveness, transition-property and guard-stability checks.

use std::collections::BTreeSet;

use super::graph::{build_graph, Counterexample, StateGraph};
use super::OracleError;
use crate::model::example::lemmas::{self, ProofKind};
use crate::model::{ExampleModel, Model, OracleBounds};

/// One transition `(pre, action, post)`.
pub struct StepTriple<M: Model> {
    pub pre: M::State,
    pub action: M::Action,
    pub post: M::State,
}

impl<M: Model> std::fmt::Debug for StepTriple<M> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?} --{:?}--> {:?}", self.pre, self.action, self.post)
    }
}

impl<M: Model> StepTriple<M> {
    pub fn to_counterexample(&self) -> Counterexample<M> {
        Counterexample {
            initial: self.pre.clone(),
            steps: vec![(Some(self.action.clone()), self.post.clone())],
            cycle_start: None,
        }
    }
}

pub enum InductiveFailure<M: Model> {
    /// An in-bounds initial state violates the predicate.
    Init(M::State),
    /// A predicate state steps to a non-predicate state.
    Step(StepTriple<M>),
}

impl<M: Model> std::fmt::Debug for InductiveFailure<M> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InductiveFailure::Init(s) => write!(f, "Init({s:?})"),
            InductiveFailure::Step(t) => write!(f, "Step({t:?})"),
        }
    }
}

/// `Ok` iff `pred` holds on every reachable state; otherwise a shortest
/// path to a violating state.
pub fn check_invariant<M: Model>(graph: &StateGraph<M>, pred: impl Fn(&M::State) -> bool) -> Result<(), Counterexample<M>> {
    // BFS order makes the first violating state a closest one.
    match (0..graph.len()).find(|&i| !pred(&graph.states[i])) {
        None => Ok(()),
        Some(bad) => {
            let path = graph.path_to(bad);
            let start = path.first().map_or(bad, |&e| graph.edges[e].from);
            Err(graph.counterexample(start, &path))
        }
    }
}

/// Inductiveness over all in-bounds states, reachable or not. Returns the
/// number of transitions examined.
pub fn check_inductive<M: Model>(
    model: &M,
    bounds: &OracleBounds,
    pred: impl Fn(&M::State) -> bool,
) -> Result<usize, InductiveFailure<M>> {
    for s in model.init_states(bounds) {
        if model.init(&s) && model.in_bounds(&s, bounds) && !pred(&s) {
            return Err(InductiveFailure::Init(s));
        }
    }
    let mut checked = 0;
    for p in model.states_in_bounds(bounds) {
        if !pred(&p) {
            continue;
        }
        for (a, s) in model.successors(&p, bounds) {
            checked += 1;
            if !pred(&s) {
                return Err(InductiveFailure::Step(StepTriple { pre: p, action: a, post: s }));
            }
        }
    }
    Ok(checked)
}

/// A two-state property over every in-bounds transition whose pre-state
/// satisfies `assume`.
pub fn check_transition<M: Model>(
    model: &M,
    bounds: &OracleBounds,
    assume: impl Fn(&M::State) -> bool,
    rel: impl Fn(&M::State, &M::Action, &M::State) -> bool,
) -> Result<usize, StepTriple<M>> {
    let mut checked = 0;
    for p in model.states_in_bounds(bounds) {
        if !assume(&p) {
            continue;
        }
        for (a, s) in model.successors(&p, bounds) {
            checked += 1;
            if !rel(&p, &a, &s) {
                return Err(StepTriple { pre: p, action: a, post: s });
            }
        }
    }
    Ok(checked)
}

/// Stability of `pred` under every in-bounds transition that needs none of
/// the `held` guard kinds.
pub fn check_guard_stability<M: Model>(
    model: &M,
    bounds: &OracleBounds,
    held: &BTreeSet<M::GuardKind>,
    pred: impl Fn(&M::State) -> bool,
) -> Result<usize, StepTriple<M>> {
    check_transition(model, bounds, &pred, |_, a, s| {
        held.iter().any(|g| model.guard_needed(a, g)) || pred(s)
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LemmaOutcome {
    pub name: &'static str,
    pub proof: ProofKind,
    pub reachable_states: usize,
    pub transitions: usize,
}

pub enum LemmaFailure {
    Reachable(Counterexample<ExampleModel>),
    Inductive(InductiveFailure<ExampleModel>),
    Transition(StepTriple<ExampleModel>),
    Oracle(OracleError),
    UnknownLemma(String),
}

impl std::fmt::Debug for LemmaFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LemmaFailure::Reachable(c) => write!(f, "Reachable({c:?})"),
            LemmaFailure::Inductive(i) => write!(f, "Inductive({i:?})"),
            LemmaFailure::Transition(t) => write!(f, "Transition({t:?})"),
            LemmaFailure::Oracle(e) => write!(f, "Oracle({e})"),
            LemmaFailure::UnknownLemma(n) => write!(f, "UnknownLemma({n})"),
        }
    }
}

/// Checks one lemma of the running example's invariant chain.
///
/// Steps 2–4 are checked on the reachable graph and then for
/// inductiveness of the conjunction of steps 2 up to the named one, since
/// each relies on its predecessors. Steps 1 and 5 are transition properties;
/// step 5 is checked from every state satisfying steps 2–4.
pub fn check_example_lemma(
    model: &ExampleModel,
    bounds: &OracleBounds,
    name: &str,
) -> Result<LemmaOutcome, LemmaFailure> {
    let chain = lemmas::chain();
    let lemma = chain.iter().find(|l| l.name == name).ok_or_else(|| LemmaFailure::UnknownLemma(name.into()))?;
    let graph = build_graph(model, bounds).map_err(LemmaFailure::Oracle)?;
    let upto: Vec<fn(&crate::model::ExampleState) -> bool> = match name {
        "step2" => vec![lemmas::step2],
        "step3" => vec![lemmas::step2, lemmas::step3],
        _ => vec![lemmas::step2, lemmas::step3, lemmas::step4],
    };
    let conj = |s: &crate::model::ExampleState| upto.iter().all(|p| p(s));
    let transitions = match lemma.predicate {
        lemmas::LemmaPredicate::State(pred) => {
            check_invariant(&graph, pred).map_err(LemmaFailure::Reachable)?;
            check_inductive(model, bounds, conj).map_err(LemmaFailure::Inductive)?
        }
        lemmas::LemmaPredicate::Transition(rel) => {
            for e in &graph.edges {
                if let Some(a) = &e.action {
                    let (p, s) = (&graph.states[e.from], &graph.states[e.to]);
                    if !rel(p, s, a) {
                        let mut path = graph.path_to(e.from);
                        path.push(graph.edges.iter().position(|x| x == e).expect("edge of the graph"));
                        let start = graph.edges[path[0]].from;
                        return Err(LemmaFailure::Reachable(graph.counterexample(start, &path)));
                    }
                }
            }
            let assume = |s: &crate::model::ExampleState| name == "step1" || conj(s);
            check_transition(model, bounds, assume, |p, a, s| rel(p, s, a)).map_err(LemmaFailure::Transition)?
        }
    };
    Ok(LemmaOutcome { name: lemma.name, proof: lemma.proof, reachable_states: graph.len(), transitions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExampleAction, ExampleGuardKind, ExampleVariant};

    #[test]
    fn constant_true_is_invariant_and_inductive() {
        let m = ExampleModel::default();
        let b = OracleBounds::new(1, 1);
        let g = build_graph(&m, &b).unwrap();
        assert!(check_invariant(&g, |_| true).is_ok());
        assert!(check_inductive(&m, &b, |_| true).is_ok());
    }

    #[test]
    fn counter_zero_is_broken_by_arecv() {
        let m = ExampleModel::default();
        let err = check_inductive(&m, &OracleBounds::new(1, 1), |s| s.a_ctr == 0).unwrap_err();
        match err {
            InductiveFailure::Step(t) => assert_eq!(t.action, ExampleAction::ARecv),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lemma_chain_at_small_bounds() {
        let m = ExampleModel::default();
        for l in lemmas::chain() {
            check_example_lemma(&m, &OracleBounds::new(1, 1), l.name).unwrap();
        }
    }

    #[test]
    fn mutated_model_has_short_counterexample() {
        let m = ExampleModel::new(ExampleVariant::AsendPlusOne);
        match check_example_lemma(&m, &OracleBounds::new(1, 1), "step2").unwrap_err() {
            LemmaFailure::Reachable(c) => {
                assert_eq!(c.len(), 1);
                assert!(c.replays(&m));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn guard_stability_examples() {
        let m = ExampleModel::default();
        let b = OracleBounds::new(1, 1);
        let held = BTreeSet::from([ExampleGuardKind::NodeA]);
        for c in 0..=1 {
            check_guard_stability(&m, &b, &held, |s| s.a_ctr == c).unwrap();
        }
        let t = check_guard_stability(&m, &b, &held, |s| s.b_work.is_none()).unwrap_err();
        assert_eq!(t.action, ExampleAction::BRecv);
        let all = BTreeSet::from([ExampleGuardKind::NodeA, ExampleGuardKind::NodeB, ExampleGuardKind::Environment]);
        check_guard_stability(&m, &b, &all, |s| s.a_ctr == 0 && s.a_to_b.is_empty()).unwrap();
    }
}
