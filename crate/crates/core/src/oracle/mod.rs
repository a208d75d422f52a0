//! Explicit-state oracle over bounded model instances: reachability,
//! inductive invariants, guard stability, bounded LTL under fairness and
//! rule soundness.

mod graph;
mod invariant;
mod ltl_check;
mod soundness;

use thiserror::Error;

pub use graph::{build_graph, build_graph_with_cap, Counterexample, Edge, StateGraph, DEFAULT_STATE_CAP};
pub use invariant::{
    check_example_lemma, check_guard_stability, check_inductive, check_invariant, check_transition, InductiveFailure,
    LemmaFailure, LemmaOutcome, StepTriple,
};
pub use ltl_check::{check_ltl_bounded, fairness_preset, Fairness, Lasso, LtlOutcome};
pub use soundness::{
    check_rule_soundness, check_rule_soundness_with, toy_traces, truncated_always_unfold, RuleApplier, SoundnessFailure,
    SoundnessReport, RULE_NAMES,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("state space exceeds the budget of {cap} states")]
    StateSpaceBudgetExceeded { cap: usize },
    #[error("formula {formula} is outside the supported fragment: {reason}")]
    UnsupportedShape { formula: String, reason: String },
    #[error("unknown fairness preset `{0}`")]
    UnknownPreset(String),
}
