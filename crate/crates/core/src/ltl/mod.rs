//! Temporal formulas, their finite-trace semantics, the proof-rule catalog
//! and the obligation ledger.

mod eval;
mod formula;
mod ledger;
mod rules;
mod sexpr;

pub use eval::{holds_at, holds_at_with, holds_in_state, EvalError, EvalOptions, Verdict};
pub use formula::{
    ActionAtom, AtomRegistry, Constraint, Domain, Formula, Quantifier, StateAtom, StateFn, StepFn, Term,
};
pub use ledger::{
    AssumptionReport, LivenessReport, Measure, Obligation, ObligationLedger, PendingClass, PendingObligation,
    RuleCounts, Status, ViolatedObligation,
};
pub use rules::{apply as apply_rule, Rule};
pub use sexpr::{parse_formula, FormulaParseError};
