//! Violations raised by the runtime checker, the guard layer and the
//! obligation ledger.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// A failed check. States and actions are carried in canonical JSON form so
/// violations can be logged and compared without knowing the model.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Violation {
    #[error("initial state does not satisfy init: {state}")]
    InitViolation { state: Value },

    #[error("node {node} acquired the ghost lock while already holding it")]
    ReentrancyViolation { node: String },

    #[error("node {node} accessed the model state outside a critical section")]
    UseAfterRelease { node: String },

    #[error("node {node} released without holding the ghost lock")]
    NotLocked { node: String },

    #[error("a second ghost-lock handle was requested for node {node}")]
    DuplicateHandle { node: String },

    #[error("step {index} by {node}: next({pre}, {post}, {action}) is false")]
    RefinementViolation { index: u64, node: String, action: Value, pre: Value, post: Value },

    #[error("step {index} by {node}: action {action} needs guard {missing}, which was not opened")]
    GuardViolation { index: u64, node: String, action: Value, missing: Value },

    #[error("step {index} by {node}: stutter release changed the state from {pre} to {post}")]
    StutterViolation { index: u64, node: String, pre: Value, post: Value },

    #[error("step {index} by {node}: environment state changed outside the I/O shims ({expected} expected, {actual} found)")]
    EnvContractViolation { index: u64, node: String, expected: Value, actual: Value },

    #[error("erasure mode changed after the run started")]
    ErasureToggleDuringRun,

    #[error("node {node} dropped its handle while holding the ghost lock (section {index})")]
    ReleaseObligationLeaked { node: String, index: u64 },

    #[error("guard {guard} dispensed twice")]
    DoubleDispense { guard: Value },

    #[error("guard {guard} is an environment guard and cannot be dispensed")]
    EnvironmentGuardRequested { guard: Value },

    #[error("guard {guard} opened in section {index}: predicate is false at its last-closed state")]
    BaseCaseViolation { index: u64, guard: Value, last_state: Value },

    #[error("guard {guard} opened in section {index}: step {step} broke the predicate")]
    StabilityViolation { index: u64, guard: Value, step: u64 },

    #[error("guard {guard} owned by {owner} was opened by {node}")]
    ForeignGuardUse { guard: Value, owner: String, node: String },

    #[error("guard {guard} is already open")]
    GuardAlreadyOpen { guard: Value },

    #[error("guard container is empty")]
    EmptyContainer,

    #[error("channel {channel} used by {node} outside a critical section")]
    ShimOutsideCriticalSection { channel: String, node: String },

    #[error("after step {index}: channel {channel} holds {physical} but the model says {model}")]
    ChannelCoherence { index: u64, channel: String, physical: Value, model: Value },

    #[error("lemma {lemma} failed at step {index}: {detail}")]
    LemmaViolation { index: u64, lemma: String, detail: String },

    #[error("obligation {id} ({formula}@{at}) cannot be discharged: verdict {verdict}")]
    DischargeUnjustified { id: u64, formula: String, at: u64, verdict: String },

    #[error("obligation {id} at {site}: measure {old:?} -> {new:?} does not decrease")]
    MeasureNotDecreasing { id: u64, site: String, old: Vec<u64>, new: Vec<u64> },

    #[error("measure arity for obligation {id} is {expected}, got {got}")]
    MeasureArity { id: u64, expected: usize, got: usize },

    #[error("rule {rule} does not apply to {formula}")]
    RuleShapeMismatch { rule: String, formula: String },

    #[error("rule {rule} moves index {from} back to {to}")]
    IndexRegression { rule: String, from: u64, to: u64 },

    #[error("witness {value} is outside the domain of {formula}")]
    WitnessNotInDomain { value: u64, formula: String },

    #[error("witness {value} does not satisfy the side condition of {formula}")]
    PredicateFalseAtWitness { value: u64, formula: String },

    #[error("domain of {formula} is not demonstrably empty")]
    DomainNotEmpty { formula: String },

    #[error("obligation {id} is not live in this ledger")]
    UnknownObligation { id: u64 },

    #[error("obligation {id} belongs to {owner}, used by {node}")]
    ForeignObligation { id: u64, owner: String, node: String },
}

impl Violation {
    /// Stable category name, used as the `type` field of violation logs.
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::InitViolation { .. } => "InitViolation",
            Violation::ReentrancyViolation { .. } => "ReentrancyViolation",
            Violation::UseAfterRelease { .. } => "UseAfterRelease",
            Violation::NotLocked { .. } => "NotLocked",
            Violation::DuplicateHandle { .. } => "DuplicateHandle",
            Violation::RefinementViolation { .. } => "RefinementViolation",
            Violation::GuardViolation { .. } => "GuardViolation",
            Violation::StutterViolation { .. } => "StutterViolation",
            Violation::EnvContractViolation { .. } => "EnvContractViolation",
            Violation::ErasureToggleDuringRun => "ErasureToggleDuringRun",
            Violation::ReleaseObligationLeaked { .. } => "ReleaseObligationLeaked",
            Violation::DoubleDispense { .. } => "DoubleDispense",
            Violation::EnvironmentGuardRequested { .. } => "EnvironmentGuardRequested",
            Violation::BaseCaseViolation { .. } => "BaseCaseViolation",
            Violation::StabilityViolation { .. } => "StabilityViolation",
            Violation::ForeignGuardUse { .. } => "ForeignGuardUse",
            Violation::GuardAlreadyOpen { .. } => "GuardAlreadyOpen",
            Violation::EmptyContainer => "EmptyContainer",
            Violation::ShimOutsideCriticalSection { .. } => "ShimOutsideCriticalSection",
            Violation::ChannelCoherence { .. } => "ChannelCoherence",
            Violation::LemmaViolation { .. } => "LemmaViolation",
            Violation::DischargeUnjustified { .. } => "DischargeUnjustified",
            Violation::MeasureNotDecreasing { .. } => "MeasureNotDecreasing",
            Violation::MeasureArity { .. } => "MeasureArity",
            Violation::RuleShapeMismatch { .. } => "RuleShapeMismatch",
            Violation::IndexRegression { .. } => "IndexRegression",
            Violation::WitnessNotInDomain { .. } => "WitnessNotInDomain",
            Violation::PredicateFalseAtWitness { .. } => "PredicateFalseAtWitness",
            Violation::DomainNotEmpty { .. } => "DomainNotEmpty",
            Violation::UnknownObligation { .. } => "UnknownObligation",
            Violation::ForeignObligation { .. } => "ForeignObligation",
        }
    }

    /// Trace index the violation is attached to, when there is one.
    pub fn index(&self) -> Option<u64> {
        match self {
            Violation::RefinementViolation { index, .. }
            | Violation::GuardViolation { index, .. }
            | Violation::StutterViolation { index, .. }
            | Violation::EnvContractViolation { index, .. }
            | Violation::ReleaseObligationLeaked { index, .. }
            | Violation::BaseCaseViolation { index, .. }
            | Violation::ChannelCoherence { index, .. }
            | Violation::LemmaViolation { index, .. } => Some(*index),
            Violation::StabilityViolation { step, .. } => Some(*step),
            _ => None,
        }
    }

    pub fn is_safety(&self) -> bool {
        !matches!(
            self,
            Violation::DischargeUnjustified { .. }
                | Violation::MeasureNotDecreasing { .. }
                | Violation::MeasureArity { .. }
                | Violation::RuleShapeMismatch { .. }
                | Violation::IndexRegression { .. }
                | Violation::WitnessNotInDomain { .. }
                | Violation::PredicateFalseAtWitness { .. }
                | Violation::DomainNotEmpty { .. }
                | Violation::UnknownObligation { .. }
                | Violation::ForeignObligation { .. }
        )
    }

    pub fn record(&self) -> ViolationRecord {
        ViolationRecord { i: self.index(), kind: self.kind().to_string(), detail: self.to_string() }
    }
}

/// One line of `violations.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub i: Option<u64>,
    #[serde(rename = "type")]
    pub kind: String,
    pub detail: String,
}

/// What the system does when a check fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// Stop at the first violation.
    #[default]
    FailFast,
    /// Keep running and collect every violation.
    RecordAndContinue,
}
