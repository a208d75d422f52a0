//! The ghost lock: serialized critical sections over the single shared model
//! state, trace recording and release-time refinement checks.
//!
//! One [`GhostLockSystem`] exists per simulated system. Each node owns one
//! [`GhostLock`] handle; a critical section runs from `acquire` to
//! `release`/`release_stutter` and becomes one trace record.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use serde_json::Value;
use thiserror::Error;

use crate::error::{Policy, Violation};
use crate::guards::{GuardDispenser, GuardEntry};
use crate::ltl::{LivenessReport, Obligation, ObligationLedger, Rule};
use crate::model::{canonical_json, required_guards, Model};
use crate::trace::{AuxRecord, Trace};

#[derive(Debug, Error)]
pub enum SetupError {
    #[error(transparent)]
    Violation(#[from] Violation),
    #[error("model `{model}` has no liveness property `{id}`")]
    UnknownProperty { model: String, id: String },
}

/// The open critical section of the current holder.
pub(crate) struct Section<M: Model> {
    pub(crate) node: String,
    pub(crate) index: u64,
    pub(crate) pre: M::State,
    pub(crate) opened: BTreeSet<M::GuardKind>,
    /// Environment projection the shims have vouched for so far.
    pub(crate) expected_env: M::Env,
}

pub(crate) struct Core<M: Model> {
    pub(crate) state: M::State,
    pub(crate) trace: Trace<M>,
    pub(crate) section: Option<Section<M>>,
    pub(crate) handles: BTreeSet<String>,
    pub(crate) guards: BTreeMap<M::GuardKind, GuardEntry<M>>,
    pub(crate) ledger: ObligationLedger<M>,
    pub(crate) violations: Vec<Violation>,
    pub(crate) aux: Vec<AuxRecord>,
    pub(crate) policy: Policy,
    pub(crate) erased: bool,
    pub(crate) started: bool,
    /// Section counter kept in erased mode too, so `id()` stays meaningful.
    pub(crate) sections: u64,
    /// Oracle verdicts of guard stability, keyed by guard and predicate name.
    pub(crate) stability: BTreeMap<(String, String), Option<Violation>>,
}

impl<M: Model> Core<M> {
    /// Records a check failure; under fail-fast it is also returned.
    pub(crate) fn report(&mut self, v: Violation) -> Result<(), Violation> {
        self.violations.push(v.clone());
        match self.policy {
            Policy::FailFast => Err(v),
            Policy::RecordAndContinue => Ok(()),
        }
    }

    /// Records a misuse that the caller cannot continue past.
    pub(crate) fn fatal(&mut self, v: Violation) -> Violation {
        self.violations.push(v.clone());
        v
    }

    pub(crate) fn aux(&mut self, guard: Value, event: String) {
        let i = self.trace.len() as u64;
        self.aux.push(AuxRecord { i, guard, event });
    }
}

pub(crate) struct Shared<M: Model> {
    pub(crate) model: M,
    pub(crate) core: Mutex<Core<M>>,
    free: Condvar,
}

/// Shared handle to the lock system; cloning shares the same system.
pub struct GhostLockSystem<M: Model> {
    pub(crate) shared: Arc<Shared<M>>,
}

impl<M: Model> Clone for GhostLockSystem<M> {
    fn clone(&self) -> Self {
        Self { shared: Arc::clone(&self.shared) }
    }
}

/// A liveness obligation issued at system creation, with its property id.
pub struct InitialObligation {
    pub property: String,
    pub obligation: Obligation,
}

/// A fresh system, its guard dispenser and the initial obligations.
pub type NewSystem<M> = (GhostLockSystem<M>, GuardDispenser<M>, Vec<InitialObligation>);

/// Creates the system for `initial`, a dispenser for every guard of the
/// model and `show_at(φ, 0)` for each selected liveness property. The
/// initial obligations are owned by `"system"`; nodes take them with
/// [`GhostLockSystem::assign`].
pub fn new_system<M: Model>(
    model: M,
    initial: M::State,
    liveness: &[String],
) -> Result<NewSystem<M>, SetupError> {
    if !model.init(&initial) {
        return Err(Violation::InitViolation { state: canonical_json(&initial) }.into());
    }
    let mut ledger = ObligationLedger::new();
    for a in model.fairness_assumptions() {
        ledger.assume_fair(&a.name, a.formula);
    }
    let mut obligations = Vec::new();
    for id in liveness {
        let p = model
            .liveness_property(id)
            .ok_or_else(|| SetupError::UnknownProperty { model: model.name().into(), id: id.clone() })?;
        let ob = ledger.issue("system", p.formula, 0, p.depends_on);
        obligations.push(InitialObligation { property: p.id, obligation: ob });
    }
    let core = Core {
        state: initial.clone(),
        trace: Trace::new(initial),
        section: None,
        handles: BTreeSet::new(),
        guards: BTreeMap::new(),
        ledger,
        violations: Vec::new(),
        aux: Vec::new(),
        policy: Policy::default(),
        erased: false,
        started: false,
        sections: 0,
        stability: BTreeMap::new(),
    };
    let sys = GhostLockSystem { shared: Arc::new(Shared { model, core: Mutex::new(core), free: Condvar::new() }) };
    let dispenser = GuardDispenser::new(sys.clone());
    Ok((sys, dispenser, obligations))
}

impl<M: Model> GhostLockSystem<M> {
    pub(crate) fn core(&self) -> MutexGuard<'_, Core<M>> {
        self.shared.core.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn model(&self) -> &M {
        &self.shared.model
    }

    /// The handle for `node`. Each node gets at most one.
    pub fn handle(&self, node: &str) -> Result<GhostLock<M>, Violation> {
        let mut core = self.core();
        if !core.handles.insert(node.to_string()) {
            return Err(core.fatal(Violation::DuplicateHandle { node: node.to_string() }));
        }
        Ok(GhostLock { sys: self.clone(), node: node.to_string(), locked: false })
    }

    /// Turns ghost bookkeeping off or on. Only allowed before the first
    /// section.
    pub fn set_erasure(&self, on: bool) -> Result<(), Violation> {
        let mut core = self.core();
        if core.started {
            return Err(core.fatal(Violation::ErasureToggleDuringRun));
        }
        core.erased = on;
        Ok(())
    }

    pub fn is_erased(&self) -> bool {
        self.core().erased
    }

    pub fn set_policy(&self, policy: Policy) {
        self.core().policy = policy;
    }

    pub fn policy(&self) -> Policy {
        self.core().policy
    }

    /// Records a violation found outside the lock (harness checks).
    pub fn report(&self, v: Violation) -> Result<(), Violation> {
        let mut core = self.core();
        if core.erased {
            return Ok(());
        }
        core.report(v)
    }

    pub fn violations(&self) -> Vec<Violation> {
        self.core().violations.clone()
    }

    pub fn trace(&self) -> Trace<M> {
        self.core().trace.clone()
    }

    pub fn with_trace<R>(&self, f: impl FnOnce(&Trace<M>) -> R) -> R {
        f(&self.core().trace)
    }

    pub fn aux_records(&self) -> Vec<AuxRecord> {
        self.core().aux.clone()
    }

    /// Appends an auxiliary log line not tied to a guard (e.g. markers).
    pub fn note(&self, event: &str) {
        let mut core = self.core();
        if !core.erased {
            core.aux(Value::Null, event.to_string());
        }
    }

    pub fn current_state(&self) -> M::State {
        self.core().state.clone()
    }

    /// Index the next critical section will get.
    pub fn next_index(&self) -> u64 {
        self.core().sections
    }

    /// Hands an obligation to `node`.
    pub fn assign(&self, ob: Obligation, node: &str) -> Result<Obligation, Violation> {
        let mut core = self.core();
        if core.erased {
            return Ok(Obligation::erased(node));
        }
        core.ledger.assign(ob, node)
    }

    pub fn assume_fair(&self, name: &str, formula: crate::ltl::Formula<M>) {
        self.core().ledger.assume_fair(name, formula);
    }

    pub fn mark_assumption_violated(&self, name: &str, reason: &str) {
        self.core().ledger.mark_assumption_violated(name, reason);
    }

    /// End-of-run classification of every obligation still held.
    pub fn liveness_report(&self) -> LivenessReport {
        let core = self.core();
        core.ledger.end_of_run(&self.shared.model, &core.trace)
    }

    pub fn held_obligations(&self) -> usize {
        self.core().ledger.held_count()
    }
}

/// A node's handle on the ghost lock. Not shareable between nodes.
pub struct GhostLock<M: Model> {
    pub(crate) sys: GhostLockSystem<M>,
    pub(crate) node: String,
    pub(crate) locked: bool,
}

impl<M: Model> std::fmt::Debug for GhostLock<M> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GhostLock").field("node", &self.node).field("locked", &self.locked).finish()
    }
}

impl<M: Model> GhostLock<M> {
    pub fn node(&self) -> &str {
        &self.node
    }

    pub fn locked(&self) -> bool {
        self.locked
    }

    pub fn system(&self) -> &GhostLockSystem<M> {
        &self.sys
    }

    pub fn is_erased(&self) -> bool {
        self.sys.is_erased()
    }

    /// Starts a critical section, blocking while another node holds the
    /// lock. Returns the section's trace index.
    pub fn acquire(&mut self) -> Result<u64, Violation> {
        let shared = &self.sys.shared;
        let mut core = self.sys.core();
        if self.locked {
            return Err(core.fatal(Violation::ReentrancyViolation { node: self.node.clone() }));
        }
        core.started = true;
        if !core.erased {
            while core.section.is_some() {
                core = shared.free.wait(core).unwrap_or_else(|e| e.into_inner());
            }
            let pre = core.state.clone();
            let expected_env = shared.model.env_projection(&pre);
            let index = core.trace.len() as u64;
            core.section =
                Some(Section { node: self.node.clone(), index, pre, opened: BTreeSet::new(), expected_env });
        }
        self.locked = true;
        Ok(core.sections)
    }

    /// Trace index of the open section.
    pub fn id(&self) -> Result<u64, Violation> {
        let mut core = self.sys.core();
        if !self.locked {
            return Err(core.fatal(Violation::UseAfterRelease { node: self.node.clone() }));
        }
        Ok(core.sections)
    }

    /// Reads or writes the model state inside the section. Skipped, with
    /// `None`, when ghost code is erased.
    pub fn state<R>(&mut self, f: impl FnOnce(&mut M::State) -> R) -> Result<Option<R>, Violation> {
        let mut core = self.sys.core();
        if !self.locked {
            return Err(core.fatal(Violation::UseAfterRelease { node: self.node.clone() }));
        }
        if core.erased {
            return Ok(None);
        }
        Ok(Some(f(&mut core.state)))
    }

    /// State update performed by an I/O shim. Besides the update, the
    /// resulting environment projection becomes the one the release check
    /// expects; environment changes made any other way are violations.
    pub fn shim<R>(&mut self, channel: &str, f: impl FnOnce(&mut M::State) -> R) -> Result<Option<R>, Violation> {
        let mut core = self.sys.core();
        if !self.locked {
            return Err(core.fatal(Violation::ShimOutsideCriticalSection {
                channel: channel.to_string(),
                node: self.node.clone(),
            }));
        }
        if core.erased {
            return Ok(None);
        }
        let r = f(&mut core.state);
        let env = self.sys.shared.model.env_projection(&core.state);
        if let Some(sec) = core.section.as_mut() {
            sec.expected_env = env;
        }
        Ok(Some(r))
    }

    /// Ends the section as one model step labelled `a`.
    pub fn release(&mut self, a: M::Action) -> Result<(), Violation> {
        self.finish(Some(a))
    }

    /// Ends the section as a stutter step; the state must be unchanged.
    pub fn release_stutter(&mut self) -> Result<(), Violation> {
        self.finish(None)
    }

    /// Abandons the section after a fail-fast violation: the state is
    /// rolled back, guards opened in it are closed unchanged and nothing is
    /// recorded.
    pub fn abort(&mut self) {
        if !self.locked {
            return;
        }
        self.locked = false;
        let mut core = self.sys.core();
        if let Some(sec) = core.section.take() {
            core.state = sec.pre;
            for g in &sec.opened {
                if let Some(e) = core.guards.get_mut(g) {
                    e.open_in = None;
                }
            }
            self.sys.shared.free.notify_all();
        }
    }

    fn finish(&mut self, action: Option<M::Action>) -> Result<(), Violation> {
        let model = &self.sys.shared.model;
        let mut guard = self.sys.core();
        let core = &mut *guard;
        if !self.locked {
            return Err(core.fatal(Violation::NotLocked { node: self.node.clone() }));
        }
        self.locked = false;
        core.sections += 1;
        if core.erased {
            return Ok(());
        }
        let sec = core.section.take().expect("a locked handle has an open section");
        let post = core.state.clone();
        let index = sec.index;
        let mut found = Vec::new();
        let actual_env = model.env_projection(&post);
        if actual_env != sec.expected_env {
            found.push(Violation::EnvContractViolation {
                index,
                node: self.node.clone(),
                expected: canonical_json(&sec.expected_env),
                actual: canonical_json(&actual_env),
            });
        }
        match &action {
            Some(a) => {
                if !model.next(&sec.pre, &post, a) {
                    found.push(Violation::RefinementViolation {
                        index,
                        node: self.node.clone(),
                        action: canonical_json(a),
                        pre: canonical_json(&sec.pre),
                        post: canonical_json(&post),
                    });
                }
                for g in required_guards(model, a) {
                    if !sec.opened.contains(&g) {
                        found.push(Violation::GuardViolation {
                            index,
                            node: self.node.clone(),
                            action: canonical_json(a),
                            missing: canonical_json(&g),
                        });
                    }
                }
            }
            None => {
                if sec.pre != post {
                    found.push(Violation::StutterViolation {
                        index,
                        node: self.node.clone(),
                        pre: canonical_json(&sec.pre),
                        post: canonical_json(&post),
                    });
                }
            }
        }
        for g in &sec.opened {
            if let Some(e) = core.guards.get_mut(g) {
                e.last_state = post.clone();
                e.last_index = index + 1;
                e.open_in = None;
            }
            core.aux(canonical_json(g), "close".into());
        }
        core.trace.push_step(&sec.node, action, post, sec.opened.into_iter().collect());
        self.sys.shared.free.notify_all();
        let mut first = Ok(());
        for v in found {
            let r = core.report(v);
            if first.is_ok() {
                first = r;
            }
        }
        first
    }

    // ---- obligation ledger ----------------------------------------------

    /// L.Discharge.
    pub fn discharge(&self, ob: Obligation) -> Result<(), Violation> {
        let model = &self.sys.shared.model;
        let mut guard = self.sys.core();
        let core = &mut *guard;
        if core.erased {
            return Ok(());
        }
        match core.ledger.discharge(model, &self.node, ob, &core.trace) {
            Ok(()) => Ok(()),
            Err(v) => core.report(v),
        }
    }

    /// Applies a catalog rule; the children come back in the rule's order.
    pub fn apply_rule(&self, ob: Obligation, rule: Rule) -> Result<Vec<Obligation>, Violation> {
        let mut core = self.sys.core();
        if core.erased {
            return Ok((0..rule.arity()).map(|_| Obligation::erased(&self.node)).collect());
        }
        core.ledger.apply_rule(&self.node, ob, rule).map_err(|v| core.fatal(v))
    }

    fn pair(&self, ob: Obligation, rule: Rule) -> Result<(Obligation, Obligation), Violation> {
        let mut kids = self.apply_rule(ob, rule)?;
        let second = kids.pop().expect("two children");
        let first = kids.pop().expect("two children");
        Ok((first, second))
    }

    /// `□φ@i` into `(φ@i, □φ@(i+1))`.
    pub fn unfold(&self, ob: Obligation) -> Result<(Obligation, Obligation), Violation> {
        self.pair(ob, Rule::AlwaysUnfold)
    }

    /// L.Str with a single-child rule.
    pub fn strengthen(&self, ob: Obligation, rule: Rule) -> Result<Obligation, Violation> {
        Ok(self.apply_rule(ob, rule)?.pop().expect("one child"))
    }

    /// L.Split.
    pub fn split(&self, ob: Obligation) -> Result<(Obligation, Obligation), Violation> {
        self.pair(ob, Rule::Split)
    }

    /// L.QSplit: the instance at `value` and the residual quantifier.
    pub fn qsplit(&self, ob: Obligation, value: u64) -> Result<(Obligation, Obligation), Violation> {
        self.pair(ob, Rule::QSplit { value })
    }

    /// L.QEmpty.
    pub fn qempty(&self, ob: Obligation) -> Result<(), Violation> {
        self.apply_rule(ob, Rule::QEmpty).map(|_| ())
    }

    pub fn set_measure(&self, ob: &Obligation, tuple: Vec<u64>) -> Result<(), Violation> {
        let mut core = self.sys.core();
        if core.erased {
            return Ok(());
        }
        core.ledger.set_measure(&self.node, ob, tuple).map_err(|v| core.fatal(v))
    }

    /// Loop-head measure check for every obligation this node holds.
    pub fn checkpoint(&self, site: &str) -> Result<(), Violation> {
        let mut core = self.sys.core();
        if core.erased {
            return Ok(());
        }
        let found = core.ledger.checkpoint(&self.node, site);
        let mut first = Ok(());
        for v in found {
            let r = core.report(v);
            if first.is_ok() {
                first = r;
            }
        }
        first
    }
}

impl<M: Model> Drop for GhostLock<M> {
    fn drop(&mut self) {
        if !self.locked {
            return;
        }
        let mut core = self.sys.core();
        if let Some(sec) = core.section.take() {
            // The section's effects are rolled back; nothing was recorded.
            core.state = sec.pre;
            core.violations.push(Violation::ReleaseObligationLeaked { node: self.node.clone(), index: sec.index });
            self.sys.shared.free.notify_all();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExampleAction, ExampleGuardKind, ExampleModel, ExampleState};

    fn system() -> (GhostLockSystem<ExampleModel>, GuardDispenser<ExampleModel>) {
        let (sys, d, _) = new_system(ExampleModel::default(), ExampleState::default(), &[]).unwrap();
        (sys, d)
    }

    #[test]
    fn init_is_checked() {
        let bad = ExampleState { a_ctr: 1, ..Default::default() };
        let err = new_system(ExampleModel::default(), bad, &[]).err().unwrap();
        assert!(matches!(err, SetupError::Violation(Violation::InitViolation { .. })));
    }

    #[test]
    fn initial_obligation_is_seeded() {
        let (_, _, obs) = new_system(ExampleModel::default(), ExampleState::default(), &["1".into()]).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].property, "1");
        let err = new_system(ExampleModel::default(), ExampleState::default(), &["9".into()]).err().unwrap();
        assert!(matches!(err, SetupError::UnknownProperty { .. }));
    }

    #[test]
    fn sections_get_consecutive_indices() {
        let (sys, mut d) = system();
        let g = d.dispense(ExampleGuardKind::NodeA, "A").unwrap();
        let mut gl = sys.handle("A").unwrap();
        assert_eq!(gl.acquire().unwrap(), 0);
        g.open(&gl).unwrap();
        gl.shim("a_to_b", |s| s.a_to_b.push(0)).unwrap();
        gl.release(ExampleAction::ASend).unwrap();
        assert_eq!(gl.acquire().unwrap(), 1);
        gl.release_stutter().unwrap();
        assert_eq!(sys.trace().len(), 2);
        assert!(sys.violations().is_empty());
    }

    #[test]
    fn misuse_is_reported() {
        let (sys, _) = system();
        let mut gl = sys.handle("A").unwrap();
        assert!(matches!(sys.handle("A"), Err(Violation::DuplicateHandle { .. })));
        assert!(matches!(gl.state(|s| s.a_ctr), Err(Violation::UseAfterRelease { .. })));
        assert!(matches!(gl.release_stutter(), Err(Violation::NotLocked { .. })));
        gl.acquire().unwrap();
        assert!(matches!(gl.acquire(), Err(Violation::ReentrancyViolation { .. })));
        assert!(matches!(sys.set_erasure(true), Err(Violation::ErasureToggleDuringRun)));
        gl.release_stutter().unwrap();
    }

    #[test]
    fn release_checks() {
        let (sys, mut d) = system();
        let g = d.dispense(ExampleGuardKind::NodeA, "A").unwrap();
        let mut gl = sys.handle("A").unwrap();
        gl.acquire().unwrap();
        g.open(&gl).unwrap();
        gl.shim("a_to_b", |s| s.a_to_b.push(1)).unwrap();
        assert!(matches!(gl.release(ExampleAction::ASend), Err(Violation::RefinementViolation { index: 0, .. })));

        let (sys, _) = system();
        let mut gl = sys.handle("A").unwrap();
        gl.acquire().unwrap();
        gl.shim("a_to_b", |s| s.a_to_b.push(0)).unwrap();
        let err = gl.release(ExampleAction::ASend).unwrap_err();
        assert!(matches!(err, Violation::GuardViolation { .. }), "{err}");

        let (sys, _) = system();
        let mut gl = sys.handle("A").unwrap();
        gl.acquire().unwrap();
        gl.state(|s| s.a_ctr += 1).unwrap();
        assert!(matches!(gl.release_stutter(), Err(Violation::StutterViolation { .. })));

        let (sys, _) = system();
        let mut gl = sys.handle("A").unwrap();
        gl.acquire().unwrap();
        gl.state(|s| s.a_to_b.push(0)).unwrap();
        gl.shim("noop", |_| ()).unwrap();
        gl.state(|s| s.a_to_b.push(0)).unwrap();
        assert!(matches!(gl.release_stutter(), Err(Violation::EnvContractViolation { .. })));
    }

    #[test]
    fn record_and_continue_collects() {
        let (sys, _) = system();
        sys.set_policy(Policy::RecordAndContinue);
        let mut gl = sys.handle("A").unwrap();
        for _ in 0..3 {
            gl.acquire().unwrap();
            gl.state(|s| s.a_ctr += 1).unwrap();
            gl.release_stutter().unwrap();
        }
        assert_eq!(sys.violations().len(), 3);
    }

    #[test]
    fn erased_mode_records_nothing() {
        let (sys, _) = system();
        sys.set_erasure(true).unwrap();
        let mut gl = sys.handle("A").unwrap();
        gl.acquire().unwrap();
        assert_eq!(gl.state(|s| s.a_ctr += 7).unwrap(), None);
        gl.release(ExampleAction::ARecv).unwrap();
        assert!(sys.trace().is_empty());
        assert!(sys.violations().is_empty());
        assert_eq!(sys.next_index(), 1);
    }

    #[test]
    fn leaked_section_is_reported() {
        let (sys, _) = system();
        {
            let mut gl = sys.handle("A").unwrap();
            gl.acquire().unwrap();
            gl.state(|s| s.a_ctr = 5).unwrap();
        }
        assert!(matches!(sys.violations()[0], Violation::ReleaseObligationLeaked { .. }));
        assert_eq!(sys.current_state().a_ctr, 0);
    }

    #[test]
    fn node_a_proof_script() {
        let (sys, mut d, mut obs) =
            new_system(ExampleModel::default(), ExampleState::default(), &["1".into()]).unwrap();
        let g = d.dispense(ExampleGuardKind::NodeA, "A").unwrap();
        let mut gl = sys.handle("A").unwrap();
        let mut ob = sys.assign(obs.pop().unwrap().obligation, "A").unwrap();
        let mut show_from = 0;
        for _ in 0..3 {
            let id = gl.acquire().unwrap();
            assert!(id >= show_from);
            let (now, rest) = gl.unfold(ob).unwrap();
            let now = gl.strengthen(now, Rule::EventuallyConcretize { at: id }).unwrap();
            ob = gl.strengthen(rest, Rule::AlwaysEventuallyIndexAdvance { to: id + 1 }).unwrap();
            g.open(&gl).unwrap();
            gl.shim("a_to_b", |s| s.a_to_b.push(s.a_ctr)).unwrap();
            gl.release(ExampleAction::ASend).unwrap();
            gl.discharge(now).unwrap();
            show_from = id + 1;
        }
        let _ = ob;
        let r = sys.liveness_report();
        assert_eq!(r.discharged.get("action"), Some(&3));
        assert_eq!(r.pending.len(), 1);
        assert!(r.balanced());
    }
}
