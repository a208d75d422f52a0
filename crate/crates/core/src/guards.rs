//! Affine guard tokens, the dispenser that hands each one out once, and the
//! base-case/inductive-case check run when a guard is opened with a
//! predicate.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use crate::error::Violation;
use crate::lock::{GhostLock, GhostLockSystem};
use crate::model::{canonical_json, Model, OracleBounds};

/// Registry entry for a dispensed guard.
pub(crate) struct GuardEntry<M: Model> {
    pub(crate) last_state: M::State,
    pub(crate) last_index: u64,
    pub(crate) open_in: Option<u64>,
}

/// Hands out every non-environment guard of the model at most once.
pub struct GuardDispenser<M: Model> {
    sys: GhostLockSystem<M>,
    dispensed: BTreeSet<M::GuardKind>,
}

impl<M: Model> GuardDispenser<M> {
    pub(crate) fn new(sys: GhostLockSystem<M>) -> Self {
        Self { sys, dispensed: BTreeSet::new() }
    }

    /// A fresh guard owned by `node`, last closed at the initial state.
    pub fn dispense(&mut self, kind: M::GuardKind, node: &str) -> Result<Guard<M>, Violation> {
        let model = self.sys.model();
        let mut core = self.sys.core();
        if model.is_environment_guard(&kind) {
            return Err(core.fatal(Violation::EnvironmentGuardRequested { guard: canonical_json(&kind) }));
        }
        if !self.dispensed.insert(kind.clone()) {
            return Err(core.fatal(Violation::DoubleDispense { guard: canonical_json(&kind) }));
        }
        let last_state = core.trace.initial.clone();
        core.guards.insert(kind.clone(), GuardEntry { last_state, last_index: 0, open_in: None });
        if !core.erased {
            core.aux(canonical_json(&kind), format!("dispense:{node}"));
        }
        Ok(Guard { kind, owner: node.to_string(), sys: self.sys.clone() })
    }
}

/// An affine permission token. Not `Clone`; moving it is the only way to
/// hand it over.
pub struct Guard<M: Model> {
    kind: M::GuardKind,
    owner: String,
    sys: GhostLockSystem<M>,
}

impl<M: Model> std::fmt::Debug for Guard<M> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Guard").field("kind", &self.kind).field("owner", &self.owner).finish()
    }
}

impl<M: Model> Guard<M> {
    pub fn kind(&self) -> &M::GuardKind {
        &self.kind
    }

    pub fn owner(&self) -> &str {
        &self.owner
    }

    /// State recorded when the guard was last closed.
    pub fn last_state(&self) -> M::State {
        self.sys.core().guards[&self.kind].last_state.clone()
    }

    /// Index of the first section after the guard was last closed.
    pub fn last_index(&self) -> u64 {
        self.sys.core().guards[&self.kind].last_index
    }

    pub fn is_open(&self) -> bool {
        self.sys.core().guards[&self.kind].open_in.is_some()
    }

    /// Opens the guard in `gl`'s section with the trivial predicate.
    pub fn open(&self, gl: &GhostLock<M>) -> Result<(), Violation> {
        self.open_checked(gl, None::<fn(&M::State) -> bool>, None)
    }

    /// Opens the guard, checking `pred` at the last-closed state (base
    /// case) and across every step since then that did not need the guard
    /// (inductive case, replayed from the trace), then at the section's
    /// pre-state.
    pub fn open_with(&self, gl: &GhostLock<M>, pred: impl Fn(&M::State) -> bool) -> Result<(), Violation> {
        self.open_checked(gl, Some(pred), None)
    }

    /// Like [`Guard::open_with`], but the inductive case is discharged once
    /// per `(guard, name)` by the oracle over every in-bounds transition.
    pub fn open_with_oracle<F>(
        &self,
        gl: &GhostLock<M>,
        name: &str,
        bounds: &OracleBounds,
        pred: F,
    ) -> Result<(), Violation>
    where
        F: Fn(&M::State) -> bool,
    {
        self.open_checked(gl, Some(pred), Some((name, bounds)))
    }

    fn open_checked<F>(&self, gl: &GhostLock<M>, pred: Option<F>, oracle: Option<(&str, &OracleBounds)>) -> Result<(), Violation>
    where
        F: Fn(&M::State) -> bool,
    {
        let model = self.sys.model();
        let mut guard = self.sys.core();
        let core = &mut *guard;
        if !gl.locked() {
            return Err(core.fatal(Violation::NotLocked { node: gl.node().to_string() }));
        }
        if core.erased {
            return Ok(());
        }
        let gjson = canonical_json(&self.kind);
        if gl.node() != self.owner {
            return Err(core.fatal(Violation::ForeignGuardUse {
                guard: gjson,
                owner: self.owner.clone(),
                node: gl.node().to_string(),
            }));
        }
        let section = core.section.as_ref().expect("a locked handle has an open section");
        let index = section.index;
        let entry = &core.guards[&self.kind];
        if entry.open_in.is_some() {
            return Err(core.fatal(Violation::GuardAlreadyOpen { guard: gjson }));
        }
        let mut found = None;
        if let Some(pred) = &pred {
            if !pred(&entry.last_state) {
                found = Some(Violation::BaseCaseViolation {
                    index,
                    guard: gjson.clone(),
                    last_state: canonical_json(&entry.last_state),
                });
            } else if let Some((name, bounds)) = oracle {
                let key = (gjson.to_string(), name.to_string());
                let verdict = core.stability.entry(key).or_insert_with(|| {
                    let held = BTreeSet::from([self.kind.clone()]);
                    crate::oracle::check_guard_stability(model, bounds, &held, |s| pred(s))
                        .err()
                        .map(|_| Violation::StabilityViolation { index, guard: gjson.clone(), step: index })
                });
                found = verdict.clone();
            } else {
                let from = entry.last_index as usize;
                for r in &core.trace.records[from.min(index as usize)..index as usize] {
                    let needs = r.kind.action().is_some_and(|a| model.guard_needed(a, &self.kind));
                    if !needs && pred(&r.pre) && !pred(&r.post) {
                        found = Some(Violation::StabilityViolation { index, guard: gjson.clone(), step: r.index });
                        break;
                    }
                }
            }
            if found.is_none() && !pred(&section.pre) {
                found = Some(Violation::StabilityViolation { index, guard: gjson.clone(), step: index });
            }
        }
        core.guards.get_mut(&self.kind).expect("dispensed").open_in = Some(index);
        core.section.as_mut().expect("checked above").opened.insert(self.kind.clone());
        core.aux(gjson, format!("open:{}", self.owner));
        match found {
            Some(v) => core.report(v),
            None => Ok(()),
        }
    }
}

/// Opens an environment guard in the section of the environment
/// pseudo-node. Environment guards are never dispensed, so this is the only
/// way to enable environment actions.
pub fn open_environment<M: Model>(gl: &GhostLock<M>, kind: M::GuardKind) -> Result<(), Violation> {
    let sys = gl.system();
    let model = sys.model();
    let mut core = sys.core();
    if !gl.locked() {
        return Err(core.fatal(Violation::NotLocked { node: gl.node().to_string() }));
    }
    if core.erased {
        return Ok(());
    }
    if !model.is_environment_guard(&kind) {
        return Err(core.fatal(Violation::ForeignGuardUse {
            guard: canonical_json(&kind),
            owner: "dispenser".into(),
            node: gl.node().to_string(),
        }));
    }
    core.section.as_mut().expect("a locked handle has an open section").opened.insert(kind);
    Ok(())
}

/// A shared slot holding at most one guard, for guards that travel with a
/// lock (e.g. the storage guard next to the storage mutex).
pub struct GuardContainer<M: Model> {
    name: String,
    slot: Mutex<Option<Guard<M>>>,
}

impl<M: Model> GuardContainer<M> {
    pub fn new(name: &str) -> Self {
        Self { name: name.to_string(), slot: Mutex::new(None) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Moves a closed guard into the container.
    pub fn transfer(&self, g: Guard<M>) -> Result<(), Violation> {
        let mut slot = self.slot.lock().unwrap_or_else(|e| e.into_inner());
        {
            let mut core = g.sys.core();
            let gjson = canonical_json(&g.kind);
            if core.guards[&g.kind].open_in.is_some() {
                return Err(core.fatal(Violation::GuardAlreadyOpen { guard: gjson }));
            }
            if slot.is_some() {
                return Err(core.fatal(Violation::DoubleDispense { guard: gjson }));
            }
            if !core.erased {
                core.aux(gjson, format!("transfer:{}", g.owner));
            }
        }
        *slot = Some(g);
        Ok(())
    }

    /// Takes the guard out; it now belongs to `node`.
    pub fn retrieve(&self, node: &str) -> Result<Guard<M>, Violation> {
        let mut slot = self.slot.lock().unwrap_or_else(|e| e.into_inner());
        let mut g = slot.take().ok_or(Violation::EmptyContainer)?;
        g.owner = node.to_string();
        let mut core = g.sys.core();
        if !core.erased {
            core.aux(canonical_json(&g.kind), format!("retrieve:{node}"));
        }
        drop(core);
        Ok(g)
    }

    pub fn is_empty(&self) -> bool {
        self.slot.lock().unwrap_or_else(|e| e.into_inner()).is_none()
    }
}

/// Guards currently open, by kind, with the section they are open in.
pub fn open_guards<M: Model>(sys: &GhostLockSystem<M>) -> BTreeMap<M::GuardKind, u64> {
    sys.core().guards.iter().filter_map(|(k, e)| e.open_in.map(|i| (k.clone(), i))).collect()
}
