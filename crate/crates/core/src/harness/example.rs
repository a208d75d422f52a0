//! Node A and node B of the running example under the cooperative seeded
//! scheduler, with guard openings and obligation scripts for properties
//! 1 to 3.

use std::collections::BTreeSet;

use serde_json::{json, Value};

use super::channel::drop_head;
use super::{ConfigError, LossyChannel, Mode, Mutant, ObservableLog, RunOptions, RunOutcome, Scheduler, SchedulerConfig};
use crate::error::Violation;
use crate::guards::{open_environment, Guard};
use crate::lock::{new_system, GhostLock, GhostLockSystem};
use crate::ltl::{Obligation, Rule};
use crate::model::{canonical_json, ExampleAction, ExampleGuardKind, ExampleModel, ExampleState, Model};

type Gl = GhostLock<ExampleModel>;

/// Chance that a receive-with-timeout fires even though a reply is queued.
const EARLY_TIMEOUT: f64 = 0.1;

/// B's deterministic computation.
pub fn respond(num: u64) -> u64 {
    2 * num + 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum APhase {
    Send,
    Recv,
}

struct NodeA {
    gl: Gl,
    guard: Guard<ExampleModel>,
    ctr: u64,
    phase: APhase,
    /// `□◇ASend` from the current `show_from` on.
    always: Option<Obligation>,
    discharged: u64,
}

struct NodeB {
    gl: Gl,
    guard: Guard<ExampleModel>,
    work: Option<u64>,
    always: Option<Obligation>,
    /// The residual `∀i` obligation of property 3.
    forall: Option<Obligation>,
    /// Instance of property 3 for the request in `work`.
    instance: Option<Obligation>,
    /// Every `i < sent` has been split off the quantifier.
    sent: u64,
    split: BTreeSet<u64>,
    discharged: u64,
}

struct World {
    sys: GhostLockSystem<ExampleModel>,
    sched: Scheduler,
    mutant: Option<Mutant>,
    env: Gl,
    a_to_b: LossyChannel<u64>,
    b_to_a: LossyChannel<(u64, u64)>,
    log: ObservableLog,
    step: u64,
    losses: u64,
    timeouts: u64,
    lemma5_checks: u64,
}

impl World {
    fn is(&self, m: Mutant) -> bool {
        self.mutant == Some(m)
    }

    /// Physical queues against the model channels after a section.
    fn coherence(&self) -> Result<(), Violation> {
        if self.sys.is_erased() {
            return Ok(());
        }
        let s = self.sys.current_state();
        let index = self.sys.next_index().saturating_sub(1);
        if !self.a_to_b.matches(&s.a_to_b) {
            self.sys.report(Violation::ChannelCoherence {
                index,
                channel: "a_to_b".into(),
                physical: canonical_json(&self.a_to_b.contents()),
                model: canonical_json(&s.a_to_b),
            })?;
        }
        if !self.b_to_a.matches(&s.b_to_a) {
            self.sys.report(Violation::ChannelCoherence {
                index,
                channel: "b_to_a".into(),
                physical: canonical_json(&self.b_to_a.contents()),
                model: canonical_json(&s.b_to_a),
            })?;
        }
        Ok(())
    }

    /// Environment section dropping the head of `a_to_b` (BLoss) or
    /// `b_to_a` (ALoss).
    fn lose(&mut self, on_a_to_b: bool) -> Result<(), Violation> {
        self.env.acquire()?;
        open_environment(&self.env, ExampleGuardKind::Environment)?;
        if on_a_to_b {
            self.a_to_b.lose(&mut self.env, |s: &mut ExampleState| drop_head(&mut s.a_to_b), &mut self.log, self.step)?;
            self.env.release(ExampleAction::BLoss)?;
        } else {
            self.b_to_a.lose(&mut self.env, |s: &mut ExampleState| drop_head(&mut s.b_to_a), &mut self.log, self.step)?;
            self.env.release(ExampleAction::ALoss)?;
        }
        self.losses += 1;
        self.coherence()
    }

    fn a_send(&mut self, a: &mut NodeA) -> Result<(), Violation> {
        a.gl.checkpoint("a-loop")?;
        let id = a.gl.acquire()?;
        let now = match a.always.take() {
            Some(ob) => {
                let (ev, rest) = a.gl.unfold(ob)?;
                let now = a.gl.strengthen(ev, Rule::EventuallyConcretize { at: id })?;
                a.always = Some(a.gl.strengthen(rest, Rule::AlwaysEventuallyIndexAdvance { to: id + 1 })?);
                Some(now)
            }
            None => None,
        };
        let ctr = a.ctr;
        if !self.is(Mutant::GuardNotOpened) {
            a.guard.open_with(&a.gl, |s| s.a_ctr == ctr)?;
        }
        let v = if self.is(Mutant::ASendsPlusOne) { ctr + 1 } else { ctr };
        self.a_to_b.send(&mut a.gl, v, |s: &mut ExampleState, v| s.a_to_b.push(v), &mut self.log, self.step)?;
        if self.is(Mutant::ActionMislabelledStutter) {
            a.gl.release_stutter()?;
        } else {
            a.gl.release(ExampleAction::ASend)?;
        }
        self.coherence()?;
        if let Some(now) = now {
            a.gl.discharge(now)?;
            if !self.sys.is_erased() {
                a.discharged += 1;
            }
        }
        a.phase = APhase::Recv;
        Ok(())
    }

    fn a_recv(&mut self, a: &mut NodeA) -> Result<(), Violation> {
        let early_timeout = self.sched.coin(EARLY_TIMEOUT);
        if !self.b_to_a.is_empty() && !early_timeout && self.sched.roll_loss("b_to_a", "b_to_a") {
            self.lose(false)?;
        }
        let id = a.gl.acquire()?;
        if self.b_to_a.is_empty() || early_timeout {
            self.timeouts += 1;
            a.gl.release_stutter()?;
            a.phase = APhase::Send;
            return self.coherence();
        }
        let ctr = a.ctr;
        a.guard.open_with(&a.gl, |s| s.a_ctr == ctr)?;
        let (n, r) = self
            .b_to_a
            .recv(&mut a.gl, |s: &mut ExampleState| drop_head(&mut s.b_to_a), &mut self.log, self.step)?
            .expect("scheduled only when a reply is queued");
        if let Some(ghost) = a.gl.state(|s| s.a_ctr)? {
            self.lemma5_checks += 1;
            if n > ghost {
                self.sys.report(Violation::LemmaViolation {
                    index: id,
                    lemma: "step5".into(),
                    detail: format!("received ({n}, {r}) with a_ctr = {ghost}"),
                })?;
            }
        }
        if n >= a.ctr {
            a.ctr = n + 1;
        }
        if !self.is(Mutant::ASkipsCounterBump) {
            let ctr = a.ctr;
            a.gl.state(|s| s.a_ctr = ctr)?;
        }
        a.gl.release(ExampleAction::ARecv)?;
        a.phase = APhase::Send;
        self.coherence()
    }

    fn b_recv(&mut self, b: &mut NodeB, a_guard: &Guard<ExampleModel>) -> Result<(), Violation> {
        if self.sched.roll_loss("a_to_b", "a_to_b") {
            return self.lose(true);
        }
        b.gl.checkpoint("b-loop")?;
        b.gl.acquire()?;
        if self.is(Mutant::GuardOpenedByWrongNode) {
            a_guard.open(&b.gl)?;
        } else {
            b.guard.open_with(&b.gl, |s| s.b_work.is_none())?;
        }
        let num = self
            .a_to_b
            .recv(&mut b.gl, |s: &mut ExampleState| drop_head(&mut s.a_to_b), &mut self.log, self.step)?
            .expect("scheduled only when a request is queued");
        if !self.is(Mutant::BOmitsBworkUpdate) {
            b.gl.state(|s| s.b_work = Some(num))?;
        }
        b.gl.release(ExampleAction::BRecv)?;
        self.coherence()?;
        if num >= b.sent && !b.split.contains(&num) {
            if let Some(ob) = b.forall.take() {
                let (inst, rest) = b.gl.qsplit(ob, num)?;
                b.gl.set_measure(&inst, vec![1])?;
                b.forall = Some(rest);
                b.instance = Some(inst);
            }
            b.split.insert(num);
            while b.split.contains(&b.sent) {
                b.sent += 1;
            }
        }
        b.work = Some(num);
        Ok(())
    }

    fn b_respond(&mut self, b: &mut NodeB, num: u64) -> Result<(), Violation> {
        b.gl.checkpoint("b-loop")?;
        let id = b.gl.acquire()?;
        let resp = respond(num);
        b.guard.open_with(&b.gl, |s| s.b_work == Some(num))?;
        let mut now = Vec::new();
        if let Some(ob) = b.always.take() {
            let (ev, rest) = b.gl.unfold(ob)?;
            let at = b.gl.strengthen(ev, Rule::EventuallyConcretize { at: id })?;
            now.push(b.gl.strengthen(at, Rule::ExistsWitness { value: resp })?);
            b.always = Some(b.gl.strengthen(rest, Rule::AlwaysEventuallyIndexAdvance { to: id + 1 })?);
        }
        if let Some(inst) = b.instance.take() {
            let at = b.gl.strengthen(inst, Rule::EventuallyConcretize { at: id })?;
            now.push(b.gl.strengthen(at, Rule::ExistsWitness { value: resp })?);
        }
        let req = if self.is(Mutant::BWrongNumber) { num + 1 } else { num };
        self.b_to_a.send(&mut b.gl, (req, resp), |s: &mut ExampleState, v| s.b_to_a.push(v), &mut self.log, self.step)?;
        b.gl.state(|s| s.b_work = None)?;
        b.gl.release(ExampleAction::BSend(resp))?;
        self.coherence()?;
        for ob in now {
            b.gl.discharge(ob)?;
            if !self.sys.is_erased() {
                b.discharged += 1;
            }
        }
        b.work = None;
        Ok(())
    }
}

fn setup(msg: impl std::fmt::Display) -> ConfigError {
    ConfigError::Setup(msg.to_string())
}

/// Runs nodes A and B for `cfg.max_steps` scheduler steps. Each step runs
/// one node's next section, possibly preceded by an environment loss.
pub fn run_example(cfg: &SchedulerConfig, opts: &RunOptions) -> Result<RunOutcome<ExampleModel>, ConfigError> {
    cfg.validate()?;
    if let Some(m) = opts.mutant {
        if m.model() != "example" {
            return Err(ConfigError::MutantModelMismatch { mutant: m.name().into(), model: "example".into() });
        }
    }
    let model = ExampleModel::default();
    let liveness = opts.liveness.clone().unwrap_or_else(|| model.default_liveness());
    let (sys, mut dispenser, initial) = new_system(model, ExampleState::default(), &liveness).map_err(setup)?;
    sys.set_policy(opts.policy);
    sys.set_erasure(cfg.mode == Mode::Erased).map_err(setup)?;
    for (ch, assumption) in [("a_to_b", "a_to_b-delivery"), ("b_to_a", "b_to_a-delivery")] {
        if cfg.loss_for(ch) >= 1.0 {
            sys.mark_assumption_violated(assumption, &format!("loss probability 1 on {ch}"));
        }
    }
    let mut a = NodeA {
        gl: sys.handle("A").map_err(setup)?,
        guard: dispenser.dispense(ExampleGuardKind::NodeA, "A").map_err(setup)?,
        ctr: 0,
        phase: APhase::Send,
        always: None,
        discharged: 0,
    };
    let mut b = NodeB {
        gl: sys.handle("B").map_err(setup)?,
        guard: dispenser.dispense(ExampleGuardKind::NodeB, "B").map_err(setup)?,
        work: None,
        always: None,
        forall: None,
        instance: None,
        sent: 0,
        split: BTreeSet::new(),
        discharged: 0,
    };
    if opts.mutant == Some(Mutant::BRespondsWithoutBrecv) {
        b.work = Some(0);
    }
    for ob in initial {
        match ob.property.as_str() {
            "1" => a.always = Some(sys.assign(ob.obligation, "A").map_err(setup)?),
            "2" => b.always = Some(sys.assign(ob.obligation, "B").map_err(setup)?),
            "3" => b.forall = Some(sys.assign(ob.obligation, "B").map_err(setup)?),
            other => return Err(setup(format!("no script for property `{other}`"))),
        }
    }
    let mut w = World {
        env: sys.handle("env").map_err(setup)?,
        sys: sys.clone(),
        sched: Scheduler::new(cfg),
        mutant: opts.mutant,
        a_to_b: LossyChannel::new("a_to_b"),
        b_to_a: LossyChannel::new("b_to_a"),
        log: ObservableLog::default(),
        step: 0,
        losses: 0,
        timeouts: 0,
        lemma5_checks: 0,
    };

    let mut steps = 0;
    while steps < cfg.max_steps {
        w.step = steps;
        let b_enabled = b.work.is_some() || !w.a_to_b.is_empty();
        let pick_b = b_enabled && w.sched.coin(0.5);
        let r = if pick_b {
            match b.work {
                Some(num) => w.b_respond(&mut b, num),
                None => w.b_recv(&mut b, &a.guard),
            }
        } else {
            match a.phase {
                APhase::Send => w.a_send(&mut a),
                APhase::Recv => w.a_recv(&mut a),
            }
        };
        steps += 1;
        if r.is_err() {
            a.gl.abort();
            b.gl.abort();
            w.env.abort();
            break;
        }
    }

    let erased = sys.is_erased();
    let mut stats = serde_json::Map::new();
    let mut put = |k: &str, v: Value| {
        stats.insert(k.to_string(), v);
    };
    put("a_ctr", json!(a.ctr));
    put("a_discharged", json!(a.discharged));
    put("b_discharged", json!(b.discharged));
    put("b_sent", json!(b.sent));
    put("losses", json!(w.losses));
    put("timeouts", json!(w.timeouts));
    put("step5_checks", json!(w.lemma5_checks));
    put("observable_events", json!(w.log.len()));
    Ok(RunOutcome {
        model,
        config: cfg.clone(),
        steps_executed: steps,
        trace: sys.trace(),
        aux: sys.aux_records(),
        violations: sys.violations(),
        liveness: (!erased).then(|| sys.liveness_report()),
        observable: w.log,
        stats,
    })
}
