//! Memcached-lite: one handler per connection looping receive, process and
//! send; clients injecting commands; a concrete store shared behind a
//! mutex whose Storage guard travels in a container.

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Mutex, MutexGuard};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde_json::{json, Value};

use super::channel::drop_head;
use super::{ConfigError, LossyChannel, Mode, Mutant, ObservableLog, RunOptions, RunOutcome, Scheduler, SchedulerConfig};
use crate::error::Violation;
use crate::guards::{Guard, GuardContainer};
use crate::lock::{new_system, GhostLock, GhostLockSystem};
use crate::ltl::{Obligation, Rule};
use crate::model::memcached::Cache;
use crate::model::{
    canonical_json, memcached::memcached_process, AbsCmd, AbsRes, Bytes, ConId, ConState, MemcachedAction,
    MemcachedGuardKind, MemcachedModel, MemcachedState, Model,
};

type Gl = GhostLock<MemcachedModel>;
type Store = BTreeMap<Vec<u8>, Vec<u8>>;

/// Commands a client may have in flight.
const MAX_OUTSTANDING: usize = 2;
const KEYS: u64 = 3;
const VALUES: u64 = 4;

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// Concrete semantics of one command.
pub fn execute(store: &mut Store, cmd: &AbsCmd) -> AbsRes {
    match cmd {
        AbsCmd::Set(k, v) => {
            store.insert(k.0.clone(), v.0.clone());
            AbsRes::Stored
        }
        AbsCmd::Get(k) => match store.get(&k.0) {
            Some(v) => AbsRes::Value(Bytes(v.clone())),
            None => AbsRes::NotFound,
        },
        AbsCmd::Delete(k) => match store.remove(&k.0) {
            Some(_) => AbsRes::Deleted,
            None => AbsRes::NotFound,
        },
    }
}

/// The Storage guard's opening predicate: the present entries of the
/// abstract cache are exactly the concrete store.
pub fn coupled(cache: &Cache, store: &Store) -> bool {
    cache
        .iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (&k.0, &v.0)))
        .eq(store.iter())
}

/// Whether `res` is a well-formed answer to `cmd`.
pub fn protocol_ok(cmd: &AbsCmd, res: &AbsRes) -> bool {
    matches!(
        (cmd, res),
        (AbsCmd::Set(..), AbsRes::Stored)
            | (AbsCmd::Get(_), AbsRes::Value(_) | AbsRes::NotFound)
            | (AbsCmd::Delete(_), AbsRes::Deleted | AbsRes::NotFound)
    )
}

/// The rendered model module. Identical for every handler configuration
/// with the same number of connections.
pub fn model_definition(connections: u64) -> String {
    MemcachedModel::new(connections).tla_module().map(|m| m.render()).unwrap_or_default()
}

struct Net {
    sys: GhostLockSystem<MemcachedModel>,
    mutant: Option<Mutant>,
    cmd: Vec<Mutex<LossyChannel<AbsCmd>>>,
    res: Vec<Mutex<LossyChannel<AbsRes>>>,
    log: Mutex<ObservableLog>,
    store: Mutex<Store>,
    storage: GuardContainer<MemcachedModel>,
    step: AtomicU64,
    storage_opens: AtomicU64,
    processed: AtomicU64,
}

impl Net {
    fn step(&self) -> u64 {
        self.step.load(Ordering::Relaxed)
    }

    /// Physical queues of connection `c` against the model, inside the
    /// section about to be released.
    fn coherence(&self, gl: &mut Gl, c: ConId) -> Result<(), Violation> {
        let cmd = lock(&self.cmd[c as usize]).contents();
        let res = lock(&self.res[c as usize]).contents();
        let Some((mc, mr)) = gl.state(|s| (s.con_cmd[&c].clone(), s.con_res[&c].clone()))? else {
            return Ok(());
        };
        let index = gl.id()?;
        for (name, ok, physical, model) in [
            (format!("con_cmd[{c}]"), cmd == mc, canonical_json(&cmd), canonical_json(&mc)),
            (format!("con_res[{c}]"), res == mr, canonical_json(&res), canonical_json(&mr)),
        ] {
            if !ok {
                self.sys.report(Violation::ChannelCoherence { index, channel: name, physical, model })?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Phase {
    Recv,
    Process(AbsCmd),
    Send(AbsRes),
}

struct Handler {
    c: ConId,
    gl: Gl,
    guard: Guard<MemcachedModel>,
    phase: Phase,
    /// `□◇SendResponse(c)` from the next send on.
    always: Option<Obligation>,
    discharged: u64,
}

impl Handler {
    fn node(c: ConId) -> String {
        format!("handler-{c}")
    }

    fn enabled(&self, net: &Net) -> bool {
        self.phase != Phase::Recv || !lock(&net.cmd[self.c as usize]).is_empty()
    }

    fn open_con(&self, want: ConState) -> Result<(), Violation> {
        let c = self.c;
        self.guard.open_with(&self.gl, move |s| s.con_state.get(&c) == Some(&want))
    }

    fn step(&mut self, net: &Net) -> Result<(), Violation> {
        match self.phase.clone() {
            Phase::Recv => self.recv(net),
            Phase::Process(cmd) => self.process(net, cmd),
            Phase::Send(res) => self.send(net, res),
        }
    }

    fn recv(&mut self, net: &Net) -> Result<(), Violation> {
        let c = self.c;
        self.gl.acquire()?;
        self.open_con(ConState::Idle)?;
        let cmd = {
            let mut log = lock(&net.log);
            lock(&net.cmd[c as usize])
                .recv(&mut self.gl, |s: &mut MemcachedState| drop_head(s.con_cmd.entry(c).or_default()), &mut log, net.step())?
                .expect("scheduled only when a command is queued")
        };
        if net.mutant != Some(Mutant::MemcachedSkipsConstate) {
            let st = ConState::HaveCommand(cmd.clone());
            self.gl.state(|s| s.con_state.insert(c, st))?;
        }
        net.coherence(&mut self.gl, c)?;
        self.gl.release(MemcachedAction::ReceiveCommand(c, cmd.clone()))?;
        self.phase = Phase::Process(cmd);
        Ok(())
    }

    fn process(&mut self, net: &Net, cmd: AbsCmd) -> Result<(), Violation> {
        let c = self.c;
        let mut store = lock(&net.store);
        let storage = net.storage.retrieve(&Handler::node(c))?;
        self.gl.acquire()?;
        self.open_con(ConState::HaveCommand(cmd.clone()))?;
        let snapshot = store.clone();
        net.storage_opens.fetch_add(1, Ordering::Relaxed);
        storage.open_with(&self.gl, move |s| coupled(&s.cache, &snapshot))?;
        let res = execute(&mut store, &cmd);
        let st = ConState::HaveResponse(res.clone());
        let abs = cmd.clone();
        self.gl.state(|s| {
            s.cache = memcached_process(&s.cache, &abs).0;
            s.con_state.insert(c, st);
        })?;
        net.coherence(&mut self.gl, c)?;
        self.gl.release(MemcachedAction::ProcessCommand(c, cmd, res.clone()))?;
        net.storage.transfer(storage)?;
        drop(store);
        net.processed.fetch_add(1, Ordering::Relaxed);
        self.phase = Phase::Send(res);
        Ok(())
    }

    fn send(&mut self, net: &Net, res: AbsRes) -> Result<(), Violation> {
        let c = self.c;
        let id = self.gl.acquire()?;
        self.open_con(ConState::HaveResponse(res.clone()))?;
        let now = match self.always.take() {
            Some(ob) => {
                let (ev, rest) = self.gl.unfold(ob)?;
                let now = self.gl.strengthen(ev, Rule::EventuallyConcretize { at: id })?;
                self.always = Some(self.gl.strengthen(rest, Rule::AlwaysEventuallyIndexAdvance { to: id + 1 })?);
                Some(now)
            }
            None => None,
        };
        {
            let mut log = lock(&net.log);
            lock(&net.res[c as usize]).send(
                &mut self.gl,
                res.clone(),
                |s: &mut MemcachedState, v| s.con_res.entry(c).or_default().push(v),
                &mut log,
                net.step(),
            )?;
        }
        self.gl.state(|s| s.con_state.insert(c, ConState::Idle))?;
        net.coherence(&mut self.gl, c)?;
        self.gl.release(MemcachedAction::SendResponse(c, res))?;
        if let Some(now) = now {
            self.gl.discharge(now)?;
            if !net.sys.is_erased() {
                self.discharged += 1;
            }
        }
        self.phase = Phase::Recv;
        Ok(())
    }
}

struct Client {
    c: ConId,
    gl: Gl,
    /// Commands sent and not yet answered, oldest first.
    outstanding: VecDeque<AbsCmd>,
    /// Fixed command list; a scripted client waits for each answer.
    script: Option<VecDeque<AbsCmd>>,
    /// Commands still to send in threaded mode.
    budget: Option<u64>,
    answers: Vec<(AbsCmd, AbsRes)>,
}

impl Client {
    fn can_send(&self) -> bool {
        match &self.script {
            Some(s) => self.outstanding.is_empty() && !s.is_empty(),
            None => self.outstanding.len() < MAX_OUTSTANDING && self.budget != Some(0),
        }
    }

    fn can_recv(&self, net: &Net) -> bool {
        !lock(&net.res[self.c as usize]).is_empty()
    }

    fn enabled(&self, net: &Net) -> bool {
        self.can_send() || self.can_recv(net)
    }

    fn done(&self) -> bool {
        !self.can_send() && self.outstanding.is_empty()
    }

    fn random_command(rng: &mut ChaCha8Rng) -> AbsCmd {
        let key = Bytes::from(format!("k{}", rng.gen_range(0..KEYS)).as_str());
        match rng.gen_range(0..3) {
            0 => AbsCmd::Set(key, Bytes::from(format!("v{}", rng.gen_range(0..VALUES)).as_str())),
            1 => AbsCmd::Get(key),
            _ => AbsCmd::Delete(key),
        }
    }

    fn step(&mut self, net: &Net, rng: &mut ChaCha8Rng) -> Result<(), Violation> {
        let send = self.can_send() && (!self.can_recv(net) || rng.gen_bool(0.5));
        let c = self.c;
        if send {
            let cmd = match self.script.as_mut() {
                Some(s) => s.pop_front().expect("can_send checked the script"),
                None => Client::random_command(rng),
            };
            if let Some(b) = self.budget.as_mut() {
                *b -= 1;
            }
            self.gl.acquire()?;
            {
                let mut log = lock(&net.log);
                lock(&net.cmd[c as usize]).send(
                    &mut self.gl,
                    cmd.clone(),
                    |s: &mut MemcachedState, v| s.con_cmd.entry(c).or_default().push(v),
                    &mut log,
                    net.step(),
                )?;
            }
            net.coherence(&mut self.gl, c)?;
            self.gl.release(MemcachedAction::SendCommand(c, cmd.clone()))?;
            self.outstanding.push_back(cmd);
        } else {
            let id = self.gl.acquire()?;
            let res = {
                let mut log = lock(&net.log);
                lock(&net.res[c as usize])
                    .recv(&mut self.gl, |s: &mut MemcachedState| drop_head(s.con_res.entry(c).or_default()), &mut log, net.step())?
                    .expect("scheduled only when a response is queued")
            };
            net.coherence(&mut self.gl, c)?;
            self.gl.release(MemcachedAction::ReceiveResponse(c, res.clone()))?;
            let cmd = self.outstanding.pop_front().expect("a response answers an outstanding command");
            if !protocol_ok(&cmd, &res) {
                net.sys.report(Violation::LemmaViolation {
                    index: id,
                    lemma: "protocol".into(),
                    detail: format!("{cmd:?} answered with {res:?}"),
                })?;
            }
            self.answers.push((cmd, res));
        }
        Ok(())
    }
}

struct Setup {
    sys: GhostLockSystem<MemcachedModel>,
    net: Net,
    handlers: Vec<Handler>,
    clients: Vec<Client>,
}

fn setup_err(msg: impl std::fmt::Display) -> ConfigError {
    ConfigError::Setup(msg.to_string())
}

fn build(cfg: &SchedulerConfig, opts: &RunOptions, clients: u64) -> Result<Setup, ConfigError> {
    cfg.validate()?;
    if clients == 0 {
        return Err(ConfigError::NoClients);
    }
    if let Some(m) = opts.mutant {
        if m.model() != "memcached" {
            return Err(ConfigError::MutantModelMismatch { mutant: m.name().into(), model: "memcached".into() });
        }
    }
    let model = MemcachedModel::new(clients);
    let liveness = opts.liveness.clone().unwrap_or_else(|| model.default_liveness());
    let (sys, mut dispenser, initial) = new_system(model, model.initial(), &liveness).map_err(setup_err)?;
    sys.set_policy(opts.policy);
    sys.set_erasure(cfg.mode == Mode::Erased).map_err(setup_err)?;

    let storage = GuardContainer::new("storage");
    let owner = sys.handle("system").map_err(setup_err)?;
    storage.transfer(dispenser.dispense(MemcachedGuardKind::Storage, "system").map_err(setup_err)?).map_err(setup_err)?;

    let mut handlers = Vec::new();
    let mut client_nodes = Vec::new();
    for c in model.cons() {
        let node = Handler::node(c);
        handlers.push(Handler {
            c,
            gl: sys.handle(&node).map_err(setup_err)?,
            guard: dispenser.dispense(MemcachedGuardKind::Connection(c), &node).map_err(setup_err)?,
            phase: Phase::Recv,
            always: None,
            discharged: 0,
        });
        client_nodes.push(Client {
            c,
            gl: sys.handle(&format!("client-{c}")).map_err(setup_err)?,
            outstanding: VecDeque::new(),
            script: None,
            budget: None,
            answers: Vec::new(),
        });
    }
    // ∀con: one instance per handler, then the emptied quantifier goes.
    for ob in initial {
        if ob.property != "mc" {
            return Err(setup_err(format!("no script for property `{}`", ob.property)));
        }
        let mut rest = ob.obligation;
        for h in handlers.iter_mut() {
            let (inst, r) = owner.qsplit(rest, h.c).map_err(setup_err)?;
            h.always = Some(sys.assign(inst, &Handler::node(h.c)).map_err(setup_err)?);
            rest = r;
        }
        owner.qempty(rest).map_err(setup_err)?;
    }
    let net = Net {
        sys: sys.clone(),
        mutant: opts.mutant,
        cmd: model.cons().map(|c| Mutex::new(LossyChannel::new(&format!("con_cmd[{c}]")))).collect(),
        res: model.cons().map(|c| Mutex::new(LossyChannel::new(&format!("con_res[{c}]")))).collect(),
        log: Mutex::new(ObservableLog::default()),
        store: Mutex::new(Store::new()),
        storage,
        step: AtomicU64::new(0),
        storage_opens: AtomicU64::new(0),
        processed: AtomicU64::new(0),
    };
    Ok(Setup { sys, net, handlers, clients: client_nodes })
}

fn abort_all(s: &mut Setup) {
    for h in s.handlers.iter_mut() {
        h.gl.abort();
    }
    for c in s.clients.iter_mut() {
        c.gl.abort();
    }
}

/// Cooperative loop: each step runs one section of a uniformly chosen
/// enabled handler or client. Stops early once nothing is enabled.
fn run_cooperative(s: &mut Setup, sched: &mut Scheduler, max_steps: u64) -> u64 {
    let mut steps = 0;
    while steps < max_steps {
        s.net.step.store(steps, Ordering::Relaxed);
        let mut enabled = Vec::new();
        for (i, h) in s.handlers.iter().enumerate() {
            if h.enabled(&s.net) {
                enabled.push(i);
            }
        }
        let n = s.handlers.len();
        for (i, c) in s.clients.iter().enumerate() {
            if c.enabled(&s.net) {
                enabled.push(n + i);
            }
        }
        if enabled.is_empty() {
            break;
        }
        let pick = enabled[sched.below(enabled.len())];
        let r = if pick < n {
            s.handlers[pick].step(&s.net)
        } else {
            let (net, client) = (&s.net, &mut s.clients[pick - n]);
            client.step(net, &mut sched.rng)
        };
        steps += 1;
        if r.is_err() {
            abort_all(s);
            break;
        }
    }
    steps
}

/// One OS thread per handler and client. Clients send a fixed budget of
/// commands each; the seed only seeds their command streams.
fn run_threaded(s: &mut Setup, cfg: &SchedulerConfig) -> u64 {
    let clients = s.clients.len() as u64;
    let budget = (cfg.max_steps / (4 * clients)).max(1);
    for c in s.clients.iter_mut() {
        c.budget = Some(budget);
    }
    let done = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let steps = AtomicU64::new(0);
    let net = &s.net;
    std::thread::scope(|scope| {
        for h in s.handlers.iter_mut() {
            let (done, failed, steps) = (&done, &failed, &steps);
            scope.spawn(move || loop {
                if failed.load(Ordering::SeqCst) {
                    h.gl.abort();
                    return;
                }
                if h.enabled(net) {
                    steps.fetch_add(1, Ordering::Relaxed);
                    if h.step(net).is_err() {
                        h.gl.abort();
                        failed.store(true, Ordering::SeqCst);
                        return;
                    }
                } else if done.load(Ordering::SeqCst) == clients as usize {
                    return;
                } else {
                    std::thread::yield_now();
                }
            });
        }
        for c in s.clients.iter_mut() {
            let (done, failed, steps) = (&done, &failed, &steps);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(c.c));
            scope.spawn(move || {
                while !c.done() {
                    if failed.load(Ordering::SeqCst) {
                        c.gl.abort();
                        break;
                    }
                    if c.enabled(net) {
                        steps.fetch_add(1, Ordering::Relaxed);
                        if c.step(net, &mut rng).is_err() {
                            c.gl.abort();
                            failed.store(true, Ordering::SeqCst);
                            break;
                        }
                    } else {
                        std::thread::yield_now();
                    }
                }
                done.fetch_add(1, Ordering::SeqCst);
            });
        }
    });
    steps.into_inner()
}

fn finish(s: Setup, cfg: &SchedulerConfig, steps: u64) -> (RunOutcome<MemcachedModel>, Vec<Vec<(AbsCmd, AbsRes)>>) {
    let Setup { sys, net, handlers, clients } = s;
    let erased = sys.is_erased();
    let mut stats = serde_json::Map::new();
    let mut put = |k: String, v: Value| {
        stats.insert(k, v);
    };
    for h in &handlers {
        put(format!("discharged_con_{}", h.c), json!(h.discharged));
    }
    put("clients".into(), json!(clients.len()));
    put("processed".into(), json!(net.processed.load(Ordering::Relaxed)));
    put("storage_opens".into(), json!(net.storage_opens.load(Ordering::Relaxed)));
    put("store_size".into(), json!(lock(&net.store).len()));
    let answers = clients.into_iter().map(|c| c.answers).collect();
    let observable = net.log.into_inner().unwrap_or_else(|e| e.into_inner());
    let outcome = RunOutcome {
        model: *sys.model(),
        config: cfg.clone(),
        steps_executed: steps,
        trace: sys.trace(),
        aux: sys.aux_records(),
        violations: sys.violations(),
        liveness: (!erased).then(|| sys.liveness_report()),
        observable,
        stats,
    };
    (outcome, answers)
}

/// Runs `opts.clients` connections for `cfg.max_steps` scheduler steps, or
/// threaded when `opts.threaded`.
pub fn run_memcached(cfg: &SchedulerConfig, opts: &RunOptions) -> Result<RunOutcome<MemcachedModel>, ConfigError> {
    let mut s = build(cfg, opts, opts.clients)?;
    let steps = if opts.threaded {
        run_threaded(&mut s, cfg)
    } else {
        let mut sched = Scheduler::new(cfg);
        run_cooperative(&mut s, &mut sched, cfg.max_steps)
    };
    Ok(finish(s, cfg, steps).0)
}

/// A single client sending `script` one command at a time. Returns every
/// answer in order together with the run.
pub fn run_script(
    script: &[AbsCmd],
    opts: &RunOptions,
) -> Result<(Vec<AbsRes>, RunOutcome<MemcachedModel>), ConfigError> {
    let cfg = SchedulerConfig { max_steps: 8 * script.len() as u64 + 8, ..SchedulerConfig::default() };
    let mut s = build(&cfg, opts, 1)?;
    s.clients[0].script = Some(script.iter().cloned().collect());
    let mut sched = Scheduler::new(&cfg);
    let steps = run_cooperative(&mut s, &mut sched, cfg.max_steps);
    let (outcome, mut answers) = finish(s, &cfg, steps);
    let answers = answers.pop().unwrap_or_default().into_iter().map(|(_, r)| r).collect();
    Ok((answers, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(s: &str) -> Bytes {
        Bytes::from(s)
    }

    #[test]
    fn four_clients_clean() {
        let cfg = SchedulerConfig { seed: 7, max_steps: 2000, ..SchedulerConfig::default() };
        let out = run_memcached(&cfg, &RunOptions::default()).unwrap();
        assert!(out.passed(), "{:?}", out.violations);
        for c in 0..4 {
            assert!(out.stat(&format!("discharged_con_{c}")) > 0, "{:?}", out.stats);
        }
        assert!(out.stat("storage_opens") > 0);
    }

    #[test]
    fn skipped_constate_is_caught() {
        let cfg = SchedulerConfig { seed: 1, max_steps: 500, ..SchedulerConfig::default() };
        let out = run_memcached(&cfg, &RunOptions::with_mutant(Mutant::MemcachedSkipsConstate)).unwrap();
        assert_eq!(out.violation_kinds().first(), Some(&"RefinementViolation"));
    }

    #[test]
    fn scripted_set_get_delete() {
        let script = [
            AbsCmd::Get(b("k")),
            AbsCmd::Set(b("k"), b("v")),
            AbsCmd::Get(b("k")),
            AbsCmd::Delete(b("k")),
            AbsCmd::Delete(b("k")),
        ];
        let (answers, out) = run_script(&script, &RunOptions::default()).unwrap();
        assert!(out.passed());
        assert_eq!(
            answers,
            [AbsRes::NotFound, AbsRes::Stored, AbsRes::Value(b("v")), AbsRes::Deleted, AbsRes::NotFound]
        );
    }

    #[test]
    fn threaded_run_is_clean() {
        let cfg = SchedulerConfig { seed: 3, max_steps: 400, ..SchedulerConfig::default() };
        let opts = RunOptions { threaded: true, ..RunOptions::default() };
        let out = run_memcached(&cfg, &opts).unwrap();
        assert!(out.passed(), "{:?}", out.violations);
        assert_eq!(out.stat("processed"), 4 * 25);
    }

    #[test]
    fn coupling_examples() {
        let mut cache = Cache::new();
        let mut store = Store::new();
        assert!(coupled(&cache, &store));
        cache.insert(b("a"), None);
        assert!(coupled(&cache, &store));
        cache.insert(b("b"), Some(b("1")));
        assert!(!coupled(&cache, &store));
        store.insert(b"b".to_vec(), b"1".to_vec());
        assert!(coupled(&cache, &store));
    }
}
