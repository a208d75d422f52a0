//! Memcached-lite: per-connection command/response channels, a per-connection
//! handler state machine and a shared abstract cache.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{appended, sequences, ActionView, LivenessProperty, Model, NamedAssumption, OracleBounds};
use crate::ltl::{AtomRegistry, Domain, Formula, Term};
use crate::tla::{TlaAction, TlaFairness, TlaFairnessKind, TlaModule, TlaType, TlaVariable};

pub type ConId = u64;

/// Byte string, serialized as text with `\\` and `\xNN` escapes for
/// backslashes and bytes outside printable ASCII.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bytes(pub Vec<u8>);

impl Bytes {
    pub fn escaped(&self) -> String {
        let mut out = String::new();
        for &b in &self.0 {
            match b {
                b'\\' => out.push_str("\\\\"),
                0x20..=0x7e => out.push(b as char),
                _ => out.push_str(&format!("\\x{b:02x}")),
            }
        }
        out
    }

    pub fn unescape(s: &str) -> Result<Self, String> {
        let bytes = s.as_bytes();
        let mut out = Vec::with_capacity(bytes.len());
        let mut i = 0;
        while i < bytes.len() {
            match bytes[i] {
                b'\\' => match bytes.get(i + 1) {
                    Some(b'\\') => {
                        out.push(b'\\');
                        i += 2;
                    }
                    Some(b'x') => {
                        let hex = s.get(i + 2..i + 4).ok_or("truncated \\x escape")?;
                        out.push(u8::from_str_radix(hex, 16).map_err(|_| format!("bad escape \\x{hex}"))?);
                        i += 4;
                    }
                    _ => return Err("dangling backslash".into()),
                },
                b => {
                    out.push(b);
                    i += 1;
                }
            }
        }
        Ok(Bytes(out))
    }
}

impl From<&str> for Bytes {
    fn from(s: &str) -> Self {
        Bytes(s.as_bytes().to_vec())
    }
}

impl fmt::Debug for Bytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.escaped())
    }
}

impl fmt::Display for Bytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.escaped())
    }
}

impl Serialize for Bytes {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.escaped())
    }
}

impl<'de> Deserialize<'de> for Bytes {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Bytes;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an escaped byte string")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Bytes, E> {
                Bytes::unescape(v).map_err(E::custom)
            }
        }
        d.deserialize_str(V)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AbsCmd {
    Set(Bytes, Bytes),
    Get(Bytes),
    Delete(Bytes),
}

impl AbsCmd {
    pub fn key(&self) -> &Bytes {
        match self {
            AbsCmd::Set(k, _) | AbsCmd::Get(k) | AbsCmd::Delete(k) => k,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AbsRes {
    Stored,
    Value(Bytes),
    NotFound,
    Deleted,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConState {
    #[default]
    Idle,
    HaveCommand(AbsCmd),
    HaveResponse(AbsRes),
}

pub type Cache = BTreeMap<Bytes, Option<Bytes>>;

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemcachedState {
    pub con_cmd: BTreeMap<ConId, Vec<AbsCmd>>,
    pub con_res: BTreeMap<ConId, Vec<AbsRes>>,
    pub con_state: BTreeMap<ConId, ConState>,
    pub cache: Cache,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MemcachedAction {
    SendCommand(ConId, AbsCmd),
    ReceiveCommand(ConId, AbsCmd),
    SendResponse(ConId, AbsRes),
    ReceiveResponse(ConId, AbsRes),
    ProcessCommand(ConId, AbsCmd, AbsRes),
}

impl MemcachedAction {
    pub fn con(&self) -> ConId {
        match self {
            MemcachedAction::SendCommand(c, _)
            | MemcachedAction::ReceiveCommand(c, _)
            | MemcachedAction::SendResponse(c, _)
            | MemcachedAction::ReceiveResponse(c, _)
            | MemcachedAction::ProcessCommand(c, _, _) => *c,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MemcachedGuardKind {
    Storage,
    Connection(ConId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MemcachedEnv {
    pub con_cmd: BTreeMap<ConId, Vec<AbsCmd>>,
    pub con_res: BTreeMap<ConId, Vec<AbsRes>>,
}

/// Abstract semantics of one command against the cache.
pub fn memcached_process(cache: &Cache, cmd: &AbsCmd) -> (Cache, AbsRes) {
    let mut out = cache.clone();
    let res = match cmd {
        AbsCmd::Set(k, v) => {
            out.insert(k.clone(), Some(v.clone()));
            AbsRes::Stored
        }
        AbsCmd::Get(k) => match cache.get(k) {
            Some(Some(v)) => AbsRes::Value(v.clone()),
            _ => AbsRes::NotFound,
        },
        AbsCmd::Delete(k) => match cache.get(k) {
            Some(Some(_)) => {
                out.insert(k.clone(), None);
                AbsRes::Deleted
            }
            _ => AbsRes::NotFound,
        },
    };
    (out, res)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemcachedModel {
    pub connections: u64,
}

impl Default for MemcachedModel {
    fn default() -> Self {
        Self { connections: 1 }
    }
}

const ACTION_NAMES: &[&str] = &["SendCommand", "ReceiveCommand", "SendResponse", "ReceiveResponse", "ProcessCommand"];

pub fn oracle_key(i: u64) -> Bytes {
    Bytes::from(format!("k{i}").as_str())
}

pub fn oracle_value(i: u64) -> Bytes {
    Bytes::from(format!("v{i}").as_str())
}

impl MemcachedModel {
    pub fn new(connections: u64) -> Self {
        Self { connections }
    }

    pub fn cons(&self) -> impl Iterator<Item = ConId> {
        0..self.connections
    }

    /// Initial state with every connection idle and the cache empty.
    pub fn initial(&self) -> MemcachedState {
        MemcachedState {
            con_cmd: self.cons().map(|c| (c, Vec::new())).collect(),
            con_res: self.cons().map(|c| (c, Vec::new())).collect(),
            con_state: self.cons().map(|c| (c, ConState::Idle)).collect(),
            cache: Cache::new(),
        }
    }

    fn has_con(&self, p: &MemcachedState, c: ConId) -> bool {
        p.con_cmd.contains_key(&c) && p.con_res.contains_key(&c) && p.con_state.contains_key(&c)
    }

    /// Successor under a fully instantiated action.
    pub fn apply(&self, p: &MemcachedState, a: &MemcachedAction) -> Option<MemcachedState> {
        if !self.has_con(p, a.con()) {
            return None;
        }
        let mut s = p.clone();
        match a {
            MemcachedAction::SendCommand(c, cmd) => s.con_cmd.get_mut(c)?.push(cmd.clone()),
            MemcachedAction::ReceiveCommand(c, cmd) => {
                if p.con_state[c] != ConState::Idle || p.con_cmd[c].first() != Some(cmd) {
                    return None;
                }
                s.con_cmd.get_mut(c)?.remove(0);
                s.con_state.insert(*c, ConState::HaveCommand(cmd.clone()));
            }
            MemcachedAction::ProcessCommand(c, cmd, res) => {
                if p.con_state[c] != ConState::HaveCommand(cmd.clone()) {
                    return None;
                }
                let (cache, expected) = memcached_process(&p.cache, cmd);
                if expected != *res {
                    return None;
                }
                s.cache = cache;
                s.con_state.insert(*c, ConState::HaveResponse(res.clone()));
            }
            MemcachedAction::SendResponse(c, res) => {
                if p.con_state[c] != ConState::HaveResponse(res.clone()) {
                    return None;
                }
                s.con_res.get_mut(c)?.push(res.clone());
                s.con_state.insert(*c, ConState::Idle);
            }
            MemcachedAction::ReceiveResponse(c, res) => {
                if p.con_res[c].first() != Some(res) {
                    return None;
                }
                s.con_res.get_mut(c)?.remove(0);
            }
        }
        Some(s)
    }

    pub fn oracle_commands(&self, b: &OracleBounds) -> Vec<AbsCmd> {
        let mut out = Vec::new();
        for k in 0..b.keys {
            for v in 0..b.values {
                out.push(AbsCmd::Set(oracle_key(k), oracle_value(v)));
            }
            out.push(AbsCmd::Get(oracle_key(k)));
            out.push(AbsCmd::Delete(oracle_key(k)));
        }
        out
    }

    pub fn oracle_responses(&self, b: &OracleBounds) -> Vec<AbsRes> {
        let mut out = vec![AbsRes::Stored, AbsRes::NotFound, AbsRes::Deleted];
        out.extend((0..b.values).map(|v| AbsRes::Value(oracle_value(v))));
        out
    }

    fn cache_in_bounds(&self, cache: &Cache, b: &OracleBounds) -> bool {
        let keys: Vec<Bytes> = (0..b.keys).map(oracle_key).collect();
        let vals: Vec<Bytes> = (0..b.values).map(oracle_value).collect();
        cache.iter().all(|(k, v)| keys.contains(k) && v.as_ref().is_none_or(|v| vals.contains(v)))
    }

    fn cmd_in_bounds(&self, cmd: &AbsCmd, b: &OracleBounds) -> bool {
        self.oracle_commands(b).contains(cmd)
    }

    fn res_in_bounds(&self, res: &AbsRes, b: &OracleBounds) -> bool {
        self.oracle_responses(b).contains(res)
    }
}

impl Model for MemcachedModel {
    type State = MemcachedState;
    type Action = MemcachedAction;
    type GuardKind = MemcachedGuardKind;
    type Env = MemcachedEnv;

    fn name(&self) -> &'static str {
        "memcached"
    }

    fn init(&self, s: &MemcachedState) -> bool {
        *s == self.initial()
    }

    fn next(&self, p: &MemcachedState, s: &MemcachedState, a: &MemcachedAction) -> bool {
        let c = a.con();
        if !self.has_con(p, c) {
            return false;
        }
        let same_cache = s.cache == p.cache;
        let same_cmd = s.con_cmd == p.con_cmd;
        let same_res = s.con_res == p.con_res;
        let same_state = s.con_state == p.con_state;
        let updated = |m: &BTreeMap<ConId, ConState>, v: ConState| {
            let mut m = m.clone();
            m.insert(c, v);
            m
        };
        match a {
            MemcachedAction::SendCommand(_, cmd) => {
                let mut expect = p.con_cmd.clone();
                expect.insert(c, appended(&p.con_cmd[&c], cmd.clone()));
                same_cache && same_res && same_state && s.con_cmd == expect
            }
            MemcachedAction::ReceiveCommand(_, cmd) => {
                let q = &p.con_cmd[&c];
                if p.con_state[&c] != ConState::Idle || q.first() != Some(cmd) {
                    return false;
                }
                let mut expect = p.con_cmd.clone();
                expect.insert(c, q[1..].to_vec());
                same_cache
                    && same_res
                    && s.con_cmd == expect
                    && s.con_state == updated(&p.con_state, ConState::HaveCommand(cmd.clone()))
            }
            MemcachedAction::ProcessCommand(_, cmd, res) => {
                if p.con_state[&c] != ConState::HaveCommand(cmd.clone()) {
                    return false;
                }
                let (cache, expected) = memcached_process(&p.cache, cmd);
                expected == *res
                    && s.cache == cache
                    && same_cmd
                    && same_res
                    && s.con_state == updated(&p.con_state, ConState::HaveResponse(res.clone()))
            }
            MemcachedAction::SendResponse(_, res) => {
                if p.con_state[&c] != ConState::HaveResponse(res.clone()) {
                    return false;
                }
                let mut expect = p.con_res.clone();
                expect.insert(c, appended(&p.con_res[&c], res.clone()));
                same_cache && same_cmd && s.con_res == expect && s.con_state == updated(&p.con_state, ConState::Idle)
            }
            MemcachedAction::ReceiveResponse(_, res) => {
                let q = &p.con_res[&c];
                if q.first() != Some(res) {
                    return false;
                }
                let mut expect = p.con_res.clone();
                expect.insert(c, q[1..].to_vec());
                same_cache && same_cmd && same_state && s.con_res == expect
            }
        }
    }

    fn guard_needed(&self, a: &MemcachedAction, g: &MemcachedGuardKind) -> bool {
        match (a, g) {
            (MemcachedAction::ReceiveCommand(c, _), MemcachedGuardKind::Connection(d))
            | (MemcachedAction::SendResponse(c, _), MemcachedGuardKind::Connection(d))
            | (MemcachedAction::ProcessCommand(c, ..), MemcachedGuardKind::Connection(d)) => c == d,
            (MemcachedAction::ProcessCommand(..), MemcachedGuardKind::Storage) => true,
            _ => false,
        }
    }

    fn guard_kinds(&self) -> Vec<MemcachedGuardKind> {
        let mut out = vec![MemcachedGuardKind::Storage];
        out.extend(self.cons().map(MemcachedGuardKind::Connection));
        out
    }

    fn is_environment_guard(&self, _g: &MemcachedGuardKind) -> bool {
        false
    }

    fn env_projection(&self, s: &MemcachedState) -> MemcachedEnv {
        MemcachedEnv { con_cmd: s.con_cmd.clone(), con_res: s.con_res.clone() }
    }

    fn action_view(&self, a: &MemcachedAction) -> ActionView {
        let name = match a {
            MemcachedAction::SendCommand(..) => "SendCommand",
            MemcachedAction::ReceiveCommand(..) => "ReceiveCommand",
            MemcachedAction::SendResponse(..) => "SendResponse",
            MemcachedAction::ReceiveResponse(..) => "ReceiveResponse",
            MemcachedAction::ProcessCommand(..) => "ProcessCommand",
        };
        ActionView { name, args: vec![a.con()] }
    }

    fn action_names(&self) -> &'static [&'static str] {
        ACTION_NAMES
    }

    fn atoms(&self) -> AtomRegistry<Self> {
        AtomRegistry::default()
            .state("idle", 1, |a, s: &MemcachedState| s.con_state.get(&a[0]) == Some(&ConState::Idle))
            .state("con_cmd_empty", 1, |a, s: &MemcachedState| s.con_cmd.get(&a[0]).is_none_or(Vec::is_empty))
            .state("con_res_empty", 1, |a, s: &MemcachedState| s.con_res.get(&a[0]).is_none_or(Vec::is_empty))
    }

    fn liveness_property(&self, id: &str) -> Option<LivenessProperty<Self>> {
        if id != "mc" {
            return None;
        }
        // ∀con. □◇ ∃res. SendResponse(con, res); the label pattern matches
        // on the connection and leaves the response free.
        let body = Formula::always_eventually(Formula::label("SendResponse", vec![Term::Var("con".into())]));
        let formula = Formula::forall("con", Domain::finite(self.cons()), vec![], body);
        Some(LivenessProperty { id: id.into(), formula, depends_on: vec!["clients-progress".into()] })
    }

    fn default_liveness(&self) -> Vec<String> {
        vec!["mc".into()]
    }

    fn fairness_assumptions(&self) -> Vec<NamedAssumption<Self>> {
        vec![
            NamedAssumption { name: "io-terminates".into(), formula: Formula::Top },
            NamedAssumption {
                name: "clients-progress".into(),
                formula: Formula::forall(
                    "con",
                    Domain::finite(self.cons()),
                    vec![],
                    Formula::always_eventually(Formula::label("SendCommand", vec![Term::Var("con".into())])),
                ),
            },
        ]
    }

    fn init_states(&self, _b: &OracleBounds) -> Vec<MemcachedState> {
        vec![self.initial()]
    }

    fn in_bounds(&self, s: &MemcachedState, b: &OracleBounds) -> bool {
        let cons: Vec<ConId> = self.cons().collect();
        s.con_cmd.keys().copied().eq(cons.iter().copied())
            && s.con_res.keys().copied().eq(cons.iter().copied())
            && s.con_state.keys().copied().eq(cons.iter().copied())
            && s.con_cmd.values().all(|q| q.len() <= b.max_channel && q.iter().all(|c| self.cmd_in_bounds(c, b)))
            && s.con_res.values().all(|q| q.len() <= b.max_channel && q.iter().all(|r| self.res_in_bounds(r, b)))
            && s.con_state.values().all(|st| match st {
                ConState::Idle => true,
                ConState::HaveCommand(c) => self.cmd_in_bounds(c, b),
                ConState::HaveResponse(r) => self.res_in_bounds(r, b),
            })
            && self.cache_in_bounds(&s.cache, b)
    }

    fn successors(&self, p: &MemcachedState, b: &OracleBounds) -> Vec<(MemcachedAction, MemcachedState)> {
        let mut actions = Vec::new();
        for c in self.cons() {
            for cmd in self.oracle_commands(b) {
                actions.push(MemcachedAction::SendCommand(c, cmd));
            }
            if let Some(cmd) = p.con_cmd.get(&c).and_then(|q| q.first()) {
                actions.push(MemcachedAction::ReceiveCommand(c, cmd.clone()));
            }
            match p.con_state.get(&c) {
                Some(ConState::HaveCommand(cmd)) => {
                    let (_, res) = memcached_process(&p.cache, cmd);
                    actions.push(MemcachedAction::ProcessCommand(c, cmd.clone(), res));
                }
                Some(ConState::HaveResponse(res)) => actions.push(MemcachedAction::SendResponse(c, res.clone())),
                _ => {}
            }
            if let Some(res) = p.con_res.get(&c).and_then(|q| q.first()) {
                actions.push(MemcachedAction::ReceiveResponse(c, res.clone()));
            }
        }
        actions
            .into_iter()
            .filter_map(|a| {
                let s = self.apply(p, &a)?;
                self.in_bounds(&s, b).then_some((a, s))
            })
            .collect()
    }

    fn states_in_bounds(&self, b: &OracleBounds) -> Vec<MemcachedState> {
        let cmds = self.oracle_commands(b);
        let ress = self.oracle_responses(b);
        let cmd_seqs = sequences(&cmds, b.max_channel);
        let res_seqs = sequences(&ress, b.max_channel);
        let mut con_states = vec![ConState::Idle];
        con_states.extend(cmds.iter().cloned().map(ConState::HaveCommand));
        con_states.extend(ress.iter().cloned().map(ConState::HaveResponse));
        let mut per_con = Vec::new();
        for q in &cmd_seqs {
            for r in &res_seqs {
                for st in &con_states {
                    per_con.push((q.clone(), r.clone(), st.clone()));
                }
            }
        }
        let key_options: Vec<Option<Option<Bytes>>> = std::iter::once(None)
            .chain(std::iter::once(Some(None)))
            .chain((0..b.values).map(|v| Some(Some(oracle_value(v)))))
            .collect();
        let mut caches = vec![Cache::new()];
        for k in 0..b.keys {
            let mut next = Vec::new();
            for c in &caches {
                for opt in &key_options {
                    let mut c = c.clone();
                    if let Some(v) = opt {
                        c.insert(oracle_key(k), v.clone());
                    }
                    next.push(c);
                }
            }
            caches = next;
        }
        let mut partial = vec![MemcachedState::default()];
        for c in self.cons() {
            let mut next = Vec::new();
            for s in &partial {
                for (q, r, st) in &per_con {
                    let mut s = s.clone();
                    s.con_cmd.insert(c, q.clone());
                    s.con_res.insert(c, r.clone());
                    s.con_state.insert(c, st.clone());
                    next.push(s);
                }
            }
            partial = next;
        }
        let mut out = Vec::with_capacity(partial.len() * caches.len());
        for s in &partial {
            for cache in &caches {
                out.push(MemcachedState { cache: cache.clone(), ..s.clone() });
            }
        }
        out
    }

    fn actions_in_bounds(&self, b: &OracleBounds) -> Vec<MemcachedAction> {
        let cmds = self.oracle_commands(b);
        let ress = self.oracle_responses(b);
        let mut out = Vec::new();
        for c in self.cons() {
            for cmd in &cmds {
                out.push(MemcachedAction::SendCommand(c, cmd.clone()));
                out.push(MemcachedAction::ReceiveCommand(c, cmd.clone()));
                for res in &ress {
                    out.push(MemcachedAction::ProcessCommand(c, cmd.clone(), res.clone()));
                }
            }
            for res in &ress {
                out.push(MemcachedAction::SendResponse(c, res.clone()));
                out.push(MemcachedAction::ReceiveResponse(c, res.clone()));
            }
        }
        out
    }

    fn step_values(&self, _p: &MemcachedState, a: Option<&MemcachedAction>, _s: &MemcachedState) -> Vec<u64> {
        a.map(|a| vec![a.con()]).unwrap_or_default()
    }

    fn tla_module(&self) -> Option<TlaModule> {
        let s = |x: &str| x.to_string();
        let per_con = |guards: &[&str], updates: &[(&str, &str)], name: &str, extra: Option<(&str, &str)>| {
            let mut exists = vec![(s("c"), s("ConIds"))];
            if let Some((v, set)) = extra {
                exists.push((s(v), s(set)));
            }
            TlaAction {
                name: s(name),
                exists,
                guards: guards.iter().map(|g| s(g)).collect(),
                updates: updates.iter().map(|(v, e)| (s(v), s(e))).collect(),
            }
        };
        Some(TlaModule {
            name: s("MemcachedLite"),
            extends: vec![s("Naturals"), s("Sequences")],
            constants: vec![s("ConIds"), s("Keys"), s("Values")],
            variables: vec![
                TlaVariable {
                    name: s("ConCmd"),
                    ty: TlaType::Function(
                        Box::new(TlaType::Set(s("ConIds"))),
                        Box::new(TlaType::Seq(Box::new(TlaType::Set(s("Cmds"))))),
                    ),
                },
                TlaVariable {
                    name: s("ConRes"),
                    ty: TlaType::Function(
                        Box::new(TlaType::Set(s("ConIds"))),
                        Box::new(TlaType::Seq(Box::new(TlaType::Set(s("Ress"))))),
                    ),
                },
                TlaVariable {
                    name: s("ConState"),
                    ty: TlaType::Function(
                        Box::new(TlaType::Set(s("ConIds"))),
                        Box::new(TlaType::Set(s("ConStates"))),
                    ),
                },
                TlaVariable {
                    name: s("Cache"),
                    ty: TlaType::Function(
                        Box::new(TlaType::Set(s("Keys"))),
                        Box::new(TlaType::Set(s("(Values \\cup {None, Absent})"))),
                    ),
                },
            ],
            definitions: vec![
                (s("Absent"), s("CHOOSE v : v \\notin Values")),
                (s("None"), s("CHOOSE v : v \\notin Values \\cup {Absent}")),
                (
                    s("Cmds"),
                    s("[kind : {\"set\"}, key : Keys, val : Values] \\cup [kind : {\"get\", \"delete\"}, key : Keys]"),
                ),
                (s("Ress"), s("[kind : {\"stored\", \"notfound\", \"deleted\"}] \\cup [kind : {\"value\"}, val : Values]")),
                (
                    s("ConStates"),
                    s("[kind : {\"idle\"}] \\cup [kind : {\"cmd\"}, cmd : Cmds] \\cup [kind : {\"res\"}, res : Ress]"),
                ),
                (
                    s("ProcessCache(cache, cmd)"),
                    s("CASE cmd.kind = \"set\" -> [cache EXCEPT ![cmd.key] = cmd.val]\n       [] cmd.kind = \"delete\" /\\ cache[cmd.key] \\in Values -> [cache EXCEPT ![cmd.key] = None]\n       [] OTHER -> cache"),
                ),
                (
                    s("ProcessRes(cache, cmd)"),
                    s("CASE cmd.kind = \"set\" -> [kind |-> \"stored\"]\n       [] cmd.kind = \"get\" /\\ cache[cmd.key] \\in Values -> [kind |-> \"value\", val |-> cache[cmd.key]]\n       [] cmd.kind = \"delete\" /\\ cache[cmd.key] \\in Values -> [kind |-> \"deleted\"]\n       [] OTHER -> [kind |-> \"notfound\"]"),
                ),
            ],
            init: vec![
                s("ConCmd = [c \\in ConIds |-> <<>>]"),
                s("ConRes = [c \\in ConIds |-> <<>>]"),
                s("ConState = [c \\in ConIds |-> [kind |-> \"idle\"]]"),
                s("Cache = [k \\in Keys |-> Absent]"),
            ],
            actions: vec![
                per_con(&[], &[("ConCmd", "[ConCmd EXCEPT ![c] = Append(@, cmd)]")], "SendCommand", Some(("cmd", "Cmds"))),
                per_con(
                    &["ConState[c].kind = \"idle\"", "ConCmd[c] # <<>>"],
                    &[
                        ("ConCmd", "[ConCmd EXCEPT ![c] = Tail(@)]"),
                        ("ConState", "[ConState EXCEPT ![c] = [kind |-> \"cmd\", cmd |-> Head(ConCmd[c])]]"),
                    ],
                    "ReceiveCommand",
                    None,
                ),
                per_con(
                    &["ConState[c].kind = \"cmd\""],
                    &[
                        ("Cache", "ProcessCache(Cache, ConState[c].cmd)"),
                        (
                            "ConState",
                            "[ConState EXCEPT ![c] = [kind |-> \"res\", res |-> ProcessRes(Cache, ConState[c].cmd)]]",
                        ),
                    ],
                    "ProcessCommand",
                    None,
                ),
                per_con(
                    &["ConState[c].kind = \"res\""],
                    &[
                        ("ConRes", "[ConRes EXCEPT ![c] = Append(@, ConState[c].res)]"),
                        ("ConState", "[ConState EXCEPT ![c] = [kind |-> \"idle\"]]"),
                    ],
                    "SendResponse",
                    None,
                ),
                per_con(&["ConRes[c] # <<>>"], &[("ConRes", "[ConRes EXCEPT ![c] = Tail(@)]")], "ReceiveResponse", None),
            ],
            fairness: ["ReceiveCommand", "ProcessCommand", "SendResponse"]
                .into_iter()
                .map(|a| TlaFairness { kind: TlaFairnessKind::Weak, action: s(a) })
                .collect(),
        })
    }
}
