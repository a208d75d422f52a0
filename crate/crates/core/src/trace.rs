//! The global trace, its JSON-lines log format and offline replay.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::model::{canonical_json, required_guards, Model};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RecordKind<A> {
    Action(A),
    Stutter,
}

impl<A> RecordKind<A> {
    pub fn action(&self) -> Option<&A> {
        match self {
            RecordKind::Action(a) => Some(a),
            RecordKind::Stutter => None,
        }
    }
}

/// One completed critical section.
pub struct TraceRecord<M: Model> {
    pub index: u64,
    pub node: String,
    pub kind: RecordKind<M::Action>,
    pub pre: M::State,
    pub post: M::State,
    pub guards: Vec<M::GuardKind>,
}

impl<M: Model> Clone for TraceRecord<M> {
    fn clone(&self) -> Self {
        Self {
            index: self.index,
            node: self.node.clone(),
            kind: self.kind.clone(),
            pre: self.pre.clone(),
            post: self.post.clone(),
            guards: self.guards.clone(),
        }
    }
}

impl<M: Model> std::fmt::Debug for TraceRecord<M> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

impl<M: Model> TraceRecord<M> {
    pub fn to_json(&self) -> Value {
        let (kind, action) = match &self.kind {
            RecordKind::Action(a) => ("action", canonical_json(a)),
            RecordKind::Stutter => ("stutter", Value::Null),
        };
        json!({
            "i": self.index,
            "node": self.node,
            "kind": kind,
            "action": action,
            "pre": canonical_json(&self.pre),
            "post": canonical_json(&self.post),
            "guards": canonical_json(&self.guards),
        })
    }

    pub fn from_json(v: &Value) -> Result<Self, String> {
        let field = |name: &str| v.get(name).ok_or_else(|| format!("missing field `{name}`"));
        let index = field("i")?.as_u64().ok_or("`i` is not a natural")?;
        let node = field("node")?.as_str().ok_or("`node` is not a string")?.to_string();
        let kind = match field("kind")?.as_str() {
            Some("action") => RecordKind::Action(
                serde_json::from_value(field("action")?.clone()).map_err(|e| format!("action: {e}"))?,
            ),
            Some("stutter") => RecordKind::Stutter,
            _ => return Err("`kind` must be \"action\" or \"stutter\"".into()),
        };
        let pre = serde_json::from_value(field("pre")?.clone()).map_err(|e| format!("pre: {e}"))?;
        let post = serde_json::from_value(field("post")?.clone()).map_err(|e| format!("post: {e}"))?;
        let guards = serde_json::from_value(field("guards")?.clone()).map_err(|e| format!("guards: {e}"))?;
        Ok(Self { index, node, kind, pre, post, guards })
    }
}

/// An auxiliary log line: guard lifecycle events and counterexample markers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxRecord {
    pub i: u64,
    pub guard: Value,
    pub event: String,
}

/// A finite trace prefix. A terminated trace stands for its infinite
/// extension by stutter steps on the final state.
pub struct Trace<M: Model> {
    pub initial: M::State,
    pub records: Vec<TraceRecord<M>>,
    pub terminated: bool,
}

impl<M: Model> Clone for Trace<M> {
    fn clone(&self) -> Self {
        Self { initial: self.initial.clone(), records: self.records.clone(), terminated: self.terminated }
    }
}

impl<M: Model> std::fmt::Debug for Trace<M> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trace")
            .field("initial", &self.initial)
            .field("records", &self.records)
            .field("terminated", &self.terminated)
            .finish()
    }
}

impl<M: Model> Trace<M> {
    pub fn new(initial: M::State) -> Self {
        Self { initial, records: Vec::new(), terminated: false }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_state(&self) -> &M::State {
        self.records.last().map(|r| &r.post).unwrap_or(&self.initial)
    }

    /// Appends a step labelled by `action` (or a stutter), numbering it.
    pub fn push_step(&mut self, node: &str, action: Option<M::Action>, post: M::State, guards: Vec<M::GuardKind>) {
        let pre = self.final_state().clone();
        let index = self.records.len() as u64;
        let kind = match action {
            Some(a) => RecordKind::Action(a),
            None => RecordKind::Stutter,
        };
        self.records.push(TraceRecord { index, node: node.to_string(), kind, pre, post, guards });
    }

    pub fn write_jsonl<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for r in &self.records {
            writeln!(out, "{}", r.to_json())?;
        }
        Ok(())
    }
}

/// Writes records and auxiliary lines interleaved: an aux line with `i = k`
/// precedes record `k`.
pub fn write_log<M: Model, W: Write>(records: &[TraceRecord<M>], aux: &[AuxRecord], out: &mut W) -> std::io::Result<()> {
    let mut aux_iter = aux.iter().peekable();
    for r in records {
        while let Some(a) = aux_iter.next_if(|a| a.i <= r.index) {
            writeln!(out, "{}", serde_json::to_string(a).expect("aux records serialize"))?;
        }
        writeln!(out, "{}", r.to_json())?;
    }
    for a in aux_iter {
        writeln!(out, "{}", serde_json::to_string(a).expect("aux records serialize"))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("record {index}: {reason}")]
    Invalid { index: u64, reason: String },
}

impl ReplayError {
    pub fn index(&self) -> Option<u64> {
        match self {
            ReplayError::Invalid { index, .. } => Some(*index),
            ReplayError::Malformed { .. } => None,
        }
    }
}

/// Parsed log: trace records and auxiliary lines.
pub struct TraceLog<M: Model> {
    pub records: Vec<TraceRecord<M>>,
    pub aux: Vec<AuxRecord>,
}

pub fn read_log<M: Model, R: BufRead>(input: R) -> Result<TraceLog<M>, ReplayError> {
    let mut records = Vec::new();
    let mut aux = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| ReplayError::Malformed { line: n + 1, reason: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value =
            serde_json::from_str(&line).map_err(|e| ReplayError::Malformed { line: n + 1, reason: e.to_string() })?;
        if v.get("event").is_some() {
            let a: AuxRecord = serde_json::from_value(v)
                .map_err(|e| ReplayError::Malformed { line: n + 1, reason: e.to_string() })?;
            aux.push(a);
        } else {
            let r = TraceRecord::from_json(&v).map_err(|reason| ReplayError::Malformed { line: n + 1, reason })?;
            records.push(r);
        }
    }
    Ok(TraceLog { records, aux })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ReplaySummary {
    pub records: usize,
    pub actions: usize,
    pub stutters: usize,
    pub guard_events: usize,
}

/// Re-validates a log offline: numbering, initial state, continuity, the
/// next relation, stutter equality, guard gating and guard ownership.
pub fn replay<M: Model>(model: &M, log: &TraceLog<M>) -> Result<ReplaySummary, ReplayError> {
    let mut summary = ReplaySummary { records: log.records.len(), ..Default::default() };
    let bad = |index: u64, reason: String| ReplayError::Invalid { index, reason };
    for (k, r) in log.records.iter().enumerate() {
        let k = k as u64;
        if r.index != k {
            return Err(bad(k, format!("index {} out of sequence", r.index)));
        }
        if k == 0 && !model.init(&r.pre) {
            return Err(bad(0, "pre-state is not initial".into()));
        }
        if k > 0 && log.records[k as usize - 1].post != r.pre {
            return Err(bad(k, "pre-state differs from the previous post-state".into()));
        }
        match &r.kind {
            RecordKind::Action(a) => {
                summary.actions += 1;
                if !model.next(&r.pre, &r.post, a) {
                    return Err(bad(k, format!("next is false for {}", canonical_json(a))));
                }
                let opened: BTreeSet<_> = r.guards.iter().cloned().collect();
                if let Some(g) = required_guards(model, a).into_iter().find(|g| !opened.contains(g)) {
                    return Err(bad(k, format!("guard {} not opened", canonical_json(&g))));
                }
            }
            RecordKind::Stutter => {
                summary.stutters += 1;
                if r.pre != r.post {
                    return Err(bad(k, "stutter changed the state".into()));
                }
            }
        }
    }
    audit_guard_events(&log.aux)?;
    summary.guard_events = log.aux.iter().filter(|a| !a.guard.is_null()).count();
    Ok(summary)
}

/// Ownership audit over guard events: each guard has a single owner at a
/// time and only its owner opens or transfers it.
pub fn audit_guard_events(aux: &[AuxRecord]) -> Result<(), ReplayError> {
    let mut owner: BTreeMap<String, String> = BTreeMap::new();
    for a in aux.iter().filter(|a| !a.guard.is_null()) {
        let key = a.guard.to_string();
        let (event, who) = a.event.split_once(':').unwrap_or((a.event.as_str(), ""));
        let bad = |reason: String| ReplayError::Invalid { index: a.i, reason };
        match event {
            "dispense" => {
                if owner.insert(key.clone(), who.to_string()).is_some() {
                    return Err(bad(format!("guard {key} dispensed twice")));
                }
            }
            "open" | "transfer" => match owner.get(&key) {
                Some(o) if o == who => {
                    if event == "transfer" {
                        owner.insert(key, "container".into());
                    }
                }
                Some(o) => return Err(bad(format!("guard {key} used by {who} but owned by {o}"))),
                None => return Err(bad(format!("guard {key} used before dispense"))),
            },
            "retrieve" => match owner.get(&key) {
                Some(o) if o == "container" => {
                    owner.insert(key, who.to_string());
                }
                _ => return Err(bad(format!("guard {key} retrieved while not in a container"))),
            },
            "close" => {}
            other => return Err(bad(format!("unknown guard event `{other}`"))),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExampleAction, ExampleGuardKind, ExampleModel, ExampleState};

    fn sample() -> Trace<ExampleModel> {
        let mut t = Trace::new(ExampleState::default());
        let s1 = ExampleState { a_to_b: vec![0], ..Default::default() };
        t.push_step("A", Some(ExampleAction::ASend), s1.clone(), vec![ExampleGuardKind::NodeA]);
        t.push_step("A", None, s1, vec![]);
        t
    }

    fn round_trip(t: &Trace<ExampleModel>) -> TraceLog<ExampleModel> {
        let mut buf = Vec::new();
        t.write_jsonl(&mut buf).unwrap();
        read_log(buf.as_slice()).unwrap()
    }

    #[test]
    fn jsonl_round_trip_replays() {
        let t = sample();
        let log = round_trip(&t);
        assert_eq!(log.records.len(), 2);
        let s = replay(&ExampleModel::default(), &log).unwrap();
        assert_eq!((s.actions, s.stutters), (1, 1));
    }

    #[test]
    fn record_fields() {
        let t = sample();
        let v = t.records[0].to_json();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["action", "guards", "i", "kind", "node", "post", "pre"]);
        assert_eq!(v["action"], json!("ASend"));
    }

    #[test]
    fn replay_rejects_corruption() {
        let mut t = sample();
        t.records[0].post.a_to_b = vec![1];
        t.records[1].pre.a_to_b = vec![1];
        t.records[1].post.a_to_b = vec![1];
        let err = replay(&ExampleModel::default(), &round_trip(&t)).unwrap_err();
        assert_eq!(err.index(), Some(0));

        let mut t = sample();
        t.records[0].guards.clear();
        let err = replay(&ExampleModel::default(), &round_trip(&t)).unwrap_err();
        assert!(err.to_string().contains("guard"));
    }

    #[test]
    fn audit_catches_foreign_open() {
        let g = json!("NodeA");
        let ok = vec![
            AuxRecord { i: 0, guard: g.clone(), event: "dispense:A".into() },
            AuxRecord { i: 0, guard: g.clone(), event: "open:A".into() },
        ];
        assert!(audit_guard_events(&ok).is_ok());
        let mut bad = ok.clone();
        bad.push(AuxRecord { i: 1, guard: g, event: "open:B".into() });
        assert!(audit_guard_events(&bad).is_err());
    }
}
