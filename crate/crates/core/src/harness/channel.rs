//! Physical message queues and the shims that keep them in step with the
//! environment part of the model state.

use std::collections::VecDeque;

use serde::Serialize;
use serde_json::json;

use crate::error::Violation;
use crate::lock::GhostLock;
use crate::model::Model;

/// Newline-delimited physical channel operations. Ghost code never writes
/// here, so checked and erased runs must produce the same bytes.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ObservableLog {
    pub lines: Vec<String>,
}

impl ObservableLog {
    pub fn push(&mut self, step: u64, node: &str, op: &str, channel: &str, msg: &impl Serialize) {
        let line = json!({"step": step, "node": node, "op": op, "ch": channel, "msg": msg});
        self.lines.push(line.to_string());
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            out.push_str(l);
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}

/// A FIFO queue mirrored by a sequence in the model state. Every physical
/// operation goes through [`GhostLock::shim`], which also applies the
/// mirrored update.
#[derive(Clone, Debug)]
pub struct LossyChannel<T> {
    name: String,
    queue: VecDeque<T>,
}

impl<T: Clone + PartialEq + Serialize> LossyChannel<T> {
    pub fn new(name: &str) -> Self {
        Self { name: name.to_string(), queue: VecDeque::new() }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn contents(&self) -> Vec<T> {
        self.queue.iter().cloned().collect()
    }

    pub fn matches(&self, mirror: &[T]) -> bool {
        self.queue.iter().eq(mirror.iter())
    }

    /// Enqueues `v` and appends it to the mirrored sequence.
    pub fn send<M: Model>(
        &mut self,
        gl: &mut GhostLock<M>,
        v: T,
        mirror: impl FnOnce(&mut M::State, T),
        log: &mut ObservableLog,
        step: u64,
    ) -> Result<(), Violation> {
        let copy = v.clone();
        gl.shim(&self.name, move |s| mirror(s, copy))?;
        log.push(step, gl.node(), "send", &self.name, &v);
        self.queue.push_back(v);
        Ok(())
    }

    /// Dequeues the head, if any, and drops the mirrored head.
    pub fn recv<M: Model>(
        &mut self,
        gl: &mut GhostLock<M>,
        mirror: impl FnOnce(&mut M::State),
        log: &mut ObservableLog,
        step: u64,
    ) -> Result<Option<T>, Violation> {
        self.take(gl, mirror, log, step, "recv")
    }

    /// Loses the head message: the environment's drop.
    pub fn lose<M: Model>(
        &mut self,
        gl: &mut GhostLock<M>,
        mirror: impl FnOnce(&mut M::State),
        log: &mut ObservableLog,
        step: u64,
    ) -> Result<Option<T>, Violation> {
        self.take(gl, mirror, log, step, "lose")
    }

    fn take<M: Model>(
        &mut self,
        gl: &mut GhostLock<M>,
        mirror: impl FnOnce(&mut M::State),
        log: &mut ObservableLog,
        step: u64,
        op: &str,
    ) -> Result<Option<T>, Violation> {
        let nonempty = !self.queue.is_empty();
        gl.shim(&self.name, |s| {
            if nonempty {
                mirror(s)
            }
        })?;
        let v = self.queue.pop_front();
        if let Some(v) = &v {
            log.push(step, gl.node(), op, &self.name, v);
        }
        Ok(v)
    }
}

/// Removes the head of a mirrored sequence.
pub(crate) fn drop_head<T>(seq: &mut Vec<T>) {
    if !seq.is_empty() {
        seq.remove(0);
    }
}
