//! Three-valued evaluation of formulas over finite trace prefixes.
//!
//! Position `j` denotes trace record `j`. On a terminated trace every
//! position at or beyond the end is a stutter step on the final state, so
//! position `len` stands for the whole infinite tail. On a non-terminated
//! trace nothing is known beyond the end.

use std::cell::OnceCell;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::formula::{ActionAtom, Formula, Quantifier, Term};
use crate::model::Model;
use crate::trace::Trace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    True,
    False,
    Pending,
}

impl Verdict {
    fn from_bool(b: bool) -> Self {
        if b {
            Verdict::True
        } else {
            Verdict::False
        }
    }
}

impl std::ops::Not for Verdict {
    type Output = Verdict;

    fn not(self) -> Verdict {
        match self {
            Verdict::True => Verdict::False,
            Verdict::False => Verdict::True,
            Verdict::Pending => Verdict::Pending,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::True => "true",
            Verdict::False => "false",
            Verdict::Pending => "pending",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("index {index} is beyond the trace length {len}")]
    IndexOutOfRange { index: u64, len: usize },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
}

/// Evaluation knobs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalOptions {
    /// Truncates unbounded value domains to `..=cap`, making quantifiers
    /// over the naturals decidable on bounded instances.
    pub cap: Option<u64>,
}

pub fn holds_at<M: Model>(model: &M, f: &Formula<M>, t: &Trace<M>, i: u64) -> Result<Verdict, EvalError> {
    holds_at_with(model, f, t, i, EvalOptions::default())
}

pub fn holds_at_with<M: Model>(
    model: &M,
    f: &Formula<M>,
    t: &Trace<M>,
    i: u64,
    opts: EvalOptions,
) -> Result<Verdict, EvalError> {
    if i > t.len() as u64 {
        return Err(EvalError::IndexOutOfRange { index: i, len: t.len() });
    }
    let mut ctx = Ctx { model, trace: t, opts, env: Vec::new(), hints: OnceCell::new() };
    ctx.eval(f, i as usize)
}

/// Evaluates a state formula on a single state, presented as the target of
/// one stutter step.
pub fn holds_in_state<M: Model>(model: &M, f: &Formula<M>, s: &M::State) -> Result<Verdict, EvalError> {
    let mut t = Trace::new(s.clone());
    t.push_step("eval", None, s.clone(), Vec::new());
    holds_at(model, f, &t, 0)
}

/// `(pre, post, action)` of one position.
type Step<'a, M> = (&'a <M as Model>::State, &'a <M as Model>::State, Option<&'a <M as Model>::Action>);

struct Ctx<'a, M: Model> {
    model: &'a M,
    trace: &'a Trace<M>,
    opts: EvalOptions,
    env: Vec<(String, u64)>,
    hints: OnceCell<BTreeSet<u64>>,
}

/// Which verdicts a formula can possibly take on the current trace; used to
/// skip scans whose result is already known to be pending.
#[derive(Clone, Copy)]
struct Range {
    may_true: bool,
    may_false: bool,
}

impl<M: Model> Ctx<'_, M> {
    fn terminated(&self) -> bool {
        self.trace.terminated
    }

    fn resolve(&self, args: &[Term]) -> Result<Vec<Option<u64>>, EvalError> {
        args.iter()
            .map(|t| match t {
                Term::Const(n) => Ok(Some(*n)),
                Term::Any => Ok(None),
                Term::Var(x) => self
                    .env
                    .iter()
                    .rev()
                    .find(|(name, _)| name == x)
                    .map(|(_, v)| Some(*v))
                    .ok_or_else(|| EvalError::UnboundVariable(x.clone())),
            })
            .collect()
    }

    fn concrete(&self, args: &[Term]) -> Result<Vec<u64>, EvalError> {
        Ok(self.resolve(args)?.into_iter().map(|v| v.unwrap_or(0)).collect())
    }

    /// `(pre, post, action)` at position `j`, or `None` past the end of a
    /// non-terminated trace.
    fn step(&self, j: usize) -> Option<Step<'_, M>> {
        match self.trace.records.get(j) {
            Some(r) => Some((&r.pre, &r.post, r.kind.action())),
            None if self.terminated() => {
                let s = self.trace.final_state();
                Some((s, s, None))
            }
            None => None,
        }
    }

    fn range(&self, f: &Formula<M>) -> Range {
        let term = self.terminated();
        match f {
            Formula::Top => Range { may_true: true, may_false: false },
            Formula::Bottom => Range { may_true: false, may_false: true },
            Formula::State(_) | Formula::Action(_) => Range { may_true: true, may_false: true },
            Formula::And(a, b) => {
                let (a, b) = (self.range(a), self.range(b));
                Range { may_true: a.may_true && b.may_true, may_false: a.may_false || b.may_false }
            }
            Formula::Or(a, b) => {
                let (a, b) = (self.range(a), self.range(b));
                Range { may_true: a.may_true || b.may_true, may_false: a.may_false && b.may_false }
            }
            Formula::Implies(a, b) => {
                let (a, b) = (self.range(a), self.range(b));
                Range { may_true: a.may_false || b.may_true, may_false: a.may_true && b.may_false }
            }
            Formula::Entails(a, b) => self.range(&Formula::always(Formula::implies((**a).clone(), (**b).clone()))),
            Formula::Always(a) => {
                let a = self.range(a);
                Range { may_true: term && a.may_true, may_false: a.may_false }
            }
            Formula::Eventually(a) => {
                let a = self.range(a);
                Range { may_true: a.may_true, may_false: term && a.may_false }
            }
            Formula::Forall(q) => {
                let b = self.range(&q.body);
                let complete = self.is_complete(q);
                Range { may_true: complete && b.may_true, may_false: b.may_false }
            }
            Formula::Exists(q) => {
                let b = self.range(&q.body);
                let complete = self.is_complete(q);
                Range { may_true: b.may_true, may_false: complete && b.may_false }
            }
        }
    }

    fn is_complete(&self, q: &Quantifier<M>) -> bool {
        self.opts.cap.is_some() || q.finite_members().is_some()
    }

    fn hints(&self) -> &BTreeSet<u64> {
        self.hints.get_or_init(|| {
            let mut out = BTreeSet::new();
            for r in &self.trace.records {
                for v in self.model.step_values(&r.pre, r.kind.action(), &r.post) {
                    out.insert(v);
                    out.insert(v.saturating_add(1));
                }
            }
            let s = self.trace.final_state();
            for v in self.model.step_values(s, None, s) {
                out.insert(v);
                out.insert(v.saturating_add(1));
            }
            out
        })
    }

    /// Members to try and whether they cover the whole domain.
    fn candidates(&self, q: &Quantifier<M>) -> (Vec<u64>, bool) {
        if let Some(all) = q.finite_members() {
            return (all, true);
        }
        let crate::ltl::Domain::NatFrom { lower, .. } = &q.domain else {
            unreachable!("finite domains always enumerate")
        };
        if let Some(cap) = self.opts.cap {
            return ((*lower..=cap).filter(|v| q.admits(*v)).collect(), true);
        }
        let hints = self.hints();
        let fresh = hints.iter().next_back().map_or(*lower, |m| m.saturating_add(1).max(*lower));
        let mut vals: BTreeSet<u64> = hints.iter().copied().filter(|v| q.admits(*v)).collect();
        // The smallest admitted values and one value beyond every hint.
        let mut v = *lower;
        let mut found = 0;
        while found < 2 && v < lower.saturating_add(64) {
            if q.admits(v) {
                vals.insert(v);
                found += 1;
            }
            v += 1;
        }
        let mut v = fresh;
        while !q.admits(v) && v < fresh.saturating_add(64) {
            v += 1;
        }
        if q.admits(v) {
            vals.insert(v);
        }
        (vals.into_iter().collect(), false)
    }

    fn eval(&mut self, f: &Formula<M>, j: usize) -> Result<Verdict, EvalError> {
        let len = self.trace.len();
        match f {
            Formula::Top => Ok(Verdict::True),
            Formula::Bottom => Ok(Verdict::False),
            Formula::State(a) => {
                let args = self.concrete(&a.args)?;
                Ok(match self.step(j) {
                    Some((_, post, _)) => Verdict::from_bool((a.eval)(&args, post)),
                    None => Verdict::Pending,
                })
            }
            Formula::Action(ActionAtom::Pred { args, eval, .. }) => {
                let args = self.concrete(args)?;
                Ok(match self.step(j) {
                    Some((pre, post, act)) => Verdict::from_bool(eval(&args, pre, post, act)),
                    None => Verdict::Pending,
                })
            }
            Formula::Action(ActionAtom::Label { name, args }) => {
                let pattern = self.resolve(args)?;
                Ok(match self.step(j) {
                    Some((_, _, Some(a))) => {
                        let view = self.model.action_view(a);
                        let matches = view.name == name
                            && pattern.len() <= view.args.len()
                            && pattern.iter().zip(&view.args).all(|(p, v)| p.is_none_or(|p| p == *v));
                        Verdict::from_bool(matches)
                    }
                    Some((_, _, None)) => Verdict::False,
                    None => Verdict::Pending,
                })
            }
            Formula::And(a, b) => {
                let va = self.eval(a, j)?;
                if va == Verdict::False {
                    return Ok(Verdict::False);
                }
                let vb = self.eval(b, j)?;
                Ok(match (va, vb) {
                    (_, Verdict::False) => Verdict::False,
                    (Verdict::True, Verdict::True) => Verdict::True,
                    _ => Verdict::Pending,
                })
            }
            Formula::Or(a, b) => {
                let va = self.eval(a, j)?;
                if va == Verdict::True {
                    return Ok(Verdict::True);
                }
                let vb = self.eval(b, j)?;
                Ok(match (va, vb) {
                    (_, Verdict::True) => Verdict::True,
                    (Verdict::False, Verdict::False) => Verdict::False,
                    _ => Verdict::Pending,
                })
            }
            Formula::Implies(a, b) => {
                let va = self.eval(a, j)?;
                if va == Verdict::False {
                    return Ok(Verdict::True);
                }
                let vb = self.eval(b, j)?;
                Ok(match (va, vb) {
                    (_, Verdict::True) => Verdict::True,
                    (Verdict::True, Verdict::False) => Verdict::False,
                    _ => Verdict::Pending,
                })
            }
            Formula::Entails(a, b) => {
                let g = Formula::always(Formula::implies((**a).clone(), (**b).clone()));
                self.eval(&g, j)
            }
            Formula::Always(a) => {
                let r = self.range(a);
                if !r.may_false && !self.terminated() {
                    return Ok(Verdict::Pending);
                }
                let stop = if self.terminated() { len + 1 } else { len };
                let mut all_true = self.terminated();
                for k in j..stop {
                    match self.eval(a, k)? {
                        Verdict::False => return Ok(Verdict::False),
                        Verdict::Pending => all_true = false,
                        Verdict::True => {}
                    }
                }
                Ok(if all_true { Verdict::True } else { Verdict::Pending })
            }
            Formula::Eventually(a) => {
                let r = self.range(a);
                if !r.may_true && !self.terminated() {
                    return Ok(Verdict::Pending);
                }
                let stop = if self.terminated() { len + 1 } else { len };
                let mut all_false = self.terminated();
                for k in j..stop {
                    match self.eval(a, k)? {
                        Verdict::True => return Ok(Verdict::True),
                        Verdict::Pending => all_false = false,
                        Verdict::False => {}
                    }
                }
                Ok(if all_false { Verdict::False } else { Verdict::Pending })
            }
            Formula::Forall(q) => {
                let (vals, complete) = self.candidates(q);
                if !complete && !self.range(&q.body).may_false {
                    return Ok(Verdict::Pending);
                }
                let mut all_true = complete;
                for v in vals {
                    self.env.push((q.var.clone(), v));
                    let r = self.eval(&q.body, j);
                    self.env.pop();
                    match r? {
                        Verdict::False => return Ok(Verdict::False),
                        Verdict::Pending => all_true = false,
                        Verdict::True => {}
                    }
                }
                Ok(if all_true { Verdict::True } else { Verdict::Pending })
            }
            Formula::Exists(q) => {
                let (vals, complete) = self.candidates(q);
                if !complete && !self.range(&q.body).may_true {
                    return Ok(Verdict::Pending);
                }
                let mut all_false = complete;
                for v in vals {
                    self.env.push((q.var.clone(), v));
                    let r = self.eval(&q.body, j);
                    self.env.pop();
                    match r? {
                        Verdict::True => return Ok(Verdict::True),
                        Verdict::Pending => all_false = false,
                        Verdict::False => {}
                    }
                }
                Ok(if all_false { Verdict::False } else { Verdict::Pending })
            }
        }
    }
}
