//! The obligation ledger: linear `show_at(φ, i)` resources, termination
//! measures, fairness assumptions and end-of-run classification.

use std::collections::BTreeMap;

use serde::Serialize;

use super::eval::{holds_at, Verdict};
use super::formula::Formula;
use super::rules::{apply, Rule};
use crate::error::Violation;
use crate::model::Model;
use crate::trace::Trace;

/// Linear token for one live obligation. Not `Clone`: consuming it is the
/// only way to use the obligation.
#[derive(Debug, PartialEq, Eq)]
#[must_use = "obligations must be discharged or split"]
pub struct Obligation {
    id: u64,
    owner: String,
}

impl Obligation {
    /// Placeholder handed out when ghost code is erased.
    pub(crate) fn erased(owner: &str) -> Self {
        Obligation { id: u64::MAX, owner: owner.to_string() }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn owner(&self) -> &str {
        &self.owner
    }

    pub fn is_erased(&self) -> bool {
        self.id == u64::MAX
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Measure {
    Unmeasured,
    Lex(Vec<u64>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Held,
    Discharged,
    /// Replaced by children through a rule.
    Consumed,
}

struct Entry<M: Model> {
    owner: String,
    formula: Formula<M>,
    index: u64,
    measure: Measure,
    status: Status,
    depends_on: Vec<String>,
    /// Measure at the previous visit of each checkpoint site.
    visits: BTreeMap<String, Vec<u64>>,
}

struct Assumption<M: Model> {
    name: String,
    formula: Formula<M>,
    violated: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RuleCounts {
    pub discharge: u64,
    pub strengthen: u64,
    pub split: u64,
    pub qsplit: u64,
    pub qempty: u64,
}

pub struct ObligationLedger<M: Model> {
    entries: BTreeMap<u64, Entry<M>>,
    next_id: u64,
    assumptions: Vec<Assumption<M>>,
    checkpoints: u64,
    rules: RuleCounts,
}

impl<M: Model> Default for ObligationLedger<M> {
    fn default() -> Self {
        Self { entries: BTreeMap::new(), next_id: 0, assumptions: Vec::new(), checkpoints: 0, rules: RuleCounts::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PendingObligation {
    pub id: u64,
    pub owner: String,
    pub formula: String,
    pub index: u64,
    pub class: PendingClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PendingClass {
    ProgressPending,
    AssumptionBlocked,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ViolatedObligation {
    pub id: u64,
    pub owner: String,
    pub formula: String,
    pub index: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AssumptionReport {
    pub name: String,
    pub formula: String,
    pub violated: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LivenessReport {
    /// Discharged obligations by outermost formula shape.
    pub discharged: BTreeMap<String, u64>,
    pub discharged_by_owner: BTreeMap<String, u64>,
    pub pending: Vec<PendingObligation>,
    pub violated: Vec<ViolatedObligation>,
    pub assumptions: Vec<AssumptionReport>,
    pub issued: u64,
    pub consumed: u64,
    pub rules: RuleCounts,
    pub checkpoints: u64,
}

impl LivenessReport {
    pub fn discharged_total(&self) -> u64 {
        self.discharged.values().sum()
    }

    /// Every issued obligation is accounted for exactly once.
    pub fn balanced(&self) -> bool {
        self.issued == self.discharged_total() + self.consumed + self.pending.len() as u64 + self.violated.len() as u64
    }
}

impl<M: Model> ObligationLedger<M> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates `show_at(formula, index)` owned by `owner`.
    pub fn issue(&mut self, owner: &str, formula: Formula<M>, index: u64, depends_on: Vec<String>) -> Obligation {
        let id = self.next_id;
        self.next_id += 1;
        self.entries.insert(
            id,
            Entry {
                owner: owner.to_string(),
                formula,
                index,
                measure: Measure::Unmeasured,
                status: Status::Held,
                depends_on,
                visits: BTreeMap::new(),
            },
        );
        Obligation { id, owner: owner.to_string() }
    }

    fn live(&self, ob: &Obligation, node: &str) -> Result<&Entry<M>, Violation> {
        let e = self.entries.get(&ob.id).filter(|e| e.status == Status::Held);
        let e = e.ok_or(Violation::UnknownObligation { id: ob.id })?;
        if e.owner != node {
            return Err(Violation::ForeignObligation { id: ob.id, owner: e.owner.clone(), node: node.to_string() });
        }
        Ok(e)
    }

    /// Hands an obligation to another owner.
    pub fn assign(&mut self, ob: Obligation, node: &str) -> Result<Obligation, Violation> {
        self.live(&ob, &ob.owner.clone())?;
        let e = self.entries.get_mut(&ob.id).expect("checked live");
        e.owner = node.to_string();
        Ok(Obligation { id: ob.id, owner: node.to_string() })
    }

    pub fn formula(&self, ob: &Obligation) -> Option<(&Formula<M>, u64)> {
        self.entries.get(&ob.id).map(|e| (&e.formula, e.index))
    }

    pub fn status(&self, id: u64) -> Option<Status> {
        self.entries.get(&id).map(|e| e.status.clone())
    }

    /// L.Discharge: the formula must evaluate to true at its index.
    pub fn discharge(&mut self, model: &M, node: &str, ob: Obligation, trace: &Trace<M>) -> Result<(), Violation> {
        let e = self.live(&ob, node)?;
        let verdict = holds_at(model, &e.formula, trace, e.index).unwrap_or(Verdict::Pending);
        if verdict != Verdict::True {
            return Err(Violation::DischargeUnjustified {
                id: ob.id,
                formula: e.formula.to_string(),
                at: e.index,
                verdict: verdict.to_string(),
            });
        }
        self.entries.get_mut(&ob.id).expect("checked live").status = Status::Discharged;
        self.rules.discharge += 1;
        Ok(())
    }

    /// Applies a catalog rule, consuming `ob` and issuing its children with
    /// the same owner and assumption dependencies. On error `ob` stays held.
    pub fn apply_rule(&mut self, node: &str, ob: Obligation, rule: Rule) -> Result<Vec<Obligation>, Violation> {
        let e = self.live(&ob, node)?;
        let children = apply(rule, &e.formula, e.index)?;
        let owner = e.owner.clone();
        let deps = e.depends_on.clone();
        self.entries.get_mut(&ob.id).expect("checked live").status = if children.is_empty() {
            Status::Discharged
        } else {
            Status::Consumed
        };
        match rule {
            Rule::Split => self.rules.split += 1,
            Rule::QSplit { .. } => self.rules.qsplit += 1,
            Rule::QEmpty => self.rules.qempty += 1,
            _ => self.rules.strengthen += 1,
        }
        Ok(children.into_iter().map(|(f, i)| self.issue(&owner, f, i, deps.clone())).collect())
    }

    /// Sets the termination measure. The arity is fixed by the first call.
    pub fn set_measure(&mut self, node: &str, ob: &Obligation, tuple: Vec<u64>) -> Result<(), Violation> {
        self.live(ob, node)?;
        let e = self.entries.get_mut(&ob.id).expect("checked live");
        if let Measure::Lex(old) = &e.measure {
            if old.len() != tuple.len() {
                return Err(Violation::MeasureArity { id: ob.id, expected: old.len(), got: tuple.len() });
            }
        }
        e.measure = Measure::Lex(tuple);
        Ok(())
    }

    /// Loop-head check: every measured obligation `node` holds must have a
    /// strictly smaller measure than at its previous visit to `site`.
    pub fn checkpoint(&mut self, node: &str, site: &str) -> Vec<Violation> {
        self.checkpoints += 1;
        let mut out = Vec::new();
        for (id, e) in self.entries.iter_mut() {
            if e.status != Status::Held || e.owner != node {
                continue;
            }
            let Measure::Lex(now) = &e.measure else { continue };
            if let Some(old) = e.visits.get(site) {
                if now >= old {
                    out.push(Violation::MeasureNotDecreasing {
                        id: *id,
                        site: site.to_string(),
                        old: old.clone(),
                        new: now.clone(),
                    });
                }
            }
            e.visits.insert(site.to_string(), now.clone());
        }
        out
    }

    /// Records a fairness assumption; registering a name twice is a no-op.
    pub fn assume_fair(&mut self, name: &str, formula: Formula<M>) {
        if self.assumptions.iter().all(|a| a.name != name) {
            self.assumptions.push(Assumption { name: name.to_string(), formula, violated: None });
        }
    }

    /// Marks an assumption as not holding for this run's configuration.
    pub fn mark_assumption_violated(&mut self, name: &str, reason: &str) {
        if let Some(a) = self.assumptions.iter_mut().find(|a| a.name == name) {
            a.violated = Some(reason.to_string());
        }
    }

    pub fn assumption_names(&self) -> Vec<String> {
        self.assumptions.iter().map(|a| a.name.clone()).collect()
    }

    pub fn held_count(&self) -> usize {
        self.entries.values().filter(|e| e.status == Status::Held).count()
    }

    /// Classifies every obligation still held. True verdicts count as
    /// discharged at the end; false ones as violated.
    pub fn end_of_run(&self, model: &M, trace: &Trace<M>) -> LivenessReport {
        let mut r = LivenessReport {
            issued: self.next_id,
            rules: self.rules.clone(),
            checkpoints: self.checkpoints,
            ..Default::default()
        };
        let violated_assumptions: Vec<&str> =
            self.assumptions.iter().filter(|a| a.violated.is_some()).map(|a| a.name.as_str()).collect();
        for (id, e) in &self.entries {
            let status = match e.status {
                Status::Held => match holds_at(model, &e.formula, trace, e.index).unwrap_or(Verdict::Pending) {
                    Verdict::True => Status::Discharged,
                    Verdict::False => {
                        r.violated.push(ViolatedObligation {
                            id: *id,
                            owner: e.owner.clone(),
                            formula: e.formula.to_string(),
                            index: e.index,
                        });
                        continue;
                    }
                    Verdict::Pending => {
                        let blocked = e.formula.has_eventually()
                            && e.depends_on.iter().any(|d| violated_assumptions.contains(&d.as_str()));
                        r.pending.push(PendingObligation {
                            id: *id,
                            owner: e.owner.clone(),
                            formula: e.formula.to_string(),
                            index: e.index,
                            class: if blocked { PendingClass::AssumptionBlocked } else { PendingClass::ProgressPending },
                        });
                        continue;
                    }
                },
                ref s => s.clone(),
            };
            match status {
                Status::Discharged => {
                    *r.discharged.entry(e.formula.shape().to_string()).or_default() += 1;
                    *r.discharged_by_owner.entry(e.owner.clone()).or_default() += 1;
                }
                Status::Consumed => r.consumed += 1,
                Status::Held => unreachable!("held obligations are classified above"),
            }
        }
        r.assumptions = self
            .assumptions
            .iter()
            .map(|a| AssumptionReport { name: a.name.clone(), formula: a.formula.to_string(), violated: a.violated.clone() })
            .collect();
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExampleAction, ExampleModel, ExampleState};

    type L = ObligationLedger<ExampleModel>;

    fn parse(text: &str) -> Formula<ExampleModel> {
        ExampleModel::default().parse_formula(text).unwrap()
    }

    fn sends(n: usize) -> Trace<ExampleModel> {
        let mut t: Trace<ExampleModel> = Trace::new(ExampleState::default());
        for _ in 0..n {
            let mut s = t.final_state().clone();
            s.a_to_b.push(0);
            t.push_step("A", Some(ExampleAction::ASend), s, vec![]);
        }
        t
    }

    #[test]
    fn node_a_style_proof() {
        let m = ExampleModel::default();
        let mut l = L::new();
        let t = sends(1);
        let ob = l.issue("A", parse("(always (eventually (action ASend)))"), 0, vec![]);
        let mut kids = l.apply_rule("A", ob, Rule::AlwaysUnfold).unwrap();
        let rest = kids.pop().unwrap();
        let ev = kids.pop().unwrap();
        let now = l.apply_rule("A", ev, Rule::EventuallyConcretize { at: 0 }).unwrap().pop().unwrap();
        let _next = l.apply_rule("A", rest, Rule::AlwaysEventuallyIndexAdvance { to: 1 }).unwrap();
        l.discharge(&m, "A", now, &t).unwrap();
        let r = l.end_of_run(&m, &t);
        assert_eq!(r.discharged.get("action"), Some(&1));
        assert_eq!(r.pending.len(), 1);
        assert_eq!(r.pending[0].class, PendingClass::ProgressPending);
        assert!(r.balanced());
    }

    #[test]
    fn premature_discharge_is_rejected() {
        let m = ExampleModel::default();
        let mut l = L::new();
        let ob = l.issue("A", parse("(eventually (action ASend))"), 0, vec![]);
        let e = l.discharge(&m, "A", ob, &sends(0)).unwrap_err();
        assert_eq!(e.kind(), "DischargeUnjustified");
        let top = l.issue("A", Formula::Top, 3, vec![]);
        l.discharge(&m, "A", top, &sends(0)).unwrap_err();
        let top = l.issue("A", Formula::Top, 0, vec![]);
        l.discharge(&m, "A", top, &sends(0)).unwrap();
    }

    #[test]
    fn ownership_is_enforced() {
        let mut l = L::new();
        let ob = l.issue("A", Formula::Top, 0, vec![]);
        assert_eq!(l.apply_rule("B", ob, Rule::Split).unwrap_err().kind(), "ForeignObligation");
    }

    #[test]
    fn measures_must_decrease() {
        let mut l = L::new();
        let ob = l.issue("A", parse("(action ASend)"), 4, vec![]);
        l.set_measure("A", &ob, vec![2, 5]).unwrap();
        assert!(l.checkpoint("A", "loop").is_empty());
        l.set_measure("A", &ob, vec![2, 4]).unwrap();
        assert!(l.checkpoint("A", "loop").is_empty());
        l.set_measure("A", &ob, vec![1, 9]).unwrap();
        assert!(l.checkpoint("A", "loop").is_empty());
        let v = l.checkpoint("A", "loop");
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind(), "MeasureNotDecreasing");
        assert_eq!(l.set_measure("A", &ob, vec![1]).unwrap_err().kind(), "MeasureArity");
        // another node's checkpoint does not look at A's obligations
        assert!(l.checkpoint("B", "loop").is_empty());
    }

    #[test]
    fn assumption_blocked_classification() {
        let m = ExampleModel::default();
        let mut l = L::new();
        l.assume_fair("a_to_b-delivery", parse("(always (eventually (action BRecv)))"));
        l.assume_fair("a_to_b-delivery", Formula::Top);
        let _b = l.issue("B", parse("(eventually (action BRecv))"), 0, vec!["a_to_b-delivery".into()]);
        let _a = l.issue("A", parse("(eventually (action ARecv))"), 0, vec![]);
        l.mark_assumption_violated("a_to_b-delivery", "loss probability 1");
        let r = l.end_of_run(&m, &sends(3));
        assert_eq!(r.assumptions.len(), 1);
        let classes: Vec<_> = r.pending.iter().map(|p| (p.owner.as_str(), p.class)).collect();
        assert_eq!(classes, [("B", PendingClass::AssumptionBlocked), ("A", PendingClass::ProgressPending)]);
    }

    #[test]
    fn terminated_always_discharges_at_end() {
        let m = ExampleModel::default();
        let mut l = L::new();
        let _ob = l.issue("A", parse("(always (state a_ctr_ge 0))"), 0, vec![]);
        let mut t = sends(2);
        t.terminated = true;
        let r = l.end_of_run(&m, &t);
        assert_eq!(r.discharged.get("always"), Some(&1));
        assert!(r.pending.is_empty());
    }
}
