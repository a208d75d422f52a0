//! The running example: node A sends its counter to node B over a lossy
//! channel, B answers with a pair `(request, response)`, and A advances its
//! counter past every answered request.

use serde::{Deserialize, Serialize};

use super::{appended, sequences, ActionView, LivenessProperty, Model, NamedAssumption, OracleBounds};
use crate::ltl::{AtomRegistry, Formula};
use crate::tla::{TlaAction, TlaFairness, TlaFairnessKind, TlaModule, TlaType, TlaVariable};

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleState {
    pub a_ctr: u64,
    pub b_work: Option<u64>,
    pub a_to_b: Vec<u64>,
    pub b_to_a: Vec<(u64, u64)>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExampleAction {
    ASend,
    ARecv,
    /// Carries the response value, the witness of the existential.
    BSend(u64),
    BRecv,
    ALoss,
    BLoss,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExampleGuardKind {
    NodeA,
    NodeB,
    Environment,
}

/// The environment-owned part of the state: both channels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExampleEnv {
    pub a_to_b: Vec<u64>,
    pub b_to_a: Vec<(u64, u64)>,
}

/// Which transition relation the model uses. `ASendPlusOne` is a
/// deliberately broken model used to exercise the oracle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExampleVariant {
    #[default]
    Faithful,
    AsendPlusOne,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExampleModel {
    pub variant: ExampleVariant,
}

const ACTION_NAMES: &[&str] = &["ASend", "ARecv", "BSend", "BRecv", "ALoss", "BLoss"];

fn head_tail<T: Clone>(seq: &[T]) -> Option<(T, Vec<T>)> {
    let (h, t) = seq.split_first()?;
    Some((h.clone(), t.to_vec()))
}

impl ExampleModel {
    pub fn new(variant: ExampleVariant) -> Self {
        Self { variant }
    }

    fn sent_value(&self, p: &ExampleState) -> Option<u64> {
        match self.variant {
            ExampleVariant::Faithful => Some(p.a_ctr),
            ExampleVariant::AsendPlusOne => p.a_ctr.checked_add(1),
        }
    }

    /// The unique successor of `p` under a fully instantiated action, if
    /// the action is enabled.
    pub fn apply(&self, p: &ExampleState, a: &ExampleAction) -> Option<ExampleState> {
        let mut s = p.clone();
        match *a {
            ExampleAction::ASend => s.a_to_b.push(self.sent_value(p)?),
            ExampleAction::ARecv => {
                let ((n, _), rest) = head_tail(&p.b_to_a)?;
                s.a_ctr = p.a_ctr.max(n.checked_add(1)?);
                s.b_to_a = rest;
            }
            ExampleAction::ALoss => s.b_to_a = head_tail(&p.b_to_a)?.1,
            ExampleAction::BSend(resp) => {
                let req = p.b_work?;
                s.b_to_a.push((req, resp));
                s.b_work = None;
            }
            ExampleAction::BRecv => {
                if p.b_work.is_some() {
                    return None;
                }
                let (n, rest) = head_tail(&p.a_to_b)?;
                s.a_to_b = rest;
                s.b_work = Some(n);
            }
            ExampleAction::BLoss => s.a_to_b = head_tail(&p.a_to_b)?.1,
        }
        Some(s)
    }
}

/// Lemma predicates of the model-invariant chain.
pub mod lemmas {
    use super::{ExampleAction, ExampleState};

    /// Step 1: the counter never decreases along a transition.
    pub fn step1(p: &ExampleState, s: &ExampleState, _a: &ExampleAction) -> bool {
        s.a_ctr >= p.a_ctr
    }

    /// Step 2: every request in flight to B is at most the counter.
    pub fn step2(s: &ExampleState) -> bool {
        s.a_to_b.iter().all(|n| *n <= s.a_ctr)
    }

    /// Step 3: B's current request is at most the counter.
    pub fn step3(s: &ExampleState) -> bool {
        s.b_work.is_none_or(|n| n <= s.a_ctr)
    }

    /// Step 4: every answered request in flight to A is at most the counter.
    pub fn step4(s: &ExampleState) -> bool {
        s.b_to_a.iter().all(|(n, _)| *n <= s.a_ctr)
    }

    /// Step 5, at node A's receive site: the pair about to be received
    /// names a request no larger than the counter.
    pub fn step5(p: &ExampleState, _s: &ExampleState, a: &ExampleAction) -> bool {
        match a {
            ExampleAction::ARecv => p.b_to_a.first().is_none_or(|(n, _)| *n <= p.a_ctr),
            _ => true,
        }
    }

    #[derive(Clone, Copy, Debug, PartialEq, Eq)]
    pub enum ProofKind {
        FromNextDefinition,
        Inductive,
        Instantiation,
    }

    #[derive(Clone, Copy)]
    pub enum LemmaPredicate {
        State(fn(&ExampleState) -> bool),
        Transition(fn(&ExampleState, &ExampleState, &ExampleAction) -> bool),
    }

    pub struct Lemma {
        pub name: &'static str,
        pub predicate: LemmaPredicate,
        pub proof: ProofKind,
    }

    /// The five lemmas in dependency order.
    pub fn chain() -> Vec<Lemma> {
        vec![
            Lemma { name: "step1", predicate: LemmaPredicate::Transition(step1), proof: ProofKind::FromNextDefinition },
            Lemma { name: "step2", predicate: LemmaPredicate::State(step2), proof: ProofKind::Inductive },
            Lemma { name: "step3", predicate: LemmaPredicate::State(step3), proof: ProofKind::Inductive },
            Lemma { name: "step4", predicate: LemmaPredicate::State(step4), proof: ProofKind::Inductive },
            Lemma { name: "step5", predicate: LemmaPredicate::Transition(step5), proof: ProofKind::Instantiation },
        ]
    }
}

impl Model for ExampleModel {
    type State = ExampleState;
    type Action = ExampleAction;
    type GuardKind = ExampleGuardKind;
    type Env = ExampleEnv;

    fn name(&self) -> &'static str {
        "example"
    }

    fn init(&self, s: &ExampleState) -> bool {
        s.a_ctr == 0 && s.b_work.is_none() && s.a_to_b.is_empty() && s.b_to_a.is_empty()
    }

    fn next(&self, p: &ExampleState, s: &ExampleState, a: &ExampleAction) -> bool {
        let same_ctr = s.a_ctr == p.a_ctr;
        let same_work = s.b_work == p.b_work;
        let same_ab = s.a_to_b == p.a_to_b;
        let same_ba = s.b_to_a == p.b_to_a;
        match *a {
            ExampleAction::ASend => match self.sent_value(p) {
                Some(v) => same_ctr && same_work && same_ba && s.a_to_b == appended(&p.a_to_b, v),
                None => false,
            },
            ExampleAction::ARecv => match p.b_to_a.split_first() {
                Some(((n, _), tail)) => {
                    same_work
                        && same_ab
                        && s.b_to_a == tail
                        && n.checked_add(1).is_some_and(|n1| s.a_ctr == p.a_ctr.max(n1))
                }
                None => false,
            },
            ExampleAction::ALoss => {
                !p.b_to_a.is_empty() && same_ctr && same_work && same_ab && s.b_to_a == p.b_to_a[1..]
            }
            ExampleAction::BSend(resp) => match p.b_work {
                Some(req) => same_ctr && same_ab && s.b_work.is_none() && s.b_to_a == appended(&p.b_to_a, (req, resp)),
                None => false,
            },
            ExampleAction::BRecv => {
                !p.a_to_b.is_empty()
                    && p.b_work.is_none()
                    && same_ctr
                    && same_ba
                    && s.a_to_b == p.a_to_b[1..]
                    && s.b_work == Some(p.a_to_b[0])
            }
            ExampleAction::BLoss => {
                !p.a_to_b.is_empty() && same_ctr && same_work && same_ba && s.a_to_b == p.a_to_b[1..]
            }
        }
    }

    fn guard_needed(&self, a: &ExampleAction, g: &ExampleGuardKind) -> bool {
        match a {
            ExampleAction::ASend | ExampleAction::ARecv => *g == ExampleGuardKind::NodeA,
            ExampleAction::BSend(_) | ExampleAction::BRecv => *g == ExampleGuardKind::NodeB,
            ExampleAction::ALoss | ExampleAction::BLoss => *g == ExampleGuardKind::Environment,
        }
    }

    fn guard_kinds(&self) -> Vec<ExampleGuardKind> {
        vec![ExampleGuardKind::NodeA, ExampleGuardKind::NodeB, ExampleGuardKind::Environment]
    }

    fn is_environment_guard(&self, g: &ExampleGuardKind) -> bool {
        *g == ExampleGuardKind::Environment
    }

    fn env_projection(&self, s: &ExampleState) -> ExampleEnv {
        ExampleEnv { a_to_b: s.a_to_b.clone(), b_to_a: s.b_to_a.clone() }
    }

    fn action_view(&self, a: &ExampleAction) -> ActionView {
        match a {
            ExampleAction::ASend => ActionView { name: "ASend", args: vec![] },
            ExampleAction::ARecv => ActionView { name: "ARecv", args: vec![] },
            ExampleAction::BSend(r) => ActionView { name: "BSend", args: vec![*r] },
            ExampleAction::BRecv => ActionView { name: "BRecv", args: vec![] },
            ExampleAction::ALoss => ActionView { name: "ALoss", args: vec![] },
            ExampleAction::BLoss => ActionView { name: "BLoss", args: vec![] },
        }
    }

    fn action_names(&self) -> &'static [&'static str] {
        ACTION_NAMES
    }

    fn atoms(&self) -> AtomRegistry<Self> {
        AtomRegistry::default()
            .state("a_ctr_ge", 1, |a, s: &ExampleState| s.a_ctr >= a[0])
            .state("a_ctr_eq", 1, |a, s: &ExampleState| s.a_ctr == a[0])
            .state("b_work_none", 0, |_, s: &ExampleState| s.b_work.is_none())
            .state("b_work_is", 1, |a, s: &ExampleState| s.b_work == Some(a[0]))
            .state("a_to_b_empty", 0, |_, s: &ExampleState| s.a_to_b.is_empty())
            .state("b_to_a_empty", 0, |_, s: &ExampleState| s.b_to_a.is_empty())
            .state("step2", 0, |_, s: &ExampleState| lemmas::step2(s))
            .state("step3", 0, |_, s: &ExampleState| lemmas::step3(s))
            .state("step4", 0, |_, s: &ExampleState| lemmas::step4(s))
            // b_to_a' == b_to_a.append((i, r))
            .step("b_to_a_appends", 2, |a, p: &ExampleState, s: &ExampleState, _| {
                s.b_to_a == appended(&p.b_to_a, (a[0], a[1]))
            })
    }

    fn liveness_property(&self, id: &str) -> Option<LivenessProperty<Self>> {
        let (text, deps): (&str, &[&str]) = match id {
            "1" => ("(always (eventually (action ASend)))", &[]),
            "2" => ("(always (eventually (exists r (nat 0) (action BSend r))))", &["a_to_b-delivery"]),
            "3" => (
                "(forall i (nat 0) (eventually (exists r (nat 0) (and (pred b_to_a_appends i r) (action BSend r)))))",
                &["a_to_b-delivery"],
            ),
            _ => return None,
        };
        let formula = self.parse_formula(text).expect("shipped liveness properties parse");
        Some(LivenessProperty { id: id.to_string(), formula, depends_on: deps.iter().map(|d| d.to_string()).collect() })
    }

    fn default_liveness(&self) -> Vec<String> {
        vec!["1".into(), "2".into(), "3".into()]
    }

    fn fairness_assumptions(&self) -> Vec<NamedAssumption<Self>> {
        [
            ("b_to_a-delivery", "(or (eventually (always (state b_to_a_empty))) (always (eventually (action ARecv))))"),
            ("a_to_b-delivery", "(or (eventually (always (state a_to_b_empty))) (always (eventually (action BRecv))))"),
        ]
        .into_iter()
        .map(|(name, text)| NamedAssumption {
            name: name.to_string(),
            formula: self.parse_formula(text).expect("shipped assumptions parse"),
        })
        .collect()
    }

    fn init_states(&self, _bounds: &OracleBounds) -> Vec<ExampleState> {
        vec![ExampleState::default()]
    }

    fn in_bounds(&self, s: &ExampleState, b: &OracleBounds) -> bool {
        s.a_ctr <= b.max_value
            && s.b_work.is_none_or(|n| n <= b.max_value)
            && s.a_to_b.len() <= b.max_channel
            && s.b_to_a.len() <= b.max_channel
            && s.a_to_b.iter().all(|n| *n <= b.max_value)
            && s.b_to_a.iter().all(|(n, r)| *n <= b.max_value && *r <= b.max_value)
    }

    fn successors(&self, p: &ExampleState, b: &OracleBounds) -> Vec<(ExampleAction, ExampleState)> {
        self.actions_in_bounds(b)
            .into_iter()
            .filter_map(|a| {
                let s = self.apply(p, &a)?;
                self.in_bounds(&s, b).then_some((a, s))
            })
            .collect()
    }

    fn states_in_bounds(&self, b: &OracleBounds) -> Vec<ExampleState> {
        let values: Vec<u64> = (0..=b.max_value).collect();
        let pairs: Vec<(u64, u64)> = values.iter().flat_map(|n| values.iter().map(move |r| (*n, *r))).collect();
        let ab = sequences(&values, b.max_channel);
        let ba = sequences(&pairs, b.max_channel);
        let mut out = Vec::new();
        for a_ctr in &values {
            for b_work in std::iter::once(None).chain(values.iter().map(|v| Some(*v))) {
                for a_to_b in &ab {
                    for b_to_a in &ba {
                        out.push(ExampleState { a_ctr: *a_ctr, b_work, a_to_b: a_to_b.clone(), b_to_a: b_to_a.clone() });
                    }
                }
            }
        }
        out
    }

    fn actions_in_bounds(&self, b: &OracleBounds) -> Vec<ExampleAction> {
        let mut out = vec![ExampleAction::ASend, ExampleAction::ARecv, ExampleAction::ALoss];
        out.extend((0..=b.max_value).map(ExampleAction::BSend));
        out.extend([ExampleAction::BRecv, ExampleAction::BLoss]);
        out
    }

    fn step_values(&self, p: &ExampleState, a: Option<&ExampleAction>, s: &ExampleState) -> Vec<u64> {
        let mut out = Vec::new();
        for st in [p, s] {
            out.push(st.a_ctr);
            out.extend(st.b_work);
            out.extend(st.a_to_b.iter().copied());
            out.extend(st.b_to_a.iter().flat_map(|(n, r)| [*n, *r]));
        }
        if let Some(ExampleAction::BSend(r)) = a {
            out.push(*r);
        }
        out
    }

    fn tla_module(&self) -> Option<TlaModule> {
        let var = |name: &str, ty| TlaVariable { name: name.into(), ty };
        let act = |name: &str, exists: &[(&str, &str)], guards: &[&str], updates: &[(&str, &str)]| TlaAction {
            name: name.into(),
            exists: exists.iter().map(|(v, s)| (v.to_string(), s.to_string())).collect(),
            guards: guards.iter().map(|g| g.to_string()).collect(),
            updates: updates.iter().map(|(v, e)| (v.to_string(), e.to_string())).collect(),
        };
        let asend = match self.variant {
            ExampleVariant::Faithful => "Append(AToB, ACtr)",
            ExampleVariant::AsendPlusOne => "Append(AToB, ACtr + 1)",
        };
        Some(TlaModule {
            name: "Example".into(),
            extends: vec!["Naturals".into(), "Sequences".into()],
            constants: vec![],
            variables: vec![
                var("ACtr", TlaType::Nat),
                var("BWork", TlaType::Boolean),
                var("BWorkNum", TlaType::Nat),
                var("AToB", TlaType::Seq(Box::new(TlaType::Nat))),
                var("BToA", TlaType::Seq(Box::new(TlaType::Product(vec![TlaType::Nat, TlaType::Nat])))),
            ],
            definitions: vec![("Max(x, y)".into(), "IF x > y THEN x ELSE y".into())],
            init: ["ACtr = 0", "BWork = FALSE", "BWorkNum = 0", "AToB = <<>>", "BToA = <<>>"]
                .map(String::from)
                .to_vec(),
            actions: vec![
                act("ASend", &[], &[], &[("AToB", asend)]),
                act(
                    "ARecv",
                    &[],
                    &["BToA # <<>>"],
                    &[("ACtr", "Max(Head(BToA)[1] + 1, ACtr)"), ("BToA", "Tail(BToA)")],
                ),
                act(
                    "BSend",
                    &[("Resp", "Nat")],
                    &["BWork = TRUE"],
                    &[("BWork", "FALSE"), ("BToA", "Append(BToA, <<BWorkNum, Resp>>)")],
                ),
                act(
                    "BRecv",
                    &[],
                    &["BWork = FALSE", "AToB # <<>>"],
                    &[("BWork", "TRUE"), ("BWorkNum", "Head(AToB)"), ("AToB", "Tail(AToB)")],
                ),
                act("ALoss", &[], &["BToA # <<>>"], &[("BToA", "Tail(BToA)")]),
                act("BLoss", &[], &["AToB # <<>>"], &[("AToB", "Tail(AToB)")]),
            ],
            fairness: vec![
                TlaFairness { kind: TlaFairnessKind::Strong, action: "ASend".into() },
                TlaFairness { kind: TlaFairnessKind::Weak, action: "BSend".into() },
            ],
        })
    }
}

/// Convenience constructor for formulas over the example model.
pub fn formula(text: &str) -> Formula<ExampleModel> {
    ExampleModel::default().parse_formula(text).expect("formula parses")
}
