//! Abstract transition-system models.
//!
//! A [`Model`] bundles the state and action types of a system with its
//! `init`/`next` relation, the guard discipline (`guard_needed`), the
//! environment projection, and the finitization hooks used by the
//! explicit-state oracle.

use std::collections::BTreeSet;
use std::fmt::{self, Debug};
use std::hash::Hash;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ltl::{AtomRegistry, Formula, FormulaParseError};
use crate::tla::TlaModule;

pub mod example;
pub mod memcached;
pub mod toy;

pub use example::{ExampleAction, ExampleGuardKind, ExampleModel, ExampleState, ExampleVariant};
pub use toy::{ToyAction, ToyGuardKind, ToyModel, ToyState};
pub use memcached::{AbsCmd, AbsRes, Bytes, ConId, ConState, MemcachedAction, MemcachedGuardKind, MemcachedModel, MemcachedState};

/// Values stored in traces and explored by the oracle.
pub trait ModelValue:
    Clone + Eq + Ord + Hash + Debug + Serialize + DeserializeOwned + Send + Sync + 'static
{
}

impl<T> ModelValue for T where
    T: Clone + Eq + Ord + Hash + Debug + Serialize + DeserializeOwned + Send + Sync + 'static
{
}

/// Name and numeric arguments of an action label, used by label patterns in
/// formulas such as `(action BSend r)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionView {
    pub name: &'static str,
    pub args: Vec<u64>,
}

/// A liveness property shipped with a model, together with the fairness
/// assumptions its proof relies on.
pub struct LivenessProperty<M: Model> {
    pub id: String,
    pub formula: Formula<M>,
    pub depends_on: Vec<String>,
}

/// A fairness assumption shipped with a model (registered with the
/// obligation ledger at the start of a run).
pub struct NamedAssumption<M: Model> {
    pub name: String,
    pub formula: Formula<M>,
}

pub trait Model: Clone + Debug + Send + Sync + 'static {
    type State: ModelValue;
    type Action: ModelValue;
    type GuardKind: ModelValue;
    type Env: Clone + Eq + Debug + Serialize;

    fn name(&self) -> &'static str;

    fn init(&self, s: &Self::State) -> bool;

    /// The transition relation. Pure; the action selects exactly one case.
    fn next(&self, p: &Self::State, s: &Self::State, a: &Self::Action) -> bool;

    fn guard_needed(&self, a: &Self::Action, g: &Self::GuardKind) -> bool;

    /// Every guard kind of this model instance.
    fn guard_kinds(&self) -> Vec<Self::GuardKind>;

    /// Environment guards are never dispensed to a node.
    fn is_environment_guard(&self, g: &Self::GuardKind) -> bool;

    fn env_projection(&self, s: &Self::State) -> Self::Env;

    fn action_view(&self, a: &Self::Action) -> ActionView;

    /// All label names, for validating `(action NAME ...)` atoms.
    fn action_names(&self) -> &'static [&'static str];

    fn atoms(&self) -> AtomRegistry<Self> {
        AtomRegistry::default()
    }

    fn liveness_property(&self, _id: &str) -> Option<LivenessProperty<Self>> {
        None
    }

    fn default_liveness(&self) -> Vec<String> {
        Vec::new()
    }

    fn fairness_assumptions(&self) -> Vec<NamedAssumption<Self>> {
        Vec::new()
    }

    // ---- oracle support -------------------------------------------------

    fn init_states(&self, bounds: &OracleBounds) -> Vec<Self::State>;

    fn in_bounds(&self, s: &Self::State, bounds: &OracleBounds) -> bool;

    /// Exactly the pairs `(a, s)` with `next(p, s, a)` and `s` in bounds.
    fn successors(&self, p: &Self::State, bounds: &OracleBounds) -> Vec<(Self::Action, Self::State)>;

    /// Every in-bounds state, reachable or not.
    fn states_in_bounds(&self, bounds: &OracleBounds) -> Vec<Self::State>;

    /// Every in-bounds action label.
    fn actions_in_bounds(&self, bounds: &OracleBounds) -> Vec<Self::Action>;

    /// Naturals mentioned by a step; candidate witnesses when a value
    /// quantifier ranges over an unbounded domain.
    fn step_values(&self, _pre: &Self::State, _a: Option<&Self::Action>, _post: &Self::State) -> Vec<u64> {
        Vec::new()
    }

    fn tla_module(&self) -> Option<TlaModule> {
        None
    }

    /// Parses an S-expression formula against this model's atoms.
    fn parse_formula(&self, text: &str) -> Result<Formula<Self>, FormulaParseError> {
        crate::ltl::parse_formula(self, text)
    }
}

/// Finitization of a model's state space for the oracle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleBounds {
    pub max_value: u64,
    pub max_channel: usize,
    pub connections: u64,
    pub keys: u64,
    pub values: u64,
}

impl Default for OracleBounds {
    fn default() -> Self {
        Self { max_value: 1, max_channel: 1, connections: 1, keys: 2, values: 2 }
    }
}

impl OracleBounds {
    pub fn new(max_value: u64, max_channel: usize) -> Self {
        Self { max_value, max_channel, ..Self::default() }
    }
}

impl fmt::Display for OracleBounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "max_value={},max_channel={},connections={},keys={},values={}",
            self.max_value, self.max_channel, self.connections, self.keys, self.values
        )
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("invalid bounds `{0}`")]
pub struct BoundsParseError(pub String);

impl FromStr for OracleBounds {
    type Err = BoundsParseError;

    /// `max_value=3,max_channel=2[,connections=N,keys=N,values=N]`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut b = OracleBounds::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| BoundsParseError(part.to_string()))?;
            let n: u64 = v.trim().parse().map_err(|_| BoundsParseError(part.to_string()))?;
            match k.trim() {
                "max_value" => b.max_value = n,
                "max_channel" => b.max_channel = n as usize,
                "connections" => b.connections = n,
                "keys" => b.keys = n,
                "values" => b.values = n,
                _ => return Err(BoundsParseError(part.to_string())),
            }
        }
        Ok(b)
    }
}

/// Key-ordered JSON value of `v` (serde_json's default map is a `BTreeMap`).
pub fn canonical_json<T: Serialize + ?Sized>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("model values serialize to JSON")
}

pub fn canonical_string<T: Serialize + ?Sized>(v: &T) -> String {
    canonical_json(v).to_string()
}

/// All sequences of length `<= max_len` over `alphabet`, shortest first.
pub fn sequences<T: Clone>(alphabet: &[T], max_len: usize) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![Vec::new()];
    let mut layer: Vec<Vec<T>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next_layer = Vec::with_capacity(layer.len() * alphabet.len());
        for prefix in &layer {
            for x in alphabet {
                let mut v = prefix.clone();
                v.push(x.clone());
                next_layer.push(v);
            }
        }
        out.extend(next_layer.iter().cloned());
        layer = next_layer;
    }
    out
}

pub(crate) fn appended<T: Clone>(seq: &[T], v: T) -> Vec<T> {
    let mut out = Vec::with_capacity(seq.len() + 1);
    out.extend_from_slice(seq);
    out.push(v);
    out
}

/// Guard kinds required by `a`.
pub fn required_guards<M: Model>(model: &M, a: &M::Action) -> BTreeSet<M::GuardKind> {
    model.guard_kinds().into_iter().filter(|g| model.guard_needed(a, g)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequences_counts() {
        assert_eq!(sequences(&[0u8, 1], 2).len(), 1 + 2 + 4);
        assert_eq!(sequences::<u8>(&[], 3).len(), 1);
        assert_eq!(sequences(&[7u8], 0), vec![Vec::<u8>::new()]);
    }

    #[test]
    fn bounds_parse() {
        let b: OracleBounds = "max_value=3,max_channel=2".parse().unwrap();
        assert_eq!((b.max_value, b.max_channel), (3, 2));
        assert!("max_value=x".parse::<OracleBounds>().is_err());
        assert!("colour=3".parse::<OracleBounds>().is_err());
        let again: OracleBounds = b.to_string().parse().unwrap();
        assert_eq!(again, b);
    }

    #[test]
    fn canonical_json_sorts_keys() {
        #[derive(Serialize)]
        struct S {
            zeta: u8,
            alpha: u8,
        }
        assert_eq!(canonical_string(&S { zeta: 1, alpha: 2 }), r#"{"alpha":2,"zeta":1}"#);
    }
}
