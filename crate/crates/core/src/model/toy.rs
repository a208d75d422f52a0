//! Two-node toy system over bits, small enough to enumerate every short
//! trace. `Ping` flips `x`; `Pong` copies `x` into `y`.

use serde::{Deserialize, Serialize};

use super::{ActionView, Model, OracleBounds};
use crate::ltl::AtomRegistry;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyState {
    pub x: u64,
    pub y: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ToyAction {
    Ping,
    Pong,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ToyGuardKind {
    Pinger,
    Ponger,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ToyModel;

impl ToyModel {
    pub fn apply(&self, p: &ToyState, a: ToyAction) -> ToyState {
        match a {
            ToyAction::Ping => ToyState { x: 1 - p.x, y: p.y },
            ToyAction::Pong => ToyState { x: p.x, y: p.x },
        }
    }
}

impl Model for ToyModel {
    type State = ToyState;
    type Action = ToyAction;
    type GuardKind = ToyGuardKind;
    type Env = ();

    fn name(&self) -> &'static str {
        "toy"
    }

    fn init(&self, s: &ToyState) -> bool {
        *s == ToyState::default()
    }

    fn next(&self, p: &ToyState, s: &ToyState, a: &ToyAction) -> bool {
        p.x <= 1 && p.y <= 1 && *s == self.apply(p, *a)
    }

    fn guard_needed(&self, a: &ToyAction, g: &ToyGuardKind) -> bool {
        matches!((a, g), (ToyAction::Ping, ToyGuardKind::Pinger) | (ToyAction::Pong, ToyGuardKind::Ponger))
    }

    fn guard_kinds(&self) -> Vec<ToyGuardKind> {
        vec![ToyGuardKind::Pinger, ToyGuardKind::Ponger]
    }

    fn is_environment_guard(&self, _g: &ToyGuardKind) -> bool {
        false
    }

    fn env_projection(&self, _s: &ToyState) {}

    fn action_view(&self, a: &ToyAction) -> ActionView {
        match a {
            ToyAction::Ping => ActionView { name: "Ping", args: vec![] },
            ToyAction::Pong => ActionView { name: "Pong", args: vec![] },
        }
    }

    fn action_names(&self) -> &'static [&'static str] {
        &["Ping", "Pong"]
    }

    fn atoms(&self) -> AtomRegistry<Self> {
        AtomRegistry::default()
            .state("x_is", 1, |a, s: &ToyState| s.x == a[0])
            .state("y_is", 1, |a, s: &ToyState| s.y == a[0])
            .state("synced", 0, |_, s: &ToyState| s.x == s.y)
    }

    fn init_states(&self, _b: &OracleBounds) -> Vec<ToyState> {
        vec![ToyState::default()]
    }

    fn in_bounds(&self, s: &ToyState, _b: &OracleBounds) -> bool {
        s.x <= 1 && s.y <= 1
    }

    fn successors(&self, p: &ToyState, _b: &OracleBounds) -> Vec<(ToyAction, ToyState)> {
        [ToyAction::Ping, ToyAction::Pong].into_iter().map(|a| (a, self.apply(p, a))).collect()
    }

    fn states_in_bounds(&self, _b: &OracleBounds) -> Vec<ToyState> {
        (0..2).flat_map(|x| (0..2).map(move |y| ToyState { x, y })).collect()
    }

    fn actions_in_bounds(&self, _b: &OracleBounds) -> Vec<ToyAction> {
        vec![ToyAction::Ping, ToyAction::Pong]
    }

    fn step_values(&self, p: &ToyState, _a: Option<&ToyAction>, s: &ToyState) -> Vec<u64> {
        vec![p.x, p.y, s.x, s.y]
    }
}
