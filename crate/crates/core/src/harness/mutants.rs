//! Fault-injected variants of the node programs, each with the violation
//! category that must catch it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutant {
    /// Node A sends `ctr + 1`.
    ASendsPlusOne,
    /// Node A bumps its counter but not the ghost counter.
    ASkipsCounterBump,
    /// Node B receives without recording the request in `b_work`.
    BOmitsBworkUpdate,
    /// Node B answers a request it never received.
    BRespondsWithoutBrecv,
    /// Node A's send section is released as a stutter.
    ActionMislabelledStutter,
    /// Node A sends without opening its guard.
    GuardNotOpened,
    /// Node B opens node A's guard.
    GuardOpenedByWrongNode,
    /// Node B answers with the wrong request number.
    BWrongNumber,
    /// A Memcached handler processes without updating `con_state`.
    MemcachedSkipsConstate,
}

impl Mutant {
    pub const ALL: [Mutant; 9] = [
        Mutant::ASendsPlusOne,
        Mutant::ASkipsCounterBump,
        Mutant::BOmitsBworkUpdate,
        Mutant::BRespondsWithoutBrecv,
        Mutant::ActionMislabelledStutter,
        Mutant::GuardNotOpened,
        Mutant::GuardOpenedByWrongNode,
        Mutant::BWrongNumber,
        Mutant::MemcachedSkipsConstate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Mutant::ASendsPlusOne => "a-sends-plus-one",
            Mutant::ASkipsCounterBump => "a-skips-counter-bump",
            Mutant::BOmitsBworkUpdate => "b-omits-bwork-update",
            Mutant::BRespondsWithoutBrecv => "b-responds-without-brecv",
            Mutant::ActionMislabelledStutter => "action-mislabelled-stutter",
            Mutant::GuardNotOpened => "guard-not-opened",
            Mutant::GuardOpenedByWrongNode => "guard-opened-by-wrong-node",
            Mutant::BWrongNumber => "b-wrong-number",
            Mutant::MemcachedSkipsConstate => "memcached-skips-constate",
        }
    }

    /// The model whose harness hosts the mutant.
    pub fn model(&self) -> &'static str {
        match self {
            Mutant::MemcachedSkipsConstate => "memcached",
            _ => "example",
        }
    }

    /// Violation kind the first detection must have.
    pub fn expected(&self) -> &'static str {
        match self {
            Mutant::ASendsPlusOne
            | Mutant::ASkipsCounterBump
            | Mutant::BOmitsBworkUpdate
            | Mutant::BWrongNumber
            | Mutant::MemcachedSkipsConstate => "RefinementViolation",
            Mutant::BRespondsWithoutBrecv => "BaseCaseViolation",
            Mutant::ActionMislabelledStutter => "StutterViolation",
            Mutant::GuardNotOpened => "GuardViolation",
            Mutant::GuardOpenedByWrongNode => "ForeignGuardUse",
        }
    }
}

impl fmt::Display for Mutant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mutant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Mutant::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| format!("unknown mutant `{s}`"))
    }
}
