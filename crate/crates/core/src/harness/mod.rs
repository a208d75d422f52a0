//! Deterministic simulated execution: a seeded scheduler, lossy channels
//! driven through I/O shims, the node programs of the running example and
//! the Memcached-lite handlers.

mod channel;
pub mod example;
pub mod memcached;
mod mutants;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Policy, Violation, ViolationRecord};
use crate::ltl::LivenessReport;
use crate::model::Model;
use crate::trace::{AuxRecord, Trace};

pub use channel::{LossyChannel, ObservableLog};
pub use mutants::Mutant;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Checked,
    Erased,
}

/// Scheduler knobs. Identical configurations give identical schedules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerConfig {
    pub seed: u64,
    pub max_steps: u64,
    /// Loss probability of every channel without an override.
    pub loss: f64,
    pub loss_a_to_b: Option<f64>,
    pub loss_b_to_a: Option<f64>,
    /// After this many consecutive losses on a channel whose loss
    /// probability is below 1, the next delivery attempt succeeds.
    pub fairness_window: u32,
    pub mode: Mode,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_steps: 1000,
            loss: 0.1,
            loss_a_to_b: None,
            loss_b_to_a: None,
            fairness_window: 10,
            mode: Mode::Checked,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("loss probability {0} is outside [0, 1]")]
    LossOutOfRange(f64),
    #[error("fairness window must be at least 1")]
    ZeroFairnessWindow,
    #[error("at least one client is required")]
    NoClients,
    #[error("mutant `{mutant}` does not apply to model `{model}`")]
    MutantModelMismatch { mutant: String, model: String },
    #[error("{0}")]
    Setup(String),
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for p in [Some(self.loss), self.loss_a_to_b, self.loss_b_to_a].into_iter().flatten() {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::LossOutOfRange(p));
            }
        }
        if self.fairness_window == 0 {
            return Err(ConfigError::ZeroFairnessWindow);
        }
        Ok(())
    }

    pub fn loss_for(&self, channel: &str) -> f64 {
        match channel {
            "a_to_b" => self.loss_a_to_b.unwrap_or(self.loss),
            "b_to_a" => self.loss_b_to_a.unwrap_or(self.loss),
            _ => self.loss,
        }
    }
}

/// What to run besides the scheduler knobs.
#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Liveness properties to track; `None` selects the model's defaults.
    pub liveness: Option<Vec<String>>,
    pub mutant: Option<Mutant>,
    pub policy: Policy,
    /// Memcached client count.
    pub clients: u64,
    /// Memcached only: one OS thread per handler and per client.
    pub threaded: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { liveness: None, mutant: None, policy: Policy::FailFast, clients: 4, threaded: false }
    }
}

impl RunOptions {
    pub fn with_mutant(mutant: Mutant) -> Self {
        Self { mutant: Some(mutant), ..Self::default() }
    }
}

/// The seeded random stream plus per-channel loss streaks.
pub(crate) struct Scheduler {
    pub(crate) rng: ChaCha8Rng,
    pub(crate) cfg: SchedulerConfig,
    streaks: BTreeMap<String, u32>,
}

impl Scheduler {
    pub(crate) fn new(cfg: &SchedulerConfig) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(cfg.seed), cfg: cfg.clone(), streaks: BTreeMap::new() }
    }

    pub(crate) fn coin(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    pub(crate) fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    /// Whether the next delivery attempt on `channel` loses the message.
    /// A streak of `fairness_window` losses forces a delivery unless the
    /// loss probability is 1.
    pub(crate) fn roll_loss(&mut self, channel: &str, streak_key: &str) -> bool {
        let p = self.cfg.loss_for(channel);
        let x: f64 = self.rng.gen();
        let streak = self.streaks.entry(streak_key.to_string()).or_default();
        let lost = x < p && (p >= 1.0 || *streak < self.cfg.fairness_window);
        if lost {
            *streak += 1;
        } else {
            *streak = 0;
        }
        lost
    }
}

/// Everything a run produced.
pub struct RunOutcome<M: Model> {
    pub model: M,
    pub config: SchedulerConfig,
    pub steps_executed: u64,
    pub trace: Trace<M>,
    pub aux: Vec<AuxRecord>,
    pub violations: Vec<Violation>,
    /// `None` in erased mode.
    pub liveness: Option<LivenessReport>,
    pub observable: ObservableLog,
    /// Model-specific counters (e.g. discharged obligations per node).
    pub stats: serde_json::Map<String, Value>,
}

impl<M: Model> RunOutcome<M> {
    /// Zero violations and no violated obligations.
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.liveness.as_ref().is_none_or(|l| l.violated.is_empty())
    }

    pub fn violation_kinds(&self) -> Vec<&'static str> {
        self.violations.iter().map(Violation::kind).collect()
    }

    pub fn stat(&self, key: &str) -> u64 {
        self.stats.get(key).and_then(Value::as_u64).unwrap_or(0)
    }

    pub fn report(&self, trace_path: Option<&str>) -> RunReport {
        RunReport {
            model: self.model.name().to_string(),
            config: self.config.clone(),
            steps_executed: self.steps_executed,
            sections: self.trace.len() as u64,
            violations: self.violations.iter().map(Violation::record).collect(),
            liveness_report: self.liveness.clone(),
            stats: self.stats.clone(),
            trace_path: trace_path.map(str::to_string),
            passed: self.passed(),
        }
    }
}

/// The serialized run report.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub model: String,
    pub config: SchedulerConfig,
    pub steps_executed: u64,
    pub sections: u64,
    pub violations: Vec<ViolationRecord>,
    pub liveness_report: Option<LivenessReport>,
    pub stats: serde_json::Map<String, Value>,
    pub trace_path: Option<String>,
    pub passed: bool,
}
