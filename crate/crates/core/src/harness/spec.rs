//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::TrainConfig;
use crate::rl::RlConfig;
use crate::rng::rng_from;
use crate::workload::{generate_workload, Profile, Workload};

pub const SCHEMA_VERSION: u32 = 1;

pub const CONTROLLERS: [&str; 7] = ["online-il", "rl", "static-offline", "powersave", "performance", "models-only", "oracle"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub name: String,
    pub profile: String,
    pub epochs: usize,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn generate(&self) -> Result<Workload> {
        let mut w = generate_workload(&self.profile, self.epochs, self.seed)?;
        w.name = self.name.clone();
        Ok(w)
    }
}

/// Evaluation stream: `repetitions` rounds over the evaluation workloads,
/// either in `order` or, when `order` is empty, in a fresh seeded shuffle
/// per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSpec {
    #[serde(default)]
    pub order: Vec<String>,
    #[serde(default = "one")]
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "one")]
    pub aggregation_rounds: usize,
}

impl Default for PolicySpec {
    fn default() -> Self {
        PolicySpec {
            hidden: default_hidden(),
            learning_rate: default_lr(),
            batch: default_batch(),
            epochs: default_epochs(),
            aggregation_rounds: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlSpec {
    /// Passes over the training suite before evaluation.
    #[serde(default = "default_pretrain")]
    pub pretrain_passes: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl Default for RlSpec {
    fn default() -> Self {
        RlSpec { pretrain_passes: default_pretrain(), epsilon: default_epsilon() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_capacity")]
    pub buffer_capacity: usize,
    #[serde(default = "default_controllers")]
    pub controllers: Vec<String>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub training: Vec<WorkloadSpec>,
    pub evaluation: Vec<WorkloadSpec>,
    pub sequence: SequenceSpec,
    #[serde(default)]
    pub policy: PolicySpec,
    #[serde(default)]
    pub rl: RlSpec,
}

fn one() -> usize {
    1
}
fn default_hidden() -> Vec<usize> {
    vec![20, 20]
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    150
}
fn default_epochs() -> usize {
    500
}
fn default_pretrain() -> usize {
    3
}
fn default_epsilon() -> f64 {
    RlConfig::default().epsilon
}
fn default_beta() -> f64 {
    1.0
}
fn default_budget() -> usize {
    crate::oracle::DEFAULT_BUDGET
}
fn default_capacity() -> usize {
    100
}
fn default_controllers() -> Vec<String> {
    CONTROLLERS.iter().map(|s| s.to_string()).collect()
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    /// The spec as recorded next to its outputs, without the output path so
    /// that runs written to different directories stay byte-identical.
    pub fn echo(&self) -> String {
        ExperimentSpec { out_dir: None, ..self.clone() }.to_toml()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Spec(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.controllers.is_empty() {
            return bad("at least one controller is required".into());
        }
        for c in &self.controllers {
            if !CONTROLLERS.contains(&c.as_str()) {
                return bad(format!("unknown controller {c:?} (expected one of {})", CONTROLLERS.join(", ")));
            }
        }
        let mut sorted = self.controllers.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.controllers.len() {
            return bad("controllers must not repeat".into());
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad(format!("beta must be finite and non-negative, got {}", self.beta));
        }
        if self.budget == 0 || self.buffer_capacity == 0 {
            return bad("budget and buffer_capacity must be positive".into());
        }
        if self.training.is_empty() || self.evaluation.is_empty() {
            return bad("training and evaluation suites must be non-empty".into());
        }
        let mut names: Vec<&str> = Vec::new();
        for w in self.training.iter().chain(&self.evaluation) {
            if w.epochs == 0 {
                return bad(format!("workload {} has no epochs", w.name));
            }
            if w.name.is_empty() || w.name.contains(['/', '\\', ',', '"']) {
                return bad(format!("workload name {:?} is not a plain file stem", w.name));
            }
            Profile::named(&w.profile).map_err(|e| Error::Spec(e.to_string()))?;
            if names.contains(&w.name.as_str()) {
                return bad(format!("duplicate workload name {}", w.name));
            }
            names.push(&w.name);
        }
        if self.sequence.repetitions == 0 {
            return bad("sequence.repetitions must be positive".into());
        }
        for n in &self.sequence.order {
            if !self.evaluation.iter().any(|w| &w.name == n) {
                return bad(format!("sequence names {n:?}, which is not an evaluation workload"));
            }
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            hidden: self.policy.hidden.clone(),
            learning_rate: self.policy.learning_rate,
            batch: self.policy.batch,
            epochs: self.policy.epochs,
            aggregation_rounds: self.policy.aggregation_rounds,
            seed: crate::rng::mix(self.seed, 1),
            ..TrainConfig::default()
        }
    }

    pub fn rl_config(&self) -> RlConfig {
        RlConfig { beta: self.beta, epsilon: self.rl.epsilon, hidden: self.policy.hidden.clone(), ..RlConfig::default() }
    }

    /// Evaluation workload names in stream order.
    pub fn materialize_sequence(&self) -> Vec<String> {
        let mut rng = rng_from(self.seed, 4);
        let mut out = Vec::new();
        for _ in 0..self.sequence.repetitions {
            if self.sequence.order.is_empty() {
                let mut round: Vec<String> = self.evaluation.iter().map(|w| w.name.clone()).collect();
                round.shuffle(&mut rng);
                out.extend(round);
            } else {
                out.extend(self.sequence.order.iter().cloned());
            }
        }
        out
    }
}
