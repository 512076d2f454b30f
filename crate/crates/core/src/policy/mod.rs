//! Imitation-learning policy: four independent classifier heads, one per
//! knob, over normalized counter features.

mod train;

pub use train::{
    expert_rollout, policy_rollout, train_offline, train_offline_with_aggregation, OfflineTraining, Rollout, Sample,
};

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config_space::{ConfigSpace, Configuration, Knob};
use crate::error::{Error, Result};
use crate::models::{FeatureBuilder, Normalizer};
use crate::nn::{self, Adam, Mlp};
use crate::rng::mix;
use crate::workload::CounterVector;

pub const CHECKPOINT_VERSION: u32 = 1;

pub const FEATURE_NAMES: [&str; 8] = [
    "ipc",
    "l2_mpki",
    "branch_mpki",
    "dmem_per_inst",
    "noncache_pki",
    "parallel_share",
    "instructions",
    "cycles",
];

/// Raw (unnormalized) features of counters taken at `observed_at`. Only
/// quantities that do not move with the configuration the epoch ran at are
/// used: rates per instruction, IPC, and the parallel share recovered from
/// utilizations. Raw utilizations and power are left out so the policy's
/// input does not shift with its own previous decision.
pub fn raw_features(h: &CounterVector, observed_at: &Configuration, fb: &FeatureBuilder) -> Vec<f64> {
    let inst = h.instructions_retired.max(1.0);
    vec![
        h.instructions_retired / h.cpu_cycles.max(1.0),
        1e3 * h.l2_misses / inst,
        1e3 * h.branch_mispredictions / inst,
        h.data_memory_accesses / inst,
        1e3 * h.noncache_mem_requests / inst,
        h.parallel_share(observed_at, fb.little_ratio),
        h.instructions_retired,
        h.cpu_cycles,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch: usize,
    pub epochs: usize,
    pub online_batch: usize,
    pub online_epochs: usize,
    /// Online retraining repeats its epochs/batch pass until every head
    /// reproduces at least this share of the buffer, or `online_max_passes`.
    pub online_fit_target: f64,
    pub online_max_passes: usize,
    pub aggregation_rounds: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![20, 20],
            learning_rate: 1e-3,
            batch: 150,
            epochs: 500,
            online_batch: 20,
            online_epochs: 20,
            online_fit_target: 1.0,
            online_max_passes: 50,
            aggregation_rounds: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyBundle {
    pub space: ConfigSpace,
    pub features: FeatureBuilder,
    pub norm: Normalizer,
    pub heads: Vec<Mlp>,
    pub config: TrainConfig,
    /// Number of online retrains applied so far.
    pub generation: u64,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    bundle: PolicyBundle,
}

impl PolicyBundle {
    /// Randomly initialized heads with pass-through normalization.
    pub fn random(space: ConfigSpace, features: FeatureBuilder, config: TrainConfig) -> Self {
        let norm = Normalizer::frozen_identity(FEATURE_NAMES.len());
        Self::with_norm(space, features, norm, config)
    }

    pub(crate) fn with_norm(space: ConfigSpace, features: FeatureBuilder, norm: Normalizer, config: TrainConfig) -> Self {
        let heads = Knob::ALL
            .iter()
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, 0x4ead + k.position() as u64));
                let mut sizes = vec![FEATURE_NAMES.len()];
                sizes.extend(&config.hidden);
                sizes.push(space.level_count(*k));
                Mlp::new(&sizes, &mut rng)
            })
            .collect();
        PolicyBundle { space, features, norm, heads, config, generation: 0 }
    }

    /// Normalized feature vector (without the model bias term).
    pub fn featurize(&self, h: &CounterVector, observed_at: &Configuration) -> Result<Vec<f64>> {
        if !h.is_finite() {
            return Err(Error::numeric("non-finite counters"));
        }
        let mut z = self.norm.apply(&raw_features(h, observed_at, &self.features));
        z.pop();
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite feature"));
        }
        Ok(z)
    }

    pub fn probabilities(&self, z: &[f64]) -> Vec<Vec<f64>> {
        self.heads.iter().map(|h| nn::softmax(&h.forward(z))).collect()
    }

    pub fn predict_levels_from(&self, z: &[f64]) -> [usize; 4] {
        let mut out = [0; 4];
        for (o, h) in out.iter_mut().zip(&self.heads) {
            *o = nn::argmax(&nn::softmax(&h.forward(z)));
        }
        out
    }

    pub fn predict_from(&self, z: &[f64]) -> Configuration {
        self.space.from_level_indices(self.predict_levels_from(z))
    }

    pub fn predict(&self, h: &CounterVector, observed_at: &Configuration) -> Result<Configuration> {
        Ok(self.predict_from(&self.featurize(h, observed_at)?))
    }

    /// Trains every head on normalized samples, in parallel, each head with
    /// its own optimizer and shuffling stream.
    pub(crate) fn fit_heads(&mut self, samples: &[(Vec<f64>, [usize; 4])], epochs: usize, batch: usize, stream: u64) {
        let lr = self.config.learning_rate;
        let seed = self.config.seed;
        self.heads.par_iter_mut().enumerate().for_each(|(k, head)| {
            let data: Vec<(&[f64], usize)> = samples.iter().map(|(x, y)| (x.as_slice(), y[k])).collect();
            let mut opt = Adam::new(lr, head.n_params());
            let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(seed, stream), k as u64));
            nn::train_classifier(head, &mut opt, &data, epochs, batch, &mut rng);
        });
    }

    /// Like `fit_heads`, but a head only trains while it reproduces less
    /// than `target` of the samples, one epochs/batch pass at a time, up to
    /// `max_passes`. Returns the largest pass count over heads.
    pub(crate) fn fit_heads_until(
        &mut self,
        samples: &[(Vec<f64>, [usize; 4])],
        epochs: usize,
        batch: usize,
        stream: u64,
        target: f64,
        max_passes: usize,
    ) -> usize {
        let lr = self.config.learning_rate;
        let seed = self.config.seed;
        let passes: Vec<usize> = self
            .heads
            .par_iter_mut()
            .enumerate()
            .map(|(k, head)| {
                let data: Vec<(&[f64], usize)> = samples.iter().map(|(x, y)| (x.as_slice(), y[k])).collect();
                let mut opt = Adam::new(lr, head.n_params());
                let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(seed, stream), k as u64));
                let fits = |h: &nn::Mlp| {
                    let hits = data.iter().filter(|(x, y)| nn::argmax(&h.forward(x)) == *y).count();
                    hits as f64 >= target * data.len() as f64
                };
                let mut pass = 0;
                while pass < max_passes && !fits(head) {
                    nn::train_classifier(head, &mut opt, &data, epochs, batch, &mut rng);
                    pass += 1;
                }
                pass
            })
            .collect();
        passes.into_iter().max().unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Checkpoint { version: CHECKPOINT_VERSION, bundle: self.clone() }).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Format(format!("policy checkpoint: {e}")))?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported policy checkpoint version {}", c.version)));
        }
        Ok(c.bundle)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Fixed-capacity store of (normalized features, oracle level indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingBuffer {
    pub capacity: usize,
    pub entries: Vec<(Vec<f64>, [usize; 4])>,
}

impl TrainingBuffer {
    pub fn new(capacity: usize) -> Self {
        TrainingBuffer { capacity, entries: Vec::with_capacity(capacity) }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }
}

/// Appends the oracle's label when the policy disagrees in any knob.
/// Returns true when the buffer is now full and a retrain is due.
pub fn observe_and_maybe_buffer(
    bundle: &PolicyBundle,
    buffer: &mut TrainingBuffer,
    h: &CounterVector,
    observed_at: &Configuration,
    oracle: &Configuration,
) -> Result<bool> {
    let z = bundle.featurize(h, observed_at)?;
    let target = bundle.space.level_indices(oracle)?;
    if bundle.predict_levels_from(&z) != target {
        if buffer.is_full() {
            return Err(Error::domain("buffer is full; retrain before observing more"));
        }
        buffer.entries.push((z, target));
    }
    Ok(buffer.is_full())
}

/// Retrains a copy of `bundle` on the buffer contents only and clears the
/// buffer. The caller swaps the returned bundle in as a whole.
pub fn retrain_online(bundle: &PolicyBundle, buffer: &mut TrainingBuffer) -> Retrained {
    let mut next = bundle.clone();
    next.generation += 1;
    let stream = 0x0711_0000 + next.generation;
    let c = &bundle.config;
    let passes = next.fit_heads_until(
        &buffer.entries,
        c.online_epochs,
        c.online_batch,
        stream,
        c.online_fit_target,
        c.online_max_passes,
    );
    buffer.entries.clear();
    Retrained { bundle: next, passes }
}

#[derive(Debug, Clone)]
pub struct Retrained {
    pub bundle: PolicyBundle,
    /// Number of epochs/batch passes the slowest head needed.
    pub passes: usize,
}
