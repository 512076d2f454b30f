use serde::{Deserialize, Serialize};

use crate::config_space::{ConfigSpace, Configuration};
use crate::error::{Error, Result};
use crate::models::{FeatureBuilder, Normalizer};
use crate::oracle::OracleLabel;
use crate::policy::{raw_features, PolicyBundle, TrainConfig};
use crate::workload::Plant;

/// Raw features with the four oracle level indices.
pub type Sample = (Vec<f64>, [usize; 4]);

/// Supervised training of all heads on raw samples. Normalization statistics
/// are computed from the dataset and frozen into the bundle.
pub fn train_offline(dataset: &[Sample], space: &ConfigSpace, fb: &FeatureBuilder, cfg: &TrainConfig) -> Result<PolicyBundle> {
    if dataset.is_empty() {
        return Err(Error::domain("empty training dataset"));
    }
    let rows: Vec<Vec<f64>> = dataset.iter().map(|(x, _)| x.clone()).collect();
    let norm = Normalizer::fit(&rows);
    let mut bundle = PolicyBundle::with_norm(space.clone(), fb.clone(), norm, cfg.clone());
    let samples: Vec<(Vec<f64>, [usize; 4])> = dataset
        .iter()
        .map(|(x, y)| {
            let mut z = bundle.norm.apply(x);
            z.pop();
            (z, *y)
        })
        .collect();
    bundle.fit_heads(&samples, cfg.epochs, cfg.batch, 0x0ff1);
    Ok(bundle)
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub samples: Vec<Sample>,
    /// Configuration each epoch actually ran at.
    pub applied: Vec<Configuration>,
    /// The policy's decision for each epoch.
    pub decisions: Vec<Configuration>,
}

/// Runs the oracle's own decisions: epoch k executes at the label of epoch
/// k-1 (the minimum configuration for the first epoch), and the sample pairs
/// those counters with the label of epoch k.
pub fn expert_rollout(plant: &dyn Plant, labels: &[OracleLabel], space: &ConfigSpace, fb: &FeatureBuilder) -> Result<Rollout> {
    rollout(plant, labels, space, fb, |_, _, k| Ok(labels[k].config))
}

/// Closed-loop rollout of a learned policy, labelled by the oracle.
pub fn policy_rollout(plant: &dyn Plant, labels: &[OracleLabel], bundle: &PolicyBundle) -> Result<Rollout> {
    rollout(plant, labels, &bundle.space, &bundle.features, |h, at, _| bundle.predict(h, at))
}

fn rollout<F>(plant: &dyn Plant, labels: &[OracleLabel], space: &ConfigSpace, fb: &FeatureBuilder, mut decide: F) -> Result<Rollout>
where
    F: FnMut(&crate::workload::CounterVector, &Configuration, usize) -> Result<Configuration>,
{
    if labels.len() != plant.n_epochs() {
        return Err(Error::domain("labels do not cover the workload"));
    }
    let mut out = Rollout { samples: Vec::new(), applied: Vec::new(), decisions: Vec::new() };
    let mut applied = space.min_config();
    for (k, label) in labels.iter().enumerate() {
        let obs = plant.execute(k, &applied)?;
        out.samples.push((raw_features(&obs.counters, &applied, fb), space.level_indices(&label.config)?));
        let decision = decide(&obs.counters, &applied, k)?;
        out.applied.push(applied);
        out.decisions.push(decision);
        applied = decision;
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OfflineTraining {
    pub bundle: PolicyBundle,
    pub dataset_sizes: Vec<usize>,
}

/// Exact imitation on expert rollouts, then `cfg.aggregation_rounds` rounds
/// of rolling out the learned policy, labelling the visited states with the
/// oracle and retraining on the union.
pub fn train_offline_with_aggregation(
    plants: &[&dyn Plant],
    labels: &[Vec<OracleLabel>],
    space: &ConfigSpace,
    fb: &FeatureBuilder,
    cfg: &TrainConfig,
) -> Result<OfflineTraining> {
    if plants.len() != labels.len() {
        return Err(Error::domain("one label list per training workload is required"));
    }
    let mut dataset: Vec<Sample> = Vec::new();
    for (p, l) in plants.iter().zip(labels) {
        dataset.extend(expert_rollout(*p, l, space, fb)?.samples);
    }
    let mut sizes = vec![dataset.len()];
    let mut bundle = train_offline(&dataset, space, fb, cfg)?;
    for _ in 0..cfg.aggregation_rounds {
        for (p, l) in plants.iter().zip(labels) {
            dataset.extend(policy_rollout(*p, l, &bundle)?.samples);
        }
        sizes.push(dataset.len());
        bundle = train_offline(&dataset, space, fb, cfg)?;
    }
    Ok(OfflineTraining { bundle, dataset_sizes: sizes })
}
