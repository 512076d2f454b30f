//! Closed-loop runs of the learned policy, with and without online
//! adaptation, plus the clairvoyant reference.
//!
//! Epoch k always runs at the configuration decided after epoch k-1 (the
//! minimum configuration for the first epoch). The decision recorded for
//! epoch k is computed from epoch k's own counters and is what accuracy is
//! scored on.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::governors::record;
use crate::metrics::DecisionRecord;
use crate::models::Models;
use crate::oracle::{online_oracle, LabelSource, OracleLabel};
use crate::policy::{retrain_online, PolicyBundle, TrainingBuffer};
use crate::workload::Plant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineSettings {
    pub budget: usize,
    pub beta: f64,
    pub buffer_capacity: usize,
}

impl Default for OnlineSettings {
    fn default() -> Self {
        OnlineSettings { budget: crate::oracle::DEFAULT_BUDGET, beta: 1.0, buffer_capacity: 100 }
    }
}

#[derive(Debug, Clone)]
pub struct OnlineRun {
    pub log: Vec<DecisionRecord>,
    pub online_labels: Vec<OracleLabel>,
    pub disagreements: usize,
    pub retrains: usize,
    /// Training passes used by each retrain, in order.
    pub retrain_passes: Vec<usize>,
    pub bundle: PolicyBundle,
    pub models: Models,
}

/// Policy inference, RLS model update, budgeted search for a label, and
/// buffered retraining on disagreement.
pub fn run_online_il(
    plant: &dyn Plant,
    bundle: PolicyBundle,
    models: Models,
    settings: &OnlineSettings,
) -> Result<OnlineRun> {
    let space = bundle.space.clone();
    let mut run = OnlineRun {
        log: Vec::with_capacity(plant.n_epochs()),
        online_labels: Vec::with_capacity(plant.n_epochs()),
        disagreements: 0,
        retrains: 0,
        retrain_passes: Vec::new(),
        bundle,
        models,
    };
    let mut buffer = TrainingBuffer::new(settings.buffer_capacity);
    let mut applied = space.min_config();
    for k in 0..plant.n_epochs() {
        let obs = plant.execute(k, &applied)?;
        let updates = usize::from(run.models.update(&obs).is_ok());
        let z = run.bundle.featurize(&obs.counters, &applied)?;
        let decision = run.bundle.predict_from(&z);
        let s = online_oracle(&space, &decision, &obs.counters, &applied, &run.models, settings.budget, settings.beta)?;
        run.online_labels.push(OracleLabel {
            epoch_id: k,
            config: s.best.config,
            source: LabelSource::OnlineSearch,
            cost: s.best.cost,
        });
        let mut rec = record(plant, k, applied, decision, obs.power, obs.exec_time, s.evaluations, updates);
        if decision != s.best.config {
            run.disagreements += 1;
            buffer.entries.push((z, space.level_indices(&s.best.config)?));
            if buffer.is_full() {
                let r = retrain_online(&run.bundle, &mut buffer);
                run.bundle = r.bundle;
                run.retrain_passes.push(r.passes);
                run.retrains += 1;
                rec.retrained = true;
            }
        }
        run.log.push(rec);
        applied = decision;
    }
    Ok(run)
}

/// The offline policy without any adaptation.
pub fn run_static_policy(plant: &dyn Plant, bundle: &PolicyBundle) -> Result<Vec<DecisionRecord>> {
    let mut log = Vec::with_capacity(plant.n_epochs());
    let mut applied = bundle.space.min_config();
    for k in 0..plant.n_epochs() {
        let obs = plant.execute(k, &applied)?;
        let decision = bundle.predict(&obs.counters, &applied)?;
        log.push(record(plant, k, applied, decision, obs.power, obs.exec_time, 0, 0));
        applied = decision;
    }
    Ok(log)
}

/// Runs every epoch at its golden label (no lag).
pub fn run_oracle(plant: &dyn Plant, labels: &[OracleLabel]) -> Result<Vec<DecisionRecord>> {
    labels
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let o = plant.execute(k, &l.config)?;
            Ok(record(plant, k, l.config, l.config, o.power, o.exec_time, 0, 0))
        })
        .collect()
}
