//! Fixed governors and the models-only local-search controller.

use crate::config_space::{ConfigSpace, Configuration};
use crate::error::Result;
use crate::metrics::DecisionRecord;
use crate::models::Models;
use crate::oracle::online_oracle;
use crate::workload::Plant;

/// Lowest level of every knob.
pub fn powersave(space: &ConfigSpace) -> Configuration {
    space.min_config()
}

/// Highest level of every knob.
pub fn performance(space: &ConfigSpace) -> Configuration {
    space.max_config()
}

/// Runs a constant configuration over every epoch.
pub fn run_fixed(plant: &dyn Plant, config: Configuration) -> Result<Vec<DecisionRecord>> {
    (0..plant.n_epochs())
        .map(|k| {
            let o = plant.execute(k, &config)?;
            Ok(record(plant, k, config, config, o.power, o.exec_time, 0, 0))
        })
        .collect()
}

/// Per epoch: update the models from the epoch's own observation, then
/// search from the previous epoch's choice (the minimum configuration at the
/// start) and apply the result to the next epoch. No learned policy.
pub fn models_only_control(
    plant: &dyn Plant,
    models: &mut Models,
    space: &ConfigSpace,
    budget: usize,
    beta: f64,
) -> Result<Vec<DecisionRecord>> {
    let mut log = Vec::with_capacity(plant.n_epochs());
    let mut applied = powersave(space);
    for k in 0..plant.n_epochs() {
        let obs = plant.execute(k, &applied)?;
        let updates = usize::from(models.update(&obs).is_ok());
        let s = online_oracle(space, &applied, &obs.counters, &applied, models, budget, beta)?;
        log.push(record(plant, k, applied, s.best.config, obs.power, obs.exec_time, s.evaluations, updates));
        applied = s.best.config;
    }
    Ok(log)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn record(
    plant: &dyn Plant,
    k: usize,
    applied: Configuration,
    decision: Configuration,
    power: f64,
    time: f64,
    evals: usize,
    updates: usize,
) -> DecisionRecord {
    let (w, local) = plant.locate(k);
    DecisionRecord {
        epoch_id: k,
        workload: w.to_string(),
        workload_epoch: local,
        applied,
        decision,
        power,
        time,
        oracle_evaluations: evals,
        model_updates: updates,
        retrained: false,
    }
}
