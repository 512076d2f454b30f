//! Supervision labels: exhaustive offline argmin over the plant, and the
//! budgeted greedy neighborhood search over model-estimated cost.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config_space::{ConfigSpace, Configuration};
use crate::error::{Error, Result};
use crate::models::Models;
use crate::workload::{CounterVector, Plant};

pub const DEFAULT_BUDGET: usize = 40;
const MIN_POWER: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    OfflineExhaustive,
    OnlineSearch,
}

impl LabelSource {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelSource::OfflineExhaustive => "offline-exhaustive",
            LabelSource::OnlineSearch => "online-search",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigCost {
    pub config: Configuration,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleLabel {
    pub epoch_id: usize,
    pub config: Configuration,
    pub source: LabelSource,
    pub cost: f64,
}

/// J = P * t^beta.
pub fn cost(power: f64, time: f64, beta: f64) -> f64 {
    power * time.powf(beta)
}

/// Exhaustive argmin of plant cost for one epoch; ties go to the lowest index.
pub fn offline_oracle_epoch(plant: &dyn Plant, epoch: usize, space: &ConfigSpace, beta: f64) -> Result<OracleLabel> {
    let mut best: Option<ConfigCost> = None;
    for c in space.enumerate() {
        let o = plant.execute(epoch, &c)?;
        let j = cost(o.power, o.exec_time, beta);
        if best.is_none_or(|b| j < b.cost) {
            best = Some(ConfigCost { config: c, cost: j });
        }
    }
    let b = best.ok_or_else(|| Error::domain("empty configuration space"))?;
    Ok(OracleLabel { epoch_id: epoch, config: b.config, source: LabelSource::OfflineExhaustive, cost: b.cost })
}

pub fn offline_oracle(plant: &dyn Plant, space: &ConfigSpace, beta: f64) -> Result<Vec<OracleLabel>> {
    (0..plant.n_epochs())
        .into_par_iter()
        .map(|e| offline_oracle_epoch(plant, e, space, beta))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOutcome {
    pub best: ConfigCost,
    pub evaluations: usize,
}

/// Greedy descent from `start`. The whole neighborhood of the current point
/// is evaluated in index order, the search moves to its minimum, and stops
/// once the evaluation count exceeds `budget` or a step does not improve.
pub fn local_search<F>(space: &ConfigSpace, start: &Configuration, budget: usize, mut cost_of: F) -> Result<SearchOutcome>
where
    F: FnMut(&Configuration) -> Result<f64>,
{
    if budget == 0 {
        return Err(Error::domain("search budget must be at least 1"));
    }
    let mut best = ConfigCost { config: *start, cost: cost_of(start)? };
    let mut evaluations = 1;
    let mut current = *start;
    while evaluations <= budget {
        let mut step: Option<ConfigCost> = None;
        for n in space.neighbors(&current)? {
            let j = cost_of(&n)?;
            evaluations += 1;
            if step.is_none_or(|s| j < s.cost) {
                step = Some(ConfigCost { config: n, cost: j });
            }
        }
        match step {
            Some(s) if s.cost < best.cost => {
                best = s;
                current = s.config;
            }
            _ => break,
        }
    }
    Ok(SearchOutcome { best, evaluations })
}

/// Model-estimated cost of running at `target`, using counters observed at
/// `observed_at`.
pub fn estimated_cost(
    models: &Models,
    counters: &CounterVector,
    observed_at: &Configuration,
    target: &Configuration,
    beta: f64,
) -> Result<f64> {
    let (p, t) = models.estimate(counters, observed_at, target)?;
    Ok(cost(p.max(MIN_POWER), t, beta))
}

/// Online oracle seeded at the policy's choice.
pub fn online_oracle(
    space: &ConfigSpace,
    policy_choice: &Configuration,
    counters: &CounterVector,
    observed_at: &Configuration,
    models: &Models,
    budget: usize,
    beta: f64,
) -> Result<SearchOutcome> {
    local_search(space, policy_choice, budget, |c| estimated_cost(models, counters, observed_at, c, beta))
}

pub const LABEL_HEADER: &str = "epoch_id,source,n_big,n_little,f_big,f_little,cost";

pub fn labels_csv(labels: &[OracleLabel]) -> String {
    let mut s = String::from(LABEL_HEADER);
    s.push('\n');
    for l in labels {
        let c = l.config;
        let _ = writeln!(s, "{},{},{},{},{},{},{}", l.epoch_id, l.source.as_str(), c.n_big, c.n_little, c.f_big, c.f_little, l.cost);
    }
    s
}

pub fn write_labels(path: &Path, labels: &[OracleLabel]) -> Result<()> {
    std::fs::write(path, labels_csv(labels)).map_err(|e| Error::io(path, e))
}
