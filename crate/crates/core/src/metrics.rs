//! Per-knob accuracy against the golden reference, convergence detection and
//! energy comparisons between controllers.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config_space::{ConfigSpace, Configuration, Knob};
use crate::error::{Error, Result};
use crate::oracle::OracleLabel;

/// `100 * (1 - |a - b| / (levels - 1))`.
pub fn knob_accuracy(levels: usize, a: usize, b: usize) -> Result<f64> {
    if levels < 2 {
        return Err(Error::domain(format!("accuracy needs at least 2 levels, got {levels}")));
    }
    if a >= levels || b >= levels {
        return Err(Error::domain(format!("level index out of range for {levels} levels")));
    }
    Ok(100.0 * (1.0 - a.abs_diff(b) as f64 / (levels - 1) as f64))
}

/// One row of a controller's decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    /// Position in the evaluated stream.
    pub epoch_id: usize,
    pub workload: String,
    pub workload_epoch: usize,
    /// Configuration the epoch ran at.
    pub applied: Configuration,
    /// The controller's decision for this epoch, scored against the label.
    pub decision: Configuration,
    pub power: f64,
    pub time: f64,
    pub oracle_evaluations: usize,
    pub model_updates: usize,
    pub retrained: bool,
}

impl DecisionRecord {
    pub fn energy(&self) -> f64 {
        self.power * self.time
    }
}

pub const DECISION_HEADER: &str = "epoch_id,workload,workload_epoch,applied,decision,power_w,time_s,energy_j,oracle_evals,model_updates,retrained";

pub fn decisions_csv(log: &[DecisionRecord]) -> String {
    let mut s = String::from(DECISION_HEADER);
    s.push('\n');
    for r in log {
        let _ = writeln!(
            s,
            "{},{},{},\"{}\",\"{}\",{},{},{},{},{},{}",
            r.epoch_id,
            r.workload,
            r.workload_epoch,
            r.applied,
            r.decision,
            r.power,
            r.time,
            r.energy(),
            r.oracle_evaluations,
            r.model_updates,
            u8::from(r.retrained)
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// Mean accuracy per knob, in `Knob::ALL` order.
    pub per_knob_mean: [f64; 4],
    pub series: Vec<[f64; 4]>,
    pub rolling: Vec<[f64; 4]>,
    pub convergence_per_knob: [Option<usize>; 4],
    /// First epoch after which every knob's rolling mean stays above threshold.
    pub convergence_epoch: Option<usize>,
    pub window: usize,
    pub threshold: f64,
}

impl AccuracyReport {
    pub fn mean(&self) -> f64 {
        self.per_knob_mean.iter().sum::<f64>() / 4.0
    }

    pub fn min_knob(&self) -> f64 {
        self.per_knob_mean.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Rolling accuracy of the last full window.
    pub fn final_rolling(&self) -> [f64; 4] {
        self.rolling.last().copied().unwrap_or([0.0; 4])
    }

    /// Rolling accuracy of the window ending at `epoch`.
    pub fn rolling_at(&self, epoch: usize) -> [f64; 4] {
        self.rolling[epoch.min(self.rolling.len() - 1)]
    }
}

pub const DEFAULT_WINDOW: usize = 20;
pub const DEFAULT_THRESHOLD: f64 = 99.0;

/// Scores decisions against labels aligned by position and epoch id.
pub fn run_accuracy(
    decisions: &[(usize, Configuration)],
    labels: &[OracleLabel],
    space: &ConfigSpace,
    window: usize,
    threshold: f64,
) -> Result<AccuracyReport> {
    if decisions.is_empty() {
        return Err(Error::domain("empty decision log"));
    }
    if decisions.len() != labels.len() {
        return Err(Error::domain(format!("{} decisions but {} labels", decisions.len(), labels.len())));
    }
    if window == 0 {
        return Err(Error::domain("window must be positive"));
    }
    let mut series = Vec::with_capacity(decisions.len());
    for ((id, d), l) in decisions.iter().zip(labels) {
        if *id != l.epoch_id {
            return Err(Error::domain(format!("decision epoch {id} is aligned with label epoch {}", l.epoch_id)));
        }
        let a = space.level_indices(d)?;
        let b = space.level_indices(&l.config)?;
        let mut row = [0.0; 4];
        for k in Knob::ALL {
            let i = k.position();
            let n = space.level_count(k);
            row[i] = if n < 2 { 100.0 } else { knob_accuracy(n, a[i], b[i])? };
        }
        series.push(row);
    }
    let n = series.len();
    let mut per_knob_mean = [0.0; 4];
    for row in &series {
        for k in 0..4 {
            per_knob_mean[k] += row[k] / n as f64;
        }
    }
    // Rolling mean of the (up to) `window` epochs ending at each index.
    let mut rolling = Vec::with_capacity(n);
    let mut sums = [0.0; 4];
    for j in 0..n {
        for k in 0..4 {
            sums[k] += series[j][k];
            if j >= window {
                sums[k] -= series[j - window][k];
            }
        }
        let len = (j + 1).min(window) as f64;
        rolling.push(sums.map(|s| s / len));
    }
    let full_from = window.min(n) - 1;
    let mut convergence_per_knob = [None; 4];
    for (k, slot) in convergence_per_knob.iter_mut().enumerate() {
        let mut last_bad: Option<usize> = None;
        for (j, r) in rolling.iter().enumerate().skip(full_from) {
            if r[k] < threshold - 1e-9 {
                last_bad = Some(j);
            }
        }
        *slot = match last_bad {
            None => Some(0),
            Some(j) if j + 1 < n => Some(j + 2 - window.min(n)),
            Some(_) => None,
        };
    }
    let convergence_epoch = convergence_per_knob
        .iter()
        .try_fold(0usize, |acc, c| c.map(|v| acc.max(v)));
    Ok(AccuracyReport { per_knob_mean, series, rolling, convergence_per_knob, convergence_epoch, window, threshold })
}

pub fn accuracy_of_log(log: &[DecisionRecord], labels: &[OracleLabel], space: &ConfigSpace) -> Result<AccuracyReport> {
    let d: Vec<(usize, Configuration)> = log.iter().map(|r| (r.epoch_id, r.decision)).collect();
    run_accuracy(&d, labels, space, DEFAULT_WINDOW, DEFAULT_THRESHOLD)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub controller: String,
    pub energy_j: f64,
    pub time_s: f64,
    pub energy_vs_powersave: Option<f64>,
    pub time_vs_powersave: Option<f64>,
    pub energy_vs_oracle: Option<f64>,
    pub time_vs_oracle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub rows: Vec<EnergyRow>,
}

impl EnergyReport {
    pub fn row(&self, controller: &str) -> Option<&EnergyRow> {
        self.rows.iter().find(|r| r.controller == controller)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("controller,energy_j,time_s,energy_vs_powersave,time_vs_powersave,energy_vs_oracle,time_vs_oracle\n");
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.controller,
                r.energy_j,
                r.time_s,
                f(r.energy_vs_powersave),
                f(r.time_vs_powersave),
                f(r.energy_vs_oracle),
                f(r.time_vs_oracle)
            );
        }
        s
    }
}

/// Total energy and time per controller, with ratios against the
/// "powersave" and "oracle" controllers when present.
pub fn energy_report(runs: &[(String, &[DecisionRecord])]) -> Result<EnergyReport> {
    let reference: Vec<usize> = runs.first().map(|(_, l)| l.iter().map(|r| r.epoch_id).collect()).unwrap_or_default();
    for (name, log) in runs {
        if !log.iter().map(|r| r.epoch_id).eq(reference.iter().copied()) {
            return Err(Error::domain(format!("controller {name} ran a different epoch set")));
        }
    }
    let totals: Vec<(String, f64, f64)> = runs
        .iter()
        .map(|(n, l)| (n.clone(), l.iter().map(DecisionRecord::energy).sum(), l.iter().map(|r| r.time).sum()))
        .collect();
    let find = |name: &str| totals.iter().find(|t| t.0 == name).map(|t| (t.1, t.2));
    let ps = find("powersave");
    let or = find("oracle");
    let rows = totals
        .iter()
        .map(|(n, e, t)| EnergyRow {
            controller: n.clone(),
            energy_j: *e,
            time_s: *t,
            energy_vs_powersave: ps.map(|p| e / p.0),
            time_vs_powersave: ps.map(|p| t / p.1),
            energy_vs_oracle: or.map(|o| e / o.0),
            time_vs_oracle: or.map(|o| t / o.1),
        })
        .collect();
    Ok(EnergyReport { rows })
}
