//! Experiment driver: characterization, offline training, closed-loop
//! simulation of every controller, and report consolidation.
//!
//! Directory layout under the output root:
//!
//! ```text
//! traces/<workload>.csv          characterization sweeps
//! offline/                       labels, model/policy/DQN checkpoints, training report
//! run/                           decision logs, accuracy and energy reports, plot data
//! summary.json                   consolidated report
//! ```

mod spec;

pub use spec::{ExperimentSpec, PolicySpec, RlSpec, SequenceSpec, WorkloadSpec, CONTROLLERS, SCHEMA_VERSION};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config_space::{ConfigSpace, Knob};
use crate::error::{Error, Result};
use crate::governors::{models_only_control, performance, powersave, run_fixed};
use crate::metrics::{accuracy_of_log, decisions_csv, energy_report, AccuracyReport, DecisionRecord, EnergyReport};
use crate::models::{fit_offline, FeatureBuilder, Models, Normalizer};
use crate::oracle::{labels_csv, offline_oracle, write_labels, OracleLabel};
use crate::policy::{expert_rollout, train_offline_with_aggregation, PolicyBundle};
use crate::rl::{rl_log_csv, run_rl_control, QLearner, RlRun};
use crate::rng::{mix, rng_from};
use crate::sim::{run_online_il, run_oracle, run_static_policy, OnlineRun, OnlineSettings};
use crate::workload::{load_trace, save_trace, Plant, Sequence, TraceWorkload, Workload};

/// Paths of every artifact, relative to an output root.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }
    pub fn trace(&self, workload: &str) -> PathBuf {
        self.root.join("traces").join(format!("{workload}.csv"))
    }
    pub fn offline(&self) -> PathBuf {
        self.root.join("offline")
    }
    pub fn offline_labels(&self, workload: &str) -> PathBuf {
        self.offline().join("labels").join(format!("{workload}.csv"))
    }
    pub fn policy(&self) -> PathBuf {
        self.offline().join("policy.json")
    }
    pub fn models(&self) -> PathBuf {
        self.offline().join("models.json")
    }
    pub fn dqn(&self) -> PathBuf {
        self.offline().join("dqn.json")
    }
    pub fn train_report(&self) -> PathBuf {
        self.offline().join("train_report.json")
    }
    pub fn run(&self) -> PathBuf {
        self.root.join("run")
    }
    pub fn run_file(&self, name: &str) -> PathBuf {
        self.run().join(name)
    }
    pub fn log(&self, controller: &str) -> PathBuf {
        self.run().join("logs").join(format!("{controller}.csv"))
    }
    pub fn accuracy(&self, controller: &str) -> PathBuf {
        self.run().join("accuracy").join(format!("{controller}.json"))
    }
    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.json")
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn generate(specs: &[WorkloadSpec]) -> Result<Vec<Workload>> {
    specs.iter().map(WorkloadSpec::generate).collect()
}

/// Writes full-space sweeps of the training workloads, and of the
/// evaluation workloads only when `include_evaluation` is set.
pub fn cmd_characterize(spec: &ExperimentSpec, out: &Path, include_evaluation: bool) -> Result<Vec<PathBuf>> {
    let layout = Layout::new(out);
    let space = ConfigSpace::default();
    let configs = space.enumerate();
    let mut targets: Vec<&WorkloadSpec> = spec.training.iter().collect();
    if include_evaluation {
        targets.extend(&spec.evaluation);
    }
    targets
        .par_iter()
        .map(|w| {
            let path = layout.trace(&w.name);
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            save_trace(&w.generate()?, &configs, &path)?;
            Ok(path)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadAccuracy {
    pub workload: String,
    pub per_knob: [f64; 4],
}

/// Model errors in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitQuality {
    /// Mean relative error at the configuration the counters came from.
    pub power_error_pct: f64,
    pub time_error_pct: f64,
    /// Mean relative error when predicting other configurations.
    pub cross_config_power_error_pct: f64,
    pub cross_config_time_error_pct: f64,
    pub ridge_used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub offline: bool,
    pub seed: u64,
    pub training_accuracy: Vec<WorkloadAccuracy>,
    pub min_knob_accuracy: [f64; 4],
    pub fit: Option<FitQuality>,
    pub dataset_sizes: Vec<usize>,
}

/// Offline checkpoints.
#[derive(Debug, Clone)]
pub struct Checkpoints {
    pub policy: PolicyBundle,
    pub models: Models,
    pub dqn: QLearner,
}

impl Checkpoints {
    /// Random policy and DQN, zero models: the run without an offline phase.
    pub fn untrained(spec: &ExperimentSpec) -> Result<Self> {
        let space = ConfigSpace::default();
        let fb = FeatureBuilder::default();
        let dim = crate::policy::FEATURE_NAMES.len();
        Ok(Checkpoints {
            policy: PolicyBundle::random(space.clone(), fb.clone(), spec.train_config()),
            models: Models::untrained(fb.clone()),
            dqn: QLearner::network(spec.rl_config(), space.len(), Normalizer::frozen_identity(dim), fb, mix(spec.seed, 2))?,
        })
    }

    pub fn load(layout: &Layout) -> Result<Self> {
        Ok(Checkpoints {
            policy: PolicyBundle::load(&layout.policy())?,
            models: Models::from_json(&read_text(&layout.models())?)?,
            dqn: read_json(&layout.dqn())?,
        })
    }

    pub fn save(&self, layout: &Layout) -> Result<()> {
        std::fs::create_dir_all(layout.offline()).map_err(|e| Error::io(layout.offline(), e))?;
        self.policy.save(&layout.policy())?;
        write_file(&layout.models(), &self.models.to_json())?;
        write_json(&layout.dqn(), &self.dqn)
    }
}

pub fn load_training_traces(spec: &ExperimentSpec, layout: &Layout) -> Result<Vec<TraceWorkload>> {
    spec.training
        .par_iter()
        .map(|w| {
            let mut t = load_trace(&layout.trace(&w.name))?;
            t.name = w.name.clone();
            Ok(t)
        })
        .collect()
}

/// Per-knob accuracy of a policy run without adaptation on each workload.
pub fn static_accuracy(plants: &[&dyn Plant], labels: &[Vec<OracleLabel>], bundle: &PolicyBundle) -> Result<Vec<WorkloadAccuracy>> {
    plants
        .par_iter()
        .zip(labels)
        .map(|(p, l)| {
            let acc = accuracy_of_log(&run_static_policy(*p, bundle)?, l, &bundle.space)?;
            Ok(WorkloadAccuracy { workload: p.name().to_string(), per_knob: acc.per_knob_mean })
        })
        .collect()
}

fn min_per_knob(rows: &[WorkloadAccuracy]) -> [f64; 4] {
    rows.iter().fold([100.0; 4], |m, r| std::array::from_fn(|i| m[i].min(r.per_knob[i])))
}

/// Observed-configuration and cross-configuration model errors over
/// characterization traces. Cross-configuration error predicts every
/// configuration of every tenth epoch from one source configuration.
pub fn fit_quality(models: &Models, traces: &[TraceWorkload], ridge_used: bool) -> Result<FitQuality> {
    let space = ConfigSpace::default();
    let configs = space.enumerate();
    let mut own = (0.0, 0.0, 0usize);
    let mut cross = (0.0, 0.0, 0usize);
    for (w, t) in traces.iter().enumerate() {
        for o in t.observations() {
            let (p, time) = models.estimate(&o.counters, &o.config, &o.config)?;
            own.0 += (p / o.power - 1.0).abs();
            own.1 += (time / o.exec_time - 1.0).abs();
            own.2 += 1;
        }
        for k in (0..t.n_epochs()).step_by(10) {
            let from = configs[(k * 97 + w * 31) % configs.len()];
            let seen = t.execute(k, &from)?;
            for c in &configs {
                let truth = t.execute(k, c)?;
                let (p, time) = models.estimate(&seen.counters, &from, c)?;
                cross.0 += (p / truth.power - 1.0).abs();
                cross.1 += (time / truth.exec_time - 1.0).abs();
                cross.2 += 1;
            }
        }
    }
    let pct = |s: f64, n: usize| 100.0 * s / n.max(1) as f64;
    Ok(FitQuality {
        power_error_pct: pct(own.0, own.2),
        time_error_pct: pct(own.1, own.2),
        cross_config_power_error_pct: pct(cross.0, cross.2),
        cross_config_time_error_pct: pct(cross.1, cross.2),
        ridge_used,
    })
}

/// Labels the training traces, fits the models, trains the policy with
/// aggregation and pretrains the DQN on the same workloads. With
/// `no_offline`, writes randomly initialized checkpoints instead.
pub fn cmd_train_offline(spec: &ExperimentSpec, out: &Path, no_offline: bool) -> Result<TrainReport> {
    let layout = Layout::new(out);
    write_file(&layout.offline().join("spec.toml"), &spec.echo())?;
    if no_offline {
        Checkpoints::untrained(spec)?.save(&layout)?;
        let report = TrainReport {
            offline: false,
            seed: spec.seed,
            training_accuracy: Vec::new(),
            min_knob_accuracy: [0.0; 4],
            fit: None,
            dataset_sizes: Vec::new(),
        };
        write_json(&layout.train_report(), &report)?;
        return Ok(report);
    }
    let space = ConfigSpace::default();
    let fb = FeatureBuilder::default();
    let traces = load_training_traces(spec, &layout)?;
    let plants: Vec<&dyn Plant> = traces.iter().map(|t| t as &dyn Plant).collect();
    let labels: Vec<Vec<OracleLabel>> =
        plants.par_iter().map(|p| offline_oracle(*p, &space, spec.beta)).collect::<Result<_>>()?;
    for (w, l) in spec.training.iter().zip(&labels) {
        let path = layout.offline_labels(&w.name);
        write_file(&path, &labels_csv(l))?;
    }

    let observations: Vec<_> = traces.iter().flat_map(|t| t.observations().copied()).collect();
    let fit = fit_offline(&observations, &fb)?;
    let quality = fit_quality(&fit.models, &traces, fit.ridge_used)?;

    let training = train_offline_with_aggregation(&plants, &labels, &space, &fb, &spec.train_config())?;
    let accuracy = static_accuracy(&plants, &labels, &training.bundle)?;

    let rows: Vec<Vec<f64>> = plants
        .iter()
        .zip(&labels)
        .map(|(p, l)| expert_rollout(*p, l, &space, &fb))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flat_map(|r| r.samples.into_iter().map(|s| s.0))
        .collect();
    let mut dqn = QLearner::network(spec.rl_config(), space.len(), Normalizer::fit(&rows), fb.clone(), mix(spec.seed, 2))?;
    let mut rng = rng_from(spec.seed, 3);
    for _ in 0..spec.rl.pretrain_passes {
        for p in &plants {
            run_rl_control(*p, &mut dqn, &space, &mut rng, 0)?;
        }
    }
    dqn.epsilon = dqn.cfg.epsilon;

    Checkpoints { policy: training.bundle, models: fit.models, dqn }.save(&layout)?;
    let report = TrainReport {
        offline: true,
        seed: spec.seed,
        min_knob_accuracy: min_per_knob(&accuracy),
        training_accuracy: accuracy,
        fit: Some(quality),
        dataset_sizes: training.dataset_sizes,
    };
    write_json(&layout.train_report(), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub workload: String,
    pub start: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub seed: u64,
    pub total_epochs: usize,
    pub blocks: Vec<Block>,
}

/// Online-IL bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineRecord {
    pub disagreements: usize,
    pub retrains: usize,
    pub buffer_capacity: usize,
    pub retrain_epochs: Vec<usize>,
    pub retrain_passes: Vec<usize>,
    pub convergence_epoch: Option<usize>,
    /// Epochs whose online label equals the exhaustive label.
    pub online_labels_matching: usize,
}

/// Training-suite accuracy of the offline policy and of the policy left
/// by the online run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retention {
    pub before: Vec<WorkloadAccuracy>,
    pub after: Vec<WorkloadAccuracy>,
    pub min_before: [f64; 4],
    pub min_after: [f64; 4],
}

/// Per-workload totals; `from_epoch` is where the online-IL run converged
/// (0 when it did not or was not run).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadTotals {
    pub controller: String,
    pub workload: String,
    pub from_epoch: usize,
    pub energy_j: f64,
    pub time_s: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub sequence: SequenceRecord,
    pub labels: Vec<OracleLabel>,
    pub logs: Vec<(String, Vec<DecisionRecord>)>,
    pub accuracy: Vec<(String, AccuracyReport)>,
    pub energy: EnergyReport,
    pub workload_totals: Vec<WorkloadTotals>,
    pub online: Option<OnlineRecord>,
    pub retention: Option<Retention>,
}

enum Outcome {
    Plain(Vec<DecisionRecord>),
    Online(Box<OnlineRun>),
    Rl(RlRun),
}

impl Outcome {
    fn log(&self) -> &[DecisionRecord] {
        match self {
            Outcome::Plain(l) => l,
            Outcome::Online(r) => &r.log,
            Outcome::Rl(r) => &r.decisions,
        }
    }
}

fn run_controller(
    name: &str,
    spec: &ExperimentSpec,
    plant: &dyn Plant,
    labels: &[OracleLabel],
    ck: &Checkpoints,
) -> Result<Outcome> {
    let space = &ck.policy.space;
    Ok(match name {
        "online-il" => {
            let settings = OnlineSettings { budget: spec.budget, beta: spec.beta, buffer_capacity: spec.buffer_capacity };
            Outcome::Online(Box::new(run_online_il(plant, ck.policy.clone(), ck.models.clone(), &settings)?))
        }
        "rl" => {
            let mut q = ck.dqn.clone();
            let mut rng = rng_from(spec.seed, 5);
            Outcome::Rl(run_rl_control(plant, &mut q, space, &mut rng, 0)?)
        }
        "static-offline" => Outcome::Plain(run_static_policy(plant, &ck.policy)?),
        "powersave" => Outcome::Plain(run_fixed(plant, powersave(space))?),
        "performance" => Outcome::Plain(run_fixed(plant, performance(space))?),
        "models-only" => {
            let mut m = ck.models.clone();
            Outcome::Plain(models_only_control(plant, &mut m, space, spec.budget, spec.beta)?)
        }
        "oracle" => Outcome::Plain(run_oracle(plant, labels)?),
        other => return Err(Error::Spec(format!("unknown controller {other:?}"))),
    })
}

/// Runs every requested controller over the evaluation stream and writes
/// logs and reports under `run/`. Controllers run in parallel; each one's
/// loop is sequential. Wall-clock timings go to `run/timing.json`, the only
/// output that is not reproducible.
pub fn cmd_simulate(spec: &ExperimentSpec, out: &Path, no_offline: bool) -> Result<SimulationOutput> {
    let layout = Layout::new(out);
    let ck = if no_offline { Checkpoints::untrained(spec)? } else { Checkpoints::load(&layout)? };
    let space = ck.policy.space.clone();

    let eval = generate(&spec.evaluation)?;
    let order = spec.materialize_sequence();
    let mut parts: Vec<&dyn Plant> = Vec::with_capacity(order.len());
    let mut blocks = Vec::with_capacity(order.len());
    let mut start = 0;
    for name in &order {
        let w = eval.iter().find(|w| &w.name == name).expect("validated sequence names");
        parts.push(w);
        blocks.push(Block { workload: name.clone(), start, epochs: w.n_epochs() });
        start += w.n_epochs();
    }
    let stream = Sequence::new("evaluation", parts);
    let sequence = SequenceRecord { seed: spec.seed, total_epochs: stream.n_epochs(), blocks };
    let labels = offline_oracle(&stream, &space, spec.beta)?;

    // Normalization references are run even when not requested.
    let mut names: Vec<String> = spec.controllers.clone();
    for r in ["powersave", "oracle"] {
        if !names.iter().any(|n| n == r) {
            names.push(r.to_string());
        }
    }
    let runs: Vec<(String, Outcome, f64)> = names
        .par_iter()
        .map(|n| {
            let t0 = Instant::now();
            let o = run_controller(n, spec, &stream, &labels, &ck)?;
            Ok((n.clone(), o, t0.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;
    let requested = |n: &str| spec.controllers.iter().any(|c| c == n);

    let all: Vec<(String, &[DecisionRecord])> = runs.iter().map(|(n, o, _)| (n.clone(), o.log())).collect();
    let mut energy = energy_report(&all)?;
    energy.rows.retain(|r| requested(&r.controller));

    let mut accuracy = Vec::new();
    let mut logs = Vec::new();
    let mut online = None;
    let mut final_policy = None;
    let mut rl_rows = None;
    for (name, o, _) in runs.iter().filter(|(n, _, _)| requested(n)) {
        accuracy.push((name.clone(), accuracy_of_log(o.log(), &labels, &space)?));
        logs.push((name.clone(), o.log().to_vec()));
        match o {
            Outcome::Online(r) => {
                let acc = &accuracy.last().expect("just pushed").1;
                online = Some(OnlineRecord {
                    disagreements: r.disagreements,
                    retrains: r.retrains,
                    buffer_capacity: spec.buffer_capacity,
                    retrain_epochs: r.log.iter().filter(|x| x.retrained).map(|x| x.epoch_id).collect(),
                    retrain_passes: r.retrain_passes.clone(),
                    convergence_epoch: acc.convergence_epoch,
                    online_labels_matching: r.online_labels.iter().zip(&labels).filter(|(a, b)| a.config == b.config).count(),
                });
                final_policy = Some(r.bundle.clone());
            }
            Outcome::Rl(r) => rl_rows = Some(rl_log_csv(&r.log)),
            Outcome::Plain(_) => {}
        }
    }

    let from_epoch = online.as_ref().and_then(|o| o.convergence_epoch).unwrap_or(0);
    let mut workload_totals = Vec::new();
    for (name, log) in &logs {
        for w in &spec.evaluation {
            let (e, t) = log
                .iter()
                .filter(|r| r.epoch_id >= from_epoch && r.workload == w.name)
                .fold((0.0, 0.0), |(e, t), r| (e + r.energy(), t + r.time));
            workload_totals.push(WorkloadTotals { controller: name.clone(), workload: w.name.clone(), from_epoch, energy_j: e, time_s: t });
        }
    }

    let retention = match &final_policy {
        Some(after) => {
            let train = generate(&spec.training)?;
            let plants: Vec<&dyn Plant> = train.iter().map(|w| w as &dyn Plant).collect();
            let tl: Vec<Vec<OracleLabel>> =
                plants.par_iter().map(|p| offline_oracle(*p, &space, spec.beta)).collect::<Result<_>>()?;
            let before = static_accuracy(&plants, &tl, &ck.policy)?;
            let after_acc = static_accuracy(&plants, &tl, after)?;
            Some(Retention { min_before: min_per_knob(&before), min_after: min_per_knob(&after_acc), before, after: after_acc })
        }
        None => None,
    };

    // Artifacts.
    let run_dir = layout.run();
    if run_dir.exists() {
        std::fs::remove_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    }
    write_file(&layout.run_file("spec.toml"), &spec.echo())?;
    write_json(&layout.run_file("sequence.json"), &sequence)?;
    write_labels_file(&layout.run_file("labels.csv"), &labels)?;
    for (name, log) in &logs {
        write_file(&layout.log(name), &decisions_csv(log))?;
    }
    for (name, acc) in &accuracy {
        write_json(&layout.accuracy(name), acc)?;
    }
    if let Some(rows) = &rl_rows {
        write_file(&layout.run_file("rl_log.csv"), rows)?;
    }
    if let Some(o) = &online {
        write_json(&layout.run_file("online.json"), o)?;
    }
    if let (Some(p), Some(r)) = (&final_policy, &retention) {
        p.save(&layout.run_file("policy_online.json"))?;
        write_json(&layout.run_file("retention.json"), r)?;
    }
    write_json(&layout.run_file("energy.json"), &energy)?;
    write_file(&layout.run_file("energy.csv"), &energy.to_csv())?;
    write_file(&layout.run_file("accuracy_vs_epoch.csv"), &accuracy_csv(&accuracy))?;
    write_file(&layout.run_file("workload_energy.csv"), &workload_csv(&workload_totals))?;
    let timing: Vec<(String, f64)> = runs.iter().filter(|(n, _, _)| requested(n)).map(|(n, _, s)| (n.clone(), *s)).collect();
    write_json(&layout.run_file("timing.json"), &timing)?;

    Ok(SimulationOutput { sequence, labels, logs, accuracy, energy, workload_totals, online, retention })
}

fn write_labels_file(path: &Path, labels: &[OracleLabel]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_labels(path, labels)
}

/// Long-format rolling accuracy per controller and epoch.
fn accuracy_csv(reports: &[(String, AccuracyReport)]) -> String {
    let mut s = String::from("controller,epoch");
    for k in Knob::ALL {
        let _ = write!(s, ",{}", k.name());
    }
    s.push('\n');
    for (name, r) in reports {
        for (e, row) in r.rolling.iter().enumerate() {
            let _ = writeln!(s, "{name},{e},{},{},{},{}", row[0], row[1], row[2], row[3]);
        }
    }
    s
}

fn workload_csv(rows: &[WorkloadTotals]) -> String {
    let mut s = String::from("controller,workload,from_epoch,energy_j,time_s\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.controller, r.workload, r.from_epoch, r.energy_j, r.time_s);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSummary {
    pub controller: String,
    pub accuracy_per_knob: [f64; 4],
    pub accuracy_mean: f64,
    pub final_rolling: [f64; 4],
    pub convergence_epoch: Option<usize>,
    pub energy_j: f64,
    pub time_s: f64,
    pub energy_vs_powersave: Option<f64>,
    pub time_vs_powersave: Option<f64>,
    pub energy_vs_oracle: Option<f64>,
    pub retrains: usize,
    pub oracle_evaluations: usize,
    pub model_updates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub seed: u64,
    pub total_epochs: usize,
    pub sequence: Vec<String>,
    pub controllers: Vec<ControllerSummary>,
    pub online: Option<OnlineRecord>,
    pub retention: Option<Retention>,
}

struct LogCounts {
    retrains: usize,
    evaluations: usize,
    updates: usize,
}

fn count_log(path: &Path) -> Result<LogCounts> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut c = LogCounts { retrains: 0, evaluations: 0, updates: 0 };
    let field = |rec: &csv::StringRecord, i: usize| -> Result<usize> {
        rec.get(i).and_then(|v| v.parse().ok()).ok_or_else(|| Error::Format(format!("{}: bad column {i}", path.display())))
    };
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        c.evaluations += field(&rec, 8)?;
        c.updates += field(&rec, 9)?;
        c.retrains += field(&rec, 10)?;
    }
    Ok(c)
}

/// Consolidates a completed run into `summary.json`. An incomplete run is
/// reported with the list of missing artifacts.
pub fn cmd_report(out: &Path) -> Result<Summary> {
    let layout = Layout::new(out);
    let spec_path = layout.run_file("spec.toml");
    if !spec_path.exists() {
        return Err(Error::Incomplete(vec![spec_path.display().to_string()]));
    }
    let spec = ExperimentSpec::load(&spec_path)?;
    let mut required = vec![layout.run_file("sequence.json"), layout.run_file("labels.csv"), layout.run_file("energy.json")];
    for c in &spec.controllers {
        required.push(layout.log(c));
        required.push(layout.accuracy(c));
    }
    if spec.controllers.iter().any(|c| c == "online-il") {
        required.push(layout.run_file("online.json"));
        required.push(layout.run_file("retention.json"));
    }
    if spec.controllers.iter().any(|c| c == "rl") {
        required.push(layout.run_file("rl_log.csv"));
    }
    let missing: Vec<String> = required.iter().filter(|p| !p.exists()).map(|p| p.display().to_string()).collect();
    if !missing.is_empty() {
        return Err(Error::Incomplete(missing));
    }

    let sequence: SequenceRecord = read_json(&layout.run_file("sequence.json"))?;
    let energy: EnergyReport = read_json(&layout.run_file("energy.json"))?;
    let mut controllers = Vec::new();
    for c in &spec.controllers {
        let acc: AccuracyReport = read_json(&layout.accuracy(c))?;
        let counts = count_log(&layout.log(c))?;
        let row = energy.row(c).ok_or_else(|| Error::Format(format!("energy report has no row for {c}")))?;
        controllers.push(ControllerSummary {
            controller: c.clone(),
            accuracy_per_knob: acc.per_knob_mean,
            accuracy_mean: acc.mean(),
            final_rolling: acc.final_rolling(),
            convergence_epoch: acc.convergence_epoch,
            energy_j: row.energy_j,
            time_s: row.time_s,
            energy_vs_powersave: row.energy_vs_powersave,
            time_vs_powersave: row.time_vs_powersave,
            energy_vs_oracle: row.energy_vs_oracle,
            retrains: counts.retrains,
            oracle_evaluations: counts.evaluations,
            model_updates: counts.updates,
        });
    }
    let has = |c: &str| spec.controllers.iter().any(|x| x == c);
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        seed: spec.seed,
        total_epochs: sequence.total_epochs,
        sequence: sequence.blocks.iter().map(|b| b.workload.clone()).collect(),
        controllers,
        online: if has("online-il") { Some(read_json(&layout.run_file("online.json"))?) } else { None },
        retention: if has("online-il") { Some(read_json(&layout.run_file("retention.json"))?) } else { None },
    };
    write_json(&layout.summary(), &summary)?;
    Ok(summary)
}

/// Command-line overrides applied on top of a spec file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub controllers: Option<Vec<String>>,
    pub budget: Option<usize>,
    pub beta: Option<f64>,
}

/// Loads a spec, applies overrides and resolves the output directory.
pub fn resolve(spec_path: &Path, o: &Overrides) -> Result<(ExperimentSpec, PathBuf)> {
    let mut spec = ExperimentSpec::load(spec_path)?;
    if let Some(s) = o.seed {
        spec.seed = s;
    }
    if let Some(c) = &o.controllers {
        spec.controllers = c.clone();
    }
    if let Some(b) = o.budget {
        spec.budget = b;
    }
    if let Some(b) = o.beta {
        spec.beta = b;
    }
    if let Some(out) = &o.out {
        spec.out_dir = Some(out.clone());
    }
    spec.validate()?;
    let out = spec.out_dir.clone().ok_or_else(|| Error::Spec("no output directory: set out_dir or pass --out".into()))?;
    Ok((spec, out))
}
