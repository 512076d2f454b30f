//! Workloads as sequences of repeatable epochs, answered either by the
//! synthetic plant or by recorded traces.

mod plant;
mod trace;

pub use plant::{PlantParams, TimeSplit};
pub use trace::{load_trace, save_trace, TraceWorkload, TRACE_HEADER};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config_space::{ConfigSpace, Configuration};
use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterVector {
    pub instructions_retired: f64,
    pub cpu_cycles: f64,
    pub branch_mispredictions: f64,
    pub l2_misses: f64,
    pub data_memory_accesses: f64,
    pub noncache_mem_requests: f64,
    pub little_cluster_util: f64,
    pub big_core_utils: [f64; 4],
    pub total_power: f64,
}

impl CounterVector {
    pub fn is_finite(&self) -> bool {
        [
            self.instructions_retired,
            self.cpu_cycles,
            self.branch_mispredictions,
            self.l2_misses,
            self.data_memory_accesses,
            self.noncache_mem_requests,
            self.little_cluster_util,
            self.total_power,
        ]
        .iter()
        .chain(self.big_core_utils.iter())
        .all(|v| v.is_finite())
    }

    /// Share of the reference cycles that ran in parallel, recovered from the
    /// utilization pattern and the configuration the counters were taken at.
    ///
    /// Busy time of big core 0 covers serial and parallel work while little
    /// cores are busy only for the parallel part, so their ratio separates the
    /// two; the throughputs of the observing configuration convert times back
    /// to cycles.
    pub fn parallel_share(&self, observed_at: &Configuration, little_ratio: f64) -> f64 {
        let u0 = self.big_core_utils[0];
        let ul = self.little_cluster_util;
        if ul <= 0.0 || u0 <= 0.0 {
            return 0.0;
        }
        let serial_over_parallel = ((u0 - ul) / ul).max(0.0);
        let fb = observed_at.f_big as f64;
        let thr = observed_at.n_big as f64 * fb + little_ratio * observed_at.n_little as f64 * observed_at.f_little as f64;
        let rho = serial_over_parallel * fb / thr;
        1.0 / (1.0 + rho)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub id: usize,
    pub instruction_count: f64,
    pub memory_intensity: f64,
    pub parallel_fraction: f64,
    pub branchiness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochObservation {
    pub epoch_id: usize,
    pub config: Configuration,
    pub counters: CounterVector,
    pub power: f64,
    pub exec_time: f64,
}

impl EpochObservation {
    pub fn energy(&self) -> f64 {
        self.power * self.exec_time
    }
}

/// Anything that can answer "what would epoch `k` produce at configuration `c`".
pub trait Plant: Sync {
    fn name(&self) -> &str;
    fn n_epochs(&self) -> usize;
    fn execute(&self, epoch: usize, c: &Configuration) -> Result<EpochObservation>;

    /// Name of the workload an epoch belongs to and its index within it.
    fn locate(&self, epoch: usize) -> (&str, usize) {
        (self.name(), epoch)
    }
}

/// Several plants run back to back as one epoch stream.
pub struct Sequence<'a> {
    pub name: String,
    parts: Vec<&'a dyn Plant>,
    starts: Vec<usize>,
    total: usize,
}

impl<'a> Sequence<'a> {
    pub fn new(name: impl Into<String>, parts: Vec<&'a dyn Plant>) -> Self {
        let mut starts = Vec::with_capacity(parts.len());
        let mut total = 0;
        for p in &parts {
            starts.push(total);
            total += p.n_epochs();
        }
        Sequence { name: name.into(), parts, starts, total }
    }

    fn part(&self, epoch: usize) -> Option<(usize, usize)> {
        if epoch >= self.total {
            return None;
        }
        let i = self.starts.partition_point(|&s| s <= epoch) - 1;
        Some((i, epoch - self.starts[i]))
    }
}

impl Plant for Sequence<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn n_epochs(&self) -> usize {
        self.total
    }

    fn execute(&self, epoch: usize, c: &Configuration) -> Result<EpochObservation> {
        let (i, local) = self.part(epoch).ok_or(Error::Lookup { epoch, config: c.to_string() })?;
        let mut o = self.parts[i].execute(local, c)?;
        o.epoch_id = epoch;
        Ok(o)
    }

    fn locate(&self, epoch: usize) -> (&str, usize) {
        match self.part(epoch) {
            Some((i, local)) => self.parts[i].locate(local),
            None => (self.name(), epoch),
        }
    }
}

/// Latent ranges for one synthetic workload family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub name: String,
    pub memory_intensity: (f64, f64),
    pub parallel_fraction: (f64, f64),
    pub branchiness: (f64, f64),
    /// Hidden dynamic-power scale of the workload's code mix.
    pub activity: (f64, f64),
    /// Number of distinct program phases a workload cycles through.
    pub phases: usize,
    /// Phase segment length range in epochs.
    pub segment_len: (usize, usize),
    /// Per-epoch latent jitter around the phase center.
    pub jitter: f64,
    /// Minimum relative energy margin between the best and second-best
    /// configuration at a phase center.
    pub min_gap: f64,
}

const MAX_CENTER_DRAWS: usize = 2_000;

pub const PROFILE_NAMES: [&str; 4] = ["compute-bound", "memory-bound", "parallel", "mixed"];

impl Profile {
    pub fn named(name: &str) -> Result<Profile> {
        let base = |m, p, b, a| Profile {
            name: name.to_string(),
            memory_intensity: m,
            parallel_fraction: p,
            branchiness: b,
            activity: a,
            phases: 3,
            segment_len: (15, 40),
            jitter: 0.003,
            min_gap: 0.005,
        };
        match name {
            "compute-bound" => Ok(base((0.0, 0.35), (0.0, 0.65), (0.0, 1.0), (0.97, 1.03))),
            "memory-bound" => Ok(base((0.5, 1.0), (0.0, 0.5), (0.0, 0.6), (0.95, 1.0))),
            "parallel" => Ok(base((0.0, 0.4), (0.8, 1.0), (0.0, 0.8), (0.97, 1.03))),
            "mixed" => Ok(base((0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (0.97, 1.05))),
            other => Err(Error::domain(format!(
                "unknown workload profile {other:?} (expected one of {})",
                PROFILE_NAMES.join(", ")
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub name: String,
    pub profile: String,
    pub epochs: Vec<Epoch>,
    pub params: PlantParams,
    pub activity: f64,
    pub noise_seed: u64,
}

impl Workload {
    /// Noise-free (power, time) for a given epoch index.
    pub fn power_time(&self, epoch: usize, c: &Configuration) -> (f64, f64) {
        self.params.power_time(&self.epochs[epoch], c, self.activity)
    }

    pub fn plant_execute(&self, e: &Epoch, c: &Configuration) -> EpochObservation {
        self.params.execute(e, c, self.activity, self.noise_seed)
    }
}

impl Plant for Workload {
    fn name(&self) -> &str {
        &self.name
    }

    fn n_epochs(&self) -> usize {
        self.epochs.len()
    }

    fn execute(&self, epoch: usize, c: &Configuration) -> Result<EpochObservation> {
        let e = self
            .epochs
            .get(epoch)
            .ok_or(Error::Lookup { epoch, config: c.to_string() })?;
        Ok(self.plant_execute(e, c))
    }
}

/// Free-function form of the plant query for a single epoch.
pub fn plant_execute(e: &Epoch, c: &Configuration, params: &PlantParams, activity: f64, seed: u64) -> EpochObservation {
    params.execute(e, c, activity, seed)
}

/// Generates a workload with the default plant and configuration space.
pub fn generate_workload(profile: &str, n_epochs: usize, seed: u64) -> Result<Workload> {
    let p = Profile::named(profile)?;
    generate_workload_with(&p, n_epochs, seed, &PlantParams::default(), &ConfigSpace::default())
}

pub fn generate_workload_with(
    profile: &Profile,
    n_epochs: usize,
    seed: u64,
    params: &PlantParams,
    space: &ConfigSpace,
) -> Result<Workload> {
    if n_epochs == 0 {
        return Err(Error::domain("a workload needs at least one epoch"));
    }
    if profile.phases == 0 || profile.segment_len.0 == 0 || profile.segment_len.0 > profile.segment_len.1 {
        return Err(Error::domain(format!("profile {} has an invalid phase layout", profile.name)));
    }
    let mut rng = rng_from(seed, 0x5eed);
    let activity = uniform(&mut rng, profile.activity);
    let configs = space.enumerate();

    let mut centers = Vec::with_capacity(profile.phases);
    // Rejection-sample phase centers with a clear optimum; after too many
    // draws settle for the widest margin seen.
    let mut attempts = 0;
    let mut widest = (f64::NEG_INFINITY, (0.0, 0.0, 0.0));
    while centers.len() < profile.phases {
        attempts += 1;
        let c = (
            uniform(&mut rng, profile.memory_intensity),
            uniform(&mut rng, profile.parallel_fraction),
            uniform(&mut rng, profile.branchiness),
        );
        let probe = Epoch { id: 0, instruction_count: 5e7, memory_intensity: c.0, parallel_fraction: c.1, branchiness: c.2 };
        let margin = energy_margin(params, &probe, &configs, activity);
        if margin > widest.0 {
            widest = (margin, c);
        }
        if margin >= profile.min_gap {
            centers.push(c);
        } else if attempts >= MAX_CENTER_DRAWS {
            centers.push(widest.1);
        } else {
            continue;
        }
        attempts = 0;
        widest.0 = f64::NEG_INFINITY;
    }

    let mut epochs = Vec::with_capacity(n_epochs);
    let mut phase = rng.gen_range(0..profile.phases);
    while epochs.len() < n_epochs {
        let len = rng.gen_range(profile.segment_len.0..=profile.segment_len.1);
        let (m, p, b) = centers[phase];
        for _ in 0..len.min(n_epochs - epochs.len()) {
            let j = profile.jitter;
            epochs.push(Epoch {
                id: epochs.len(),
                instruction_count: 10f64.powf(rng.gen_range(7.0..=8.0)),
                memory_intensity: (m + rng.gen_range(-j..=j)).clamp(0.0, 1.0),
                parallel_fraction: (p + rng.gen_range(-j..=j)).clamp(0.0, 1.0),
                branchiness: (b + rng.gen_range(-j..=j)).clamp(0.0, 1.0),
            });
        }
        if profile.phases > 1 {
            phase = (phase + rng.gen_range(1..profile.phases)) % profile.phases;
        }
    }

    Ok(Workload {
        name: format!("{}-{}", profile.name, seed),
        profile: profile.name.clone(),
        epochs,
        params: params.clone(),
        activity,
        noise_seed: crate::rng::mix(seed, 0x0b5e),
    })
}

/// Relative energy margin between the best and second-best configuration.
pub fn energy_margin(params: &PlantParams, e: &Epoch, configs: &[Configuration], activity: f64) -> f64 {
    let mut best = f64::INFINITY;
    let mut second = f64::INFINITY;
    for c in configs {
        let (p, t) = params.power_time(e, c, activity);
        let en = p * t;
        if en < best {
            second = best;
            best = en;
        } else if en < second {
            second = en;
        }
    }
    if configs.len() < 2 {
        return f64::INFINITY;
    }
    second / best - 1.0
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}
