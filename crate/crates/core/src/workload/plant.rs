//! Synthetic ground-truth plant standing in for the board.
//!
//! Latency is Amdahl-style: a serial part on one big core, a parallel part
//! spread over all active cores (little cores at a fixed relative
//! throughput), plus a memory-stall term that does not scale with frequency.
//! Power is `sum_clusters c_eff * V(f)^2 * f * sum(util) + V(f) * i_leak(n)`.

use serde::{Deserialize, Serialize};

use crate::config_space::Configuration;
use crate::workload::{CounterVector, Epoch, EpochObservation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    /// Reference IPC of a big core at zero branchiness.
    pub ipc_big: f64,
    /// IPC penalty per unit branchiness.
    pub branch_penalty: f64,
    /// Throughput of a little core relative to a big core at equal frequency.
    pub little_ratio: f64,
    /// Memory stall per instruction at memory intensity 1, in ns.
    pub stall_ns: f64,
    /// Effective switched capacitance per core, nF.
    pub c_big: f64,
    pub c_little: f64,
    /// Leakage current, amperes: cluster base plus per active core.
    pub leak_big_base: f64,
    pub leak_big_core: f64,
    pub leak_little_base: f64,
    pub leak_little_core: f64,
    /// V(f) = v0 + v_slope * (f - f_ref) / f_span, big cluster adds `v_big_offset`.
    pub v0: f64,
    pub v_slope: f64,
    pub f_ref_mhz: f64,
    pub f_span_mhz: f64,
    pub v_big_offset: f64,
    /// Full width of the multiplicative counter noise (0.01 means +-0.5%).
    pub noise_bound: f64,
    /// L2 misses per instruction at memory intensity 1.
    pub l2_per_inst: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            ipc_big: 2.5,
            branch_penalty: 0.3,
            little_ratio: 0.45,
            stall_ns: 0.45,
            c_big: 0.85,
            c_little: 0.07,
            leak_big_base: 0.6,
            leak_big_core: 0.04,
            leak_little_base: 0.26,
            leak_little_core: 0.12,
            v0: 0.9,
            v_slope: 0.4,
            f_ref_mhz: 600.0,
            f_span_mhz: 1400.0,
            v_big_offset: 0.1,
            noise_bound: 0.01,
            l2_per_inst: 0.03,
        }
    }
}

/// Noise-free time breakdown of one epoch at one configuration, seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSplit {
    pub serial: f64,
    pub parallel: f64,
    pub stall: f64,
}

impl TimeSplit {
    pub fn total(&self) -> f64 {
        self.serial + self.parallel + self.stall
    }
}

impl PlantParams {
    pub fn voltage_big(&self, f_mhz: f64) -> f64 {
        self.voltage_little(f_mhz) + self.v_big_offset
    }

    pub fn voltage_little(&self, f_mhz: f64) -> f64 {
        self.v0 + self.v_slope * (f_mhz - self.f_ref_mhz) / self.f_span_mhz
    }

    /// Aggregate parallel throughput in cycles per second.
    pub fn throughput(&self, c: &Configuration) -> f64 {
        (c.n_big as f64 * c.f_big as f64 + self.little_ratio * c.n_little as f64 * c.f_little as f64) * 1e6
    }

    /// Cycles an epoch needs on a big core, before noise.
    pub fn reference_cycles(&self, e: &Epoch) -> f64 {
        e.instruction_count / (self.ipc_big * (1.0 - self.branch_penalty * e.branchiness))
    }

    pub fn time_split(&self, e: &Epoch, c: &Configuration) -> TimeSplit {
        let cycles = self.reference_cycles(e);
        let p = e.parallel_fraction;
        TimeSplit {
            serial: cycles * (1.0 - p) / (c.f_big as f64 * 1e6),
            parallel: cycles * p / self.throughput(c),
            stall: self.stall_ns * 1e-9 * e.instruction_count * e.memory_intensity,
        }
    }

    /// Noise-free (power W, time s). `activity` scales dynamic power.
    pub fn power_time(&self, e: &Epoch, c: &Configuration, activity: f64) -> (f64, f64) {
        let ts = self.time_split(e, c);
        let t = ts.total();
        let (busy_big, busy_little) = self.busy(&ts, c);
        let fb = c.f_big as f64 * 1e6;
        let fl = c.f_little as f64 * 1e6;
        let vb = self.voltage_big(c.f_big as f64);
        let vl = self.voltage_little(c.f_little as f64);
        let dynamic = activity
            * (self.c_big * 1e-9 * vb * vb * fb * busy_big + self.c_little * 1e-9 * vl * vl * fl * busy_little);
        let leak = vb * (self.leak_big_base + self.leak_big_core * c.n_big as f64)
            + vl * (self.leak_little_base + self.leak_little_core * c.n_little as f64);
        (dynamic + leak, t)
    }

    /// Summed busy fractions per cluster (sum over active cores of utilization).
    fn busy(&self, ts: &TimeSplit, c: &Configuration) -> (f64, f64) {
        let t = ts.total();
        let big = (ts.serial + c.n_big as f64 * ts.parallel) / t;
        let little = c.n_little as f64 * ts.parallel / t;
        (big, little)
    }

    /// Full observation including noisy event counters. Noise depends only on
    /// `(seed, epoch id, configuration)`.
    pub fn execute(&self, e: &Epoch, c: &Configuration, activity: f64, seed: u64) -> EpochObservation {
        let ts = self.time_split(e, c);
        let t = ts.total();
        let (power, _) = self.power_time(e, c, activity);
        let cfg_key = ((c.n_big as u64) << 48) ^ ((c.n_little as u64) << 32) ^ ((c.f_big as u64) << 16) ^ c.f_little as u64;
        let mut stream = NoiseStream::new(crate::rng::mix(crate::rng::mix(seed, e.id as u64), cfg_key), self.noise_bound);

        let inst = e.instruction_count;
        let m = e.memory_intensity;
        let b = e.branchiness;
        let mut big_core_utils = [0.0; 4];
        for (j, u) in big_core_utils.iter_mut().enumerate().take(c.n_big.min(4) as usize) {
            *u = if j == 0 { (ts.serial + ts.parallel) / t } else { ts.parallel / t };
        }
        let counters = CounterVector {
            instructions_retired: inst,
            cpu_cycles: self.reference_cycles(e) * stream.next(),
            branch_mispredictions: inst * (0.002 + 0.02 * b) * stream.next(),
            l2_misses: inst * self.l2_per_inst * m * stream.next(),
            data_memory_accesses: inst * (0.2 + 0.3 * m) * stream.next(),
            noncache_mem_requests: inst * 0.01 * m * stream.next(),
            little_cluster_util: ts.parallel / t,
            big_core_utils,
            total_power: power,
        };
        EpochObservation { epoch_id: e.id, config: *c, counters, power, exec_time: t }
    }
}

struct NoiseStream {
    state: u64,
    bound: f64,
}

impl NoiseStream {
    fn new(state: u64, bound: f64) -> Self {
        NoiseStream { state, bound }
    }

    fn next(&mut self) -> f64 {
        self.state = crate::rng::mix(self.state, 0x9e37_79b9_7f4a_7c15);
        let u = (self.state >> 11) as f64 / (1u64 << 53) as f64;
        1.0 + self.bound * (u - 0.5)
    }
}
