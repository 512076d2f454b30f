use serde::{Deserialize, Serialize};

use crate::config_space::Configuration;
use crate::workload::{CounterVector, PlantParams};

/// Platform constants the feature builders need: the DVFS voltage table and
/// the relative throughput of a little core. These are properties of the
/// hardware, not of any workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBuilder {
    pub little_ratio: f64,
    pub v0: f64,
    pub v_slope: f64,
    pub f_ref_mhz: f64,
    pub f_span_mhz: f64,
    pub v_big_offset: f64,
}

impl Default for FeatureBuilder {
    fn default() -> Self {
        FeatureBuilder::from_plant(&PlantParams::default())
    }
}

pub const LATENCY_FEATURES: [&str; 7] =
    ["serial_cycles_per_ghz", "parallel_cycles_per_ghz", "l2_misses", "n_big", "n_little", "inv_f_big", "inv_f_little"];

pub const POWER_FEATURES: [&str; 6] =
    ["big_switching", "little_switching", "v_big", "n_big_v_big", "v_little", "n_little_v_little"];

impl FeatureBuilder {
    pub fn from_plant(p: &PlantParams) -> Self {
        FeatureBuilder {
            little_ratio: p.little_ratio,
            v0: p.v0,
            v_slope: p.v_slope,
            f_ref_mhz: p.f_ref_mhz,
            f_span_mhz: p.f_span_mhz,
            v_big_offset: p.v_big_offset,
        }
    }

    fn v_little(&self, f: u32) -> f64 {
        self.v0 + self.v_slope * (f as f64 - self.f_ref_mhz) / self.f_span_mhz
    }

    fn v_big(&self, f: u32) -> f64 {
        self.v_little(f) + self.v_big_offset
    }

    fn throughput_mhz(&self, c: &Configuration) -> f64 {
        c.n_big as f64 * c.f_big as f64 + self.little_ratio * c.n_little as f64 * c.f_little as f64
    }

    /// Latency features for running at `target`, from counters measured at
    /// `observed_at`.
    pub fn latency(&self, h: &CounterVector, observed_at: &Configuration, target: &Configuration) -> Vec<f64> {
        let p = h.parallel_share(observed_at, self.little_ratio);
        let cyc = h.cpu_cycles;
        vec![
            cyc * (1.0 - p) * 1e-3 / target.f_big as f64,
            cyc * p * 1e-3 / self.throughput_mhz(target),
            h.l2_misses,
            target.n_big as f64,
            target.n_little as f64,
            1000.0 / target.f_big as f64,
            1000.0 / target.f_little as f64,
        ]
    }

    /// Power features for running at `target` for `time` seconds, from
    /// counters measured at `observed_at`. The switching terms are busy
    /// cycles times V^2 per second; the rest are leakage terms in V.
    pub fn power(&self, h: &CounterVector, observed_at: &Configuration, target: &Configuration, time: f64) -> Vec<f64> {
        let p = h.parallel_share(observed_at, self.little_ratio);
        let cyc = h.cpu_cycles;
        let thr = self.throughput_mhz(target);
        let vb = self.v_big(target.f_big);
        let vl = self.v_little(target.f_little);
        let nb = target.n_big as f64;
        let nl = target.n_little as f64;
        let big_busy = cyc * ((1.0 - p) + p * nb * target.f_big as f64 / thr);
        let little_busy = cyc * p * nl * target.f_little as f64 / thr;
        vec![
            vb * vb * big_busy * 1e-9 / time,
            vl * vl * little_busy * 1e-9 / time,
            vb,
            nb * vb,
            vl,
            nl * vl,
        ]
    }
}
