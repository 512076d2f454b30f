//! Power and execution-time models: linear in counter-derived features,
//! fitted offline by least squares and tracked online by RLS.
//!
//! Both models evaluate an arbitrary candidate configuration from the
//! counters of the configuration that was actually run, so one observation
//! serves every candidate of a search.

mod features;
mod linear;

pub use features::{FeatureBuilder, LATENCY_FEATURES, POWER_FEATURES};
pub use linear::{LinearModel, Normalizer, CHECKPOINT_VERSION};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config_space::Configuration;
use crate::error::{Error, Result};
use crate::workload::{CounterVector, EpochObservation};

pub const DEFAULT_TIME_FLOOR: f64 = 1e-6;
pub const RIDGE: f64 = 1e-6;
/// Scale of the fitted RLS covariance relative to the inverse second moment.
pub const PRIOR_SCALE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Models {
    pub power: LinearModel,
    pub time: LinearModel,
    pub features: FeatureBuilder,
    pub time_floor: f64,
}

/// Result of an offline fit. `ridge_used` is set when either design matrix
/// was rank-deficient and the regularized solve was taken instead.
#[derive(Debug, Clone)]
pub struct OfflineFit {
    pub models: Models,
    pub ridge_used: bool,
}

impl Models {
    /// Zero weights and running normalization, for runs without an offline phase.
    pub fn untrained(features: FeatureBuilder) -> Self {
        Models {
            power: LinearModel::zeros(POWER_FEATURES.len()),
            time: LinearModel::zeros(LATENCY_FEATURES.len()),
            features,
            time_floor: DEFAULT_TIME_FLOOR,
        }
    }

    pub fn predict_time(&self, h: &CounterVector, observed_at: &Configuration, target: &Configuration) -> Result<f64> {
        let t = self.time.predict(&self.features.latency(h, observed_at, target))?;
        Ok(t.max(self.time_floor))
    }

    /// Power at `target` given the (predicted or measured) time there.
    pub fn predict_power_at(&self, h: &CounterVector, observed_at: &Configuration, target: &Configuration, time: f64) -> Result<f64> {
        self.power.predict(&self.features.power(h, observed_at, target, time))
    }

    /// Predicted (power, time) at `target`.
    pub fn estimate(&self, h: &CounterVector, observed_at: &Configuration, target: &Configuration) -> Result<(f64, f64)> {
        let t = self.predict_time(h, observed_at, target)?;
        let p = self.predict_power_at(h, observed_at, target, t)?;
        Ok((p, t))
    }

    /// RLS step on both models from one measured observation. Either update
    /// may fail independently; a failed update leaves that model unchanged.
    pub fn update(&mut self, obs: &EpochObservation) -> Result<()> {
        let c = &obs.config;
        let lt = self.features.latency(&obs.counters, c, c);
        let pw = self.features.power(&obs.counters, c, c, obs.exec_time);
        let a = self.time.rls_update(&lt, obs.exec_time);
        let b = self.power.rls_update(&pw, obs.power);
        a.and(b)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelsCheckpoint { version: CHECKPOINT_VERSION, models: self.clone() })
            .expect("models serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: ModelsCheckpoint =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("models checkpoint: {e}")))?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported models checkpoint version {}", c.version)));
        }
        Ok(c.models)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelsCheckpoint {
    version: u32,
    models: Models,
}

pub fn predict_power(models: &Models, h: &CounterVector, observed_at: &Configuration, target: &Configuration) -> Result<f64> {
    models.estimate(h, observed_at, target).map(|(p, _)| p)
}

pub fn predict_time(models: &Models, h: &CounterVector, observed_at: &Configuration, target: &Configuration) -> Result<f64> {
    models.predict_time(h, observed_at, target)
}

/// Least-squares fit of both models on characterization observations.
pub fn fit_offline(observations: &[EpochObservation], features: &FeatureBuilder) -> Result<OfflineFit> {
    if observations.is_empty() {
        return Err(Error::domain("no observations to fit"));
    }
    let lat: Vec<Vec<f64>> = observations.iter().map(|o| features.latency(&o.counters, &o.config, &o.config)).collect();
    let pw: Vec<Vec<f64>> = observations
        .iter()
        .map(|o| features.power(&o.counters, &o.config, &o.config, o.exec_time))
        .collect();
    let t: Vec<f64> = observations.iter().map(|o| o.exec_time).collect();
    let p: Vec<f64> = observations.iter().map(|o| o.power).collect();
    let (time, r1) = fit_linear(&lat, &t)?;
    let (power, r2) = fit_linear(&pw, &p)?;
    Ok(OfflineFit {
        models: Models { power, time, features: features.clone(), time_floor: DEFAULT_TIME_FLOOR },
        ridge_used: r1 || r2,
    })
}

/// Ordinary least squares over z-scored features plus bias; falls back to a
/// ridge solve when the design is rank-deficient. Returns the model with
/// frozen normalization, forgetting factor 0.99 and an RLS covariance shaped
/// by the fitted data.
pub fn fit_linear(rows: &[Vec<f64>], targets: &[f64]) -> Result<(LinearModel, bool)> {
    if rows.len() != targets.len() || rows.is_empty() {
        return Err(Error::domain("rows and targets must be non-empty and aligned"));
    }
    if rows.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite value in fit data"));
    }
    let norm = Normalizer::fit(rows);
    let d = rows[0].len() + 1;
    let n = rows.len();
    let z: Vec<f64> = rows.iter().flat_map(|r| norm.apply(r)).collect();
    let x = DMatrix::from_row_slice(n, d, &z);
    let y = DVector::from_column_slice(targets);

    let mut ridge = n < d;
    let mut theta = None;
    if !ridge {
        let svd = x.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin <= smax * 1e-10 {
            ridge = true;
        } else {
            theta = Some(svd.solve(&y, 0.0).map_err(|e| Error::numeric(e.to_string()))?);
        }
    }
    let theta = match theta {
        Some(t) => t,
        None => {
            let xtx = x.transpose() * &x + DMatrix::identity(d, d) * RIDGE;
            let xty = x.transpose() * &y;
            xtx.cholesky()
                .ok_or_else(|| Error::numeric("ridge system not positive definite"))?
                .solve(&xty)
        }
    };
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("least-squares solution is not finite"));
    }
    let mut model = LinearModel::with_state(
        theta.iter().copied().collect(),
        norm,
        LinearModel::DEFAULT_P0,
        LinearModel::DEFAULT_FORGETTING,
    );
    // RLS starts from a multiple of the inverse second moment of the fitted
    // features: online steps then correct along directions the offline data
    // supports instead of overwriting cross-configuration structure.
    let info = (x.transpose() * &x + DMatrix::identity(d, d) * RIDGE) / n as f64;
    if let Some(inv) = info.cholesky().map(|c| c.inverse()) {
        let inv = (&inv + inv.transpose()) * (0.5 * PRIOR_SCALE);
        model.covariance = inv.transpose().as_slice().to_vec();
    }
    Ok((model, ridge))
}

#[cfg(test)]
mod tests;
