use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Per-feature z-score statistics. Frozen after an offline fit; otherwise
/// updated online with Welford's recurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
    pub count: u64,
    pub frozen: bool,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Normalizer { mean: vec![0.0; dim], m2: vec![0.0; dim], count: 0, frozen: false }
    }

    /// Pass-through statistics that never change.
    pub fn frozen_identity(dim: usize) -> Self {
        Normalizer { frozen: true, ..Normalizer::identity(dim) }
    }

    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let mut n = Normalizer::identity(dim);
        for r in rows {
            n.observe(r);
        }
        n.frozen = true;
        n
    }

    pub fn observe(&mut self, x: &[f64]) {
        if self.frozen {
            return;
        }
        self.count += 1;
        let k = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / k;
            *s += d * (v - *m);
        }
    }

    pub fn std(&self, i: usize) -> f64 {
        if self.count < 2 {
            return 1.0;
        }
        let s = (self.m2[i] / (self.count - 1) as f64).sqrt();
        if s > 1e-12 * self.mean[i].abs().max(1e-300) && s > 0.0 {
            s
        } else {
            1.0
        }
    }

    /// z-scored features with a trailing constant 1.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = x.iter().enumerate().map(|(i, &v)| (v - self.mean[i]) / self.std(i)).collect();
        z.push(1.0);
        z
    }
}

/// Linear model over normalized features with recursive least squares state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub theta: Vec<f64>,
    /// Row-major covariance, `dim x dim`.
    pub covariance: Vec<f64>,
    pub forgetting: f64,
    pub norm: Normalizer,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    model: LinearModel,
}

impl LinearModel {
    pub const DEFAULT_FORGETTING: f64 = 0.99;
    pub const DEFAULT_P0: f64 = 1e3;

    /// Zero model over `n_features` raw features (plus bias).
    pub fn zeros(n_features: usize) -> Self {
        LinearModel::with_state(vec![0.0; n_features + 1], Normalizer::identity(n_features), Self::DEFAULT_P0, Self::DEFAULT_FORGETTING)
    }

    pub fn with_state(theta: Vec<f64>, norm: Normalizer, p0: f64, forgetting: f64) -> Self {
        let d = theta.len();
        let mut covariance = vec![0.0; d * d];
        for i in 0..d {
            covariance[i * d + i] = p0;
        }
        LinearModel { theta, covariance, forgetting, norm }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn reset_covariance(&mut self, p0: f64) {
        let d = self.dim();
        self.covariance.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            self.covariance[i * d + i] = p0;
        }
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        if features.len() + 1 != self.dim() {
            return Err(Error::domain(format!(
                "feature dimension {} does not match model dimension {}",
                features.len(),
                self.dim() - 1
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite feature"));
        }
        let z = self.norm.apply(features);
        Ok(dot(&self.theta, &z))
    }

    /// One exponentially weighted RLS step toward `target`. On a non-finite
    /// intermediate the model is left unchanged and an error is returned.
    pub fn rls_update(&mut self, features: &[f64], target: f64) -> Result<()> {
        if features.len() + 1 != self.dim() {
            return Err(Error::domain("feature dimension does not match model"));
        }
        if !target.is_finite() || features.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite RLS input"));
        }
        let mut norm = self.norm.clone();
        norm.observe(features);
        let z = norm.apply(features);
        let d = self.dim();
        let p = &self.covariance;
        let pz: Vec<f64> = (0..d).map(|i| dot(&p[i * d..(i + 1) * d], &z)).collect();
        let denom = self.forgetting + dot(&z, &pz);
        let innovation = target - dot(&self.theta, &z);
        let gain: Vec<f64> = pz.iter().map(|v| v / denom).collect();
        let theta: Vec<f64> = self.theta.iter().zip(&gain).map(|(t, k)| t + k * innovation).collect();
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] = (p[i * d + j] - gain[i] * pz[j]) / self.forgetting;
            }
        }
        for i in 0..d {
            for j in (i + 1)..d {
                let s = 0.5 * (cov[i * d + j] + cov[j * d + i]);
                cov[i * d + j] = s;
                cov[j * d + i] = s;
            }
        }
        if !denom.is_finite() || theta.iter().chain(&cov).any(|v| !v.is_finite()) {
            return Err(Error::numeric("RLS update produced a non-finite value"));
        }
        self.theta = theta;
        self.covariance = cov;
        self.norm = norm;
        Ok(())
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.covariance)
    }

    pub fn theta_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.theta)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&Checkpoint { version: CHECKPOINT_VERSION, model: self.clone() })
            .expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Format(format!("model checkpoint: {e}")))?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported model checkpoint version {}", c.version)));
        }
        Ok(c.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
