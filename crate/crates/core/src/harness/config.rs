use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::instance::SignalSpec;
use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::noise::NoiseModel;

/// AMP calibration mode in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSpec {
    #[default]
    Empirical,
    Analytic,
}

/// A replication experiment. Read from a flat `key = value` (TOML) file:
///
/// ```toml
/// n = 1000
/// p = 200
/// loss = "huber:3"
/// noise = "cn:0.05,10"
/// theta0_norm = 6.0
/// replications = 10
/// seed = 1
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: usize,
    #[serde(default = "default_loss")]
    pub loss: String,
    #[serde(default = "default_noise")]
    pub noise: String,
    /// `‖θ₀‖₂ / √p`; ignored when `theta0` is given.
    #[serde(default = "default_theta0_norm")]
    pub theta0_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// First seed; replication `k` uses `seed + k` unless `seeds` is given.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub mode: ModeSpec,
    #[serde(default = "default_amp_tol")]
    pub amp_tol: f64,
    #[serde(default = "default_amp_max_iters")]
    pub amp_max_iters: usize,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max_iters")]
    pub newton_max_iters: usize,
    /// Also solve the Lasso dual (Huber losses only).
    #[serde(default)]
    pub duality: bool,
    /// `τ²` grid for the variance-map plot; defaults to 41 points on
    /// `[0, 2 max(τ₀², τ*²)]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance_map_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_loss() -> String {
    "huber:3".into()
}
fn default_noise() -> String {
    "cn:0.05,10".into()
}
fn default_theta0_norm() -> f64 {
    1.0
}
fn default_replications() -> usize {
    1
}
fn default_amp_tol() -> f64 {
    crate::amp::DEFAULT_TOL
}
fn default_amp_max_iters() -> usize {
    crate::amp::DEFAULT_MAX_ITERS
}
fn default_newton_tol() -> f64 {
    crate::baseline::DEFAULT_TOL
}
fn default_newton_max_iters() -> usize {
    crate::baseline::DEFAULT_MAX_ITERS
}

impl ExperimentConfig {
    pub fn new(n: usize, p: usize, loss: &str, noise: &str) -> Self {
        ExperimentConfig {
            n,
            p,
            loss: loss.into(),
            noise: noise.into(),
            theta0_norm: default_theta0_norm(),
            theta0: None,
            replications: default_replications(),
            seed: 0,
            seeds: None,
            mode: ModeSpec::Empirical,
            amp_tol: default_amp_tol(),
            amp_max_iters: default_amp_max_iters(),
            newton_tol: default_newton_tol(),
            newton_max_iters: default_newton_max_iters(),
            duality: false,
            variance_map_grid: None,
            output: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)
            .map_err(|e| Error::parse("config", text.lines().next().unwrap_or(""), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.n <= self.p {
            return Err(Error::invalid(format!(
                "need n > p >= 1, got n = {}, p = {}",
                self.n, self.p
            )));
        }
        if self.seeds().is_empty() {
            return Err(Error::invalid("at least one replication is required"));
        }
        if let Some(t) = &self.theta0 {
            if t.len() != self.p {
                return Err(Error::invalid(format!(
                    "theta0 has length {}, expected {}",
                    t.len(),
                    self.p
                )));
            }
        } else if !(self.theta0_norm >= 0.0) {
            return Err(Error::invalid("theta0_norm must be nonnegative"));
        }
        if let Some(grid) = &self.variance_map_grid {
            if grid.is_empty() {
                return Err(Error::invalid("variance_map_grid is empty"));
            }
        }
        self.loss()?;
        self.noise()?;
        Ok(())
    }

    pub fn loss(&self) -> Result<Loss> {
        self.loss.parse()
    }

    pub fn noise(&self) -> Result<NoiseModel> {
        self.noise.parse()
    }

    pub fn delta(&self) -> f64 {
        self.n as f64 / self.p as f64
    }

    pub fn signal(&self) -> SignalSpec {
        match &self.theta0 {
            Some(v) => SignalSpec::Explicit(v.clone()),
            None => SignalSpec::Sphere {
                norm_per_sqrt_p: self.theta0_norm,
            },
        }
    }

    /// `‖θ₀‖² / n`, the SE starting point for AMP started at zero.
    pub fn tau0_sq(&self) -> f64 {
        match &self.theta0 {
            Some(v) => v.iter().map(|x| x * x).sum::<f64>() / self.n as f64,
            None => self.theta0_norm.powi(2) / self.delta(),
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.replications as u64).map(|k| self.seed + k).collect(),
        }
    }
}
