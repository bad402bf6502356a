use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::numerics::rng::{standard_normals, streams, RngStream};
use crate::numerics::{Matrix, Vector};

/// How the true parameter is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalSpec {
    /// Uniform on the sphere of radius `norm_per_sqrt_p · √p`.
    Sphere {
        norm_per_sqrt_p: f64,
    },
    Explicit(Vec<f64>),
}

/// `Y = X θ₀ + W` with `X` i.i.d. `N(0, 1/n)`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub x: Matrix,
    pub y: Vector,
    pub theta0: Vector,
    pub w: Vector,
    pub delta: f64,
    pub seed: u64,
}

impl ProblemInstance {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Draws an instance; identical arguments give bit-identical output.
    pub fn generate(n: usize, p: usize, noise: &NoiseModel, signal: &SignalSpec, seed: u64) -> Result<Self> {
        if p == 0 || n <= p {
            return Err(Error::invalid(format!("need n > p >= 1, got n = {n}, p = {p}")));
        }
        let scale = 1.0 / (n as f64).sqrt();
        let entries = standard_normals(&mut RngStream::new(seed, streams::DESIGN).rng(), n * p);
        let x = Matrix::from_iterator(n, p, entries.into_iter().map(|z| z * scale));

        let theta0 = match signal {
            SignalSpec::Sphere { norm_per_sqrt_p } => {
                if !(*norm_per_sqrt_p >= 0.0) {
                    return Err(Error::invalid("signal norm must be nonnegative"));
                }
                let mut v = Vector::from_vec(standard_normals(&mut RngStream::new(seed, streams::SIGNAL).rng(), p));
                let norm = v.norm();
                if *norm_per_sqrt_p == 0.0 || norm == 0.0 {
                    v.fill(0.0);
                } else {
                    v *= norm_per_sqrt_p * (p as f64).sqrt() / norm;
                }
                v
            }
            SignalSpec::Explicit(values) => {
                if values.len() != p {
                    return Err(Error::invalid(format!(
                        "explicit theta0 has length {}, expected {p}",
                        values.len()
                    )));
                }
                Vector::from_column_slice(values)
            }
        };
        let w = Vector::from_vec(noise.sample(n, &mut RngStream::new(seed, streams::NOISE).rng()));
        Self::from_parts(x, theta0, w, seed)
    }

    pub fn from_parts(x: Matrix, theta0: Vector, w: Vector, seed: u64) -> Result<Self> {
        let (n, p) = x.shape();
        if theta0.len() != p || w.len() != n {
            return Err(Error::invalid(format!(
                "shape mismatch: X is {n}x{p}, theta0 has {}, W has {}",
                theta0.len(),
                w.len()
            )));
        }
        if p == 0 || n <= p {
            return Err(Error::invalid(format!("need n > p >= 1, got n = {n}, p = {p}")));
        }
        let y = &x * &theta0 + &w;
        Ok(ProblemInstance {
            x,
            y,
            theta0,
            w,
            delta: n as f64 / p as f64,
            seed,
        })
    }

    /// `‖θ − θ₀‖₂ / √p`.
    pub fn rmse(&self, theta: &Vector) -> f64 {
        rmse(theta, &self.theta0)
    }
}

/// `‖a − b‖₂ / √len`.
pub fn rmse(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / (a.len() as f64).sqrt()
}
