//! Deterministic state evolution.
//!
//! AMP's adjusted residuals behave like `W + τ_t Z`. State evolution tracks
//! `τ_t²` through the variance map
//!
//! ```text
//! V(τ², b) = δ E{Ψ(W + τZ; b)²},     b(τ): smallest b with E{Ψ′(W + τZ; b)} = 1/δ,
//! τ²_{t+1} = V(τ_t², b(τ_t)).
//! ```
//!
//! Its fixed point `(τ*², b*)` gives the asymptotic variance `δ τ*²` of the
//! M-estimator.

mod bounds;
mod correlation;

pub use bounds::LowerBounds;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::noise::NoiseModel;
use crate::numerics::{smallest_root_doubling, Quadrature, RootOptions};

/// Scan grid for the slope equation in `b`.
pub const CALIBRATION_GRID: usize = 256;
pub const CALIBRATION_B_START: f64 = 8.0;
pub const CALIBRATION_B_MAX: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeState {
    pub t: usize,
    pub tau_sq: f64,
    /// `b(τ_t)`, the calibrated effective-score parameter at this state.
    pub b: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub tau_star_sq: f64,
    pub b_star: f64,
    pub asymptotic_variance: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: usize,
    pub tau_sq: f64,
    pub b: f64,
}

/// The law `η(W + τZ; b)` predicted for ordinary residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualLaw {
    pub noise: String,
    pub loss: String,
    pub tau: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub mse: f64,
    pub mae: f64,
    pub trajectory: Vec<TrajectoryPoint>,
    pub residual_law: ResidualLaw,
}

/// State evolution for one `(loss, noise, δ)` configuration.
#[derive(Debug, Clone)]
pub struct StateEvolution {
    pub loss: Loss,
    pub noise: NoiseModel,
    pub delta: f64,
    pub quad: Quadrature,
    pub calibration: RootOptions,
}

impl StateEvolution {
    pub fn new(loss: Loss, noise: NoiseModel, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::invalid(format!("delta must be positive, got {delta}")));
        }
        Ok(StateEvolution {
            loss,
            noise,
            delta,
            quad: Quadrature::default(),
            calibration: RootOptions::default(),
        })
    }

    pub fn with_quadrature(mut self, quad: Quadrature) -> Self {
        self.quad = quad;
        self
    }

    /// `E{Ψ′(W + τZ; b)}`.
    pub fn mean_slope(&self, tau: f64, b: f64) -> f64 {
        let kinks = self.loss.effective_kinks(b);
        self.noise
            .smoothed_expectation(tau, |x| self.loss.psi_eff_prime(x, b), &kinks, &self.quad)
    }

    /// `E{Ψ(W + τZ; b)²}`.
    pub fn mean_square_score(&self, tau: f64, b: f64) -> f64 {
        let kinks = self.loss.effective_kinks(b);
        self.noise
            .smoothed_expectation(tau, |x| self.loss.psi_eff(x, b).powi(2), &kinks, &self.quad)
    }

    /// `V(τ², b) = δ E{Ψ(W + τZ; b)²}`.
    pub fn variance_map(&self, tau_sq: f64, b: f64) -> f64 {
        if b <= 0.0 {
            return 0.0;
        }
        self.delta * self.mean_square_score(tau_sq.max(0.0).sqrt(), b)
    }

    /// Smallest `b > 0` solving `E{Ψ′(W + τZ; b)} = 1/δ`.
    pub fn calibrate_b(&self, tau: f64) -> Result<f64> {
        self.calibrate_b_with(tau, self.calibration)
    }

    fn calibrate_b_with(&self, tau: f64, opts: RootOptions) -> Result<f64> {
        if !(self.delta > 1.0) {
            return Err(Error::invalid(format!(
                "b calibration needs delta > 1, got {}",
                self.delta
            )));
        }
        let target = 1.0 / self.delta;
        smallest_root_doubling(
            |b| self.mean_slope(tau, b) - target,
            CALIBRATION_B_START,
            CALIBRATION_B_MAX,
            CALIBRATION_GRID,
            opts,
        )
        .ok_or(Error::Calibration {
            b_max: CALIBRATION_B_MAX,
        })
    }

    /// `(Ṽ(τ²), b(τ))`.
    pub fn v_tilde(&self, tau_sq: f64) -> Result<(f64, f64)> {
        let b = self.calibrate_b(tau_sq.max(0.0).sqrt())?;
        Ok((self.variance_map(tau_sq, b), b))
    }

    pub fn initial_state(&self, tau0_sq: f64) -> Result<SeState> {
        if !(tau0_sq >= 0.0 && tau0_sq.is_finite()) {
            return Err(Error::invalid(format!("tau0^2 must be nonnegative, got {tau0_sq}")));
        }
        Ok(SeState {
            t: 0,
            tau_sq: tau0_sq,
            b: self.calibrate_b(tau0_sq.sqrt())?,
            delta: self.delta,
        })
    }

    /// One step of the recursion: `τ²_{t+1} = V(τ_t², b_t)`, then `b_{t+1} = b(τ_{t+1})`.
    pub fn step(&self, state: &SeState) -> Result<SeState> {
        let tau_sq = self.variance_map(state.tau_sq, state.b);
        Ok(SeState {
            t: state.t + 1,
            tau_sq,
            b: self.calibrate_b(tau_sq.sqrt())?,
            delta: self.delta,
        })
    }

    /// Trajectory from `τ₀²` until `|τ²_{t+1} − τ_t²| ≤ tol·(1 + τ_t²)` or
    /// `max_iters` steps have been taken. Includes the initial state.
    pub fn run(&self, tau0_sq: f64, max_iters: usize, tol: f64) -> Result<Vec<SeState>> {
        if max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        let mut states = vec![self.initial_state(tau0_sq)?];
        for _ in 0..max_iters {
            let last = *states.last().unwrap();
            let next = self.step(&last)?;
            states.push(next);
            if (next.tau_sq - last.tau_sq).abs() <= tol * (1.0 + last.tau_sq) {
                break;
            }
        }
        Ok(states)
    }

    /// Exactly `steps` steps from `τ₀²` (no early stop).
    pub fn run_fixed(&self, tau0_sq: f64, steps: usize) -> Result<Vec<SeState>> {
        let mut states = vec![self.initial_state(tau0_sq)?];
        for _ in 0..steps {
            let next = self.step(states.last().unwrap())?;
            states.push(next);
        }
        Ok(states)
    }

    /// Solves `τ² = δ E{Ψ(W+τZ; b)²}`, `1/δ = E{Ψ′(W+τZ; b)}`.
    ///
    /// Iterates `Ṽ` from `τ² = 0`, which increases monotonically to the
    /// smallest fixed point (damped by 1/2 if an oscillation shows up), then
    /// polishes `g(τ²) = Ṽ(τ²) − τ²` with Brent's method.
    pub fn fixed_point(&self, tol: f64, max_iters: usize) -> Result<FixedPoint> {
        let tight = RootOptions {
            xtol: 1e-14,
            ftol: 1e-15,
            max_iter: 300,
        };
        let v_tilde = |x: f64| -> Result<f64> {
            let b = self.calibrate_b_with(x.max(0.0).sqrt(), tight)?;
            Ok(self.variance_map(x, b))
        };

        let mut trajectory = vec![0.0];
        let mut x = v_tilde(0.0)?;
        if x == 0.0 {
            // Noiseless data: the origin is a fixed point.
            return self.finish_fixed_point(0.0, 1, tight);
        }
        trajectory.push(x);
        let mut last_step = f64::NAN;
        let mut damping = 1.0;
        let mut iterations = 1;
        let mut converged = false;
        while iterations < max_iters {
            let v = v_tilde(x)?;
            let step = v - x;
            if step * last_step < 0.0 {
                damping = 0.5;
            }
            x += damping * step;
            last_step = step;
            iterations += 1;
            trajectory.push(x);
            if step.abs() <= 1e-3 * tol * (1.0 + x) {
                converged = true;
                break;
            }
            if step.abs() <= 1e-6 * (1.0 + x) {
                break;
            }
        }
        if !converged {
            x = self.polish(x, &v_tilde, tol, trajectory.as_slice())?;
        }
        let fp = self.finish_fixed_point(x, iterations, tight)?;
        if fp.residual > tol {
            return Err(Error::FixedPoint { trajectory });
        }
        Ok(fp)
    }

    fn polish(&self, x: f64, v_tilde: &impl Fn(f64) -> Result<f64>, tol: f64, trajectory: &[f64]) -> Result<f64> {
        let fail = || Error::FixedPoint {
            trajectory: trajectory.to_vec(),
        };
        let g = |y: f64| v_tilde(y).map(|v| v - y);
        let gx = g(x)?;
        if gx == 0.0 {
            return Ok(x);
        }
        // Walk away from x in the direction of g until the sign flips.
        let upper_limit = x + self.delta * (self.noise.second_moment() + x) + 1.0;
        let mut width = gx.abs().max(1e-12 * (1.0 + x));
        let (mut lo, mut hi) = (x, x);
        let mut found = false;
        for _ in 0..200 {
            let probe = if gx > 0.0 { x + width } else { (x - width).max(0.0) };
            let gp = g(probe)?;
            if (gp > 0.0) != (gx > 0.0) || gp == 0.0 {
                if gx > 0.0 {
                    hi = probe;
                } else {
                    lo = probe;
                }
                found = true;
                break;
            }
            if probe >= upper_limit || probe == 0.0 {
                break;
            }
            width *= 2.0;
        }
        if !found {
            return Err(fail());
        }
        let mut err = None;
        let root = crate::numerics::find_root_with(
            |y| match g(y) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NAN
                }
            },
            lo,
            hi,
            RootOptions {
                xtol: 1e-13 * (1.0 + x),
                ftol: 1e-2 * tol,
                max_iter: 300,
            },
        );
        if let Some(e) = err {
            return Err(e);
        }
        root.map_err(|_| fail())
    }

    fn finish_fixed_point(&self, tau_sq: f64, iterations: usize, opts: RootOptions) -> Result<FixedPoint> {
        let tau = tau_sq.sqrt();
        let b = self.calibrate_b_with(tau, opts)?;
        let r_variance = (self.variance_map(tau_sq, b) - tau_sq).abs();
        let r_slope = (self.mean_slope(tau, b) - 1.0 / self.delta).abs();
        Ok(FixedPoint {
            tau_star_sq: tau_sq,
            b_star: b,
            asymptotic_variance: self.delta * tau_sq,
            iterations,
            residual: r_variance.max(r_slope),
        })
    }

    /// Residuals of the two fixed-point equations at `(τ², b)`.
    pub fn fixed_point_residuals(&self, tau_sq: f64, b: f64) -> (f64, f64) {
        (
            self.variance_map(tau_sq, b) - tau_sq,
            self.mean_slope(tau_sq.sqrt(), b) - 1.0 / self.delta,
        )
    }

    /// Central finite-difference slope of `Ṽ` at `τ²`; a fixed point is
    /// stable when this is below one.
    pub fn v_tilde_slope(&self, tau_sq: f64) -> Result<f64> {
        let h = 1e-4 * (1.0 + tau_sq);
        let lo = (tau_sq - h).max(0.0);
        let (v_hi, _) = self.v_tilde(tau_sq + h)?;
        let (v_lo, _) = self.v_tilde(lo)?;
        Ok((v_hi - v_lo) / (tau_sq + h - lo))
    }

    /// Predictions attached to a state `(τ², b)`.
    pub fn predict(&self, tau_sq: f64, b: f64, trajectory: &[SeState]) -> PredictionReport {
        PredictionReport {
            mse: predicted_mse(self.delta, tau_sq),
            mae: predicted_mae(self.delta, tau_sq),
            trajectory: trajectory
                .iter()
                .map(|s| TrajectoryPoint {
                    t: s.t,
                    tau_sq: s.tau_sq,
                    b: s.b,
                })
                .collect(),
            residual_law: ResidualLaw {
                noise: self.noise.name.clone(),
                loss: self.loss.to_string(),
                tau: tau_sq.sqrt(),
                b,
            },
        }
    }

    pub fn predict_fixed_point(&self, fp: &FixedPoint) -> PredictionReport {
        self.predict(fp.tau_star_sq, fp.b_star, &[])
    }

    /// `E{η(W + τZ; b)^k}` for the ordinary-residual law.
    pub fn residual_moment(&self, tau: f64, b: f64, k: i32) -> f64 {
        let kinks = self.loss.effective_kinks(b);
        self.noise
            .smoothed_expectation(tau, |x| self.loss.eta_residual(x, b).powi(k), &kinks, &self.quad)
    }

    /// `(τ², Ṽ(τ²), b(τ))` on a grid, for plotting the variance map.
    pub fn variance_map_curve(&self, grid: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
        if grid.is_empty() {
            return Err(Error::invalid("variance-map grid is empty"));
        }
        grid.iter().map(|&x| self.v_tilde(x).map(|(v, b)| (x, v, b))).collect()
    }
}

/// `MSE ≈ δ τ²`.
pub fn predicted_mse(delta: f64, tau_sq: f64) -> f64 {
    delta * tau_sq
}

/// `MAE ≈ √(2 δ τ² / π)`.
pub fn predicted_mae(delta: f64, tau_sq: f64) -> f64 {
    (2.0 * delta * tau_sq / std::f64::consts::PI).sqrt()
}
