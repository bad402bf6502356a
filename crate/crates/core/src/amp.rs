//! Approximate message passing for M-estimation.
//!
//! ```text
//! Rᵗ      = Y − X θᵗ + Ψ(Rᵗ⁻¹; b_{t−1})          (R⁻¹ = 0)
//! b_t     : smallest root of (1/n) Σ Ψ′(Rᵗᵢ; b) = 1/δ
//! θᵗ⁺¹    = θᵗ + δ Xᵀ Ψ(Rᵗ; b_t)
//! ```
//!
//! Fixed points of the iteration are minimizers of `Σ ρ(Yᵢ − ⟨Xᵢ, θ⟩)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::ProblemInstance;
use crate::loss::Loss;
use crate::numerics::{smallest_root_doubling, RootOptions, Vector};
use crate::se::{StateEvolution, CALIBRATION_B_MAX, CALIBRATION_B_START, CALIBRATION_GRID};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 200;

/// How `b_t` is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmpMode {
    /// Calibrate on the current adjusted residuals.
    Empirical,
    /// Use a precomputed sequence (typically SE's `b(τ_t)`); the last entry
    /// is repeated once the sequence runs out.
    Analytic(Vec<f64>),
}

/// AMP state after `t` steps: `theta = θᵗ`, `resid_adj = Rᵗ⁻¹`, `b = b_{t−1}`.
#[derive(Debug, Clone)]
pub struct AmpState {
    pub t: usize,
    pub theta: Vector,
    pub resid_adj: Vector,
    pub b: f64,
    /// `|(1/n) Σ Ψ′(Rᵗ⁻¹; b_{t−1}) − 1/δ|` for the last calibration.
    pub calibration_residual: f64,
}

impl AmpState {
    pub fn initial(theta: Vector, n: usize) -> Self {
        AmpState {
            t: 0,
            theta,
            resid_adj: Vector::zeros(n),
            b: 1.0,
            calibration_residual: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmpIterate {
    pub t: usize,
    pub b: f64,
    pub rmse_truth: f64,
    /// `None` when no reference M-estimate was supplied.
    pub rmse_mest: Option<f64>,
    pub grad_norm: f64,
    /// `‖θᵗ − θ₀‖₂ / √n`.
    pub tau_hat: f64,
    /// `‖θᵗ − θ₀‖₂² / p`.
    pub mse: f64,
    /// `‖θᵗ − θ₀‖₁ / p`.
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmpReport {
    pub trajectory: Vec<AmpIterate>,
    pub converged: bool,
    pub iterations: usize,
    pub final_b: f64,
    pub final_gradient_norm: f64,
    pub final_rmse_truth: f64,
    /// `‖θ⁰ − θ₀‖² / n`, the matching SE starting point.
    pub tau0_sq: f64,
    pub theta: Vec<f64>,
}

impl AmpReport {
    /// Trajectory as CSV with columns `t,b,rmse_truth,rmse_mest,grad_norm`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "b", "rmse_truth", "rmse_mest", "grad_norm"])?;
        for it in &self.trajectory {
            w.write_record([
                it.t.to_string(),
                it.b.to_string(),
                it.rmse_truth.to_string(),
                it.rmse_mest.map(|v| v.to_string()).unwrap_or_default(),
                it.grad_norm.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Smallest `b > 0` with `(1/n) Σ Ψ′(rᵢ; b) = 1/δ`, scanning from `[0, hi]`.
pub fn calibrate_empirical(loss: &Loss, resid: &Vector, delta: f64, hi_start: f64) -> Result<(f64, f64)> {
    if !(delta > 1.0) {
        return Err(Error::invalid(format!("AMP needs delta > 1, got {delta}")));
    }
    let n = resid.len() as f64;
    let target = 1.0 / delta;
    let slope = |b: f64| resid.iter().map(|&r| loss.psi_eff_prime(r, b)).sum::<f64>() / n - target;
    let opts = RootOptions {
        xtol: 1e-13,
        ftol: 1e-14,
        max_iter: 300,
    };
    let b = smallest_root_doubling(slope, hi_start, CALIBRATION_B_MAX, CALIBRATION_GRID, opts).ok_or(
        Error::Calibration {
            b_max: CALIBRATION_B_MAX,
        },
    )?;
    Ok((b, slope(b).abs()))
}

/// `‖Xᵀ ψ(Y − Xθ)‖₂ / √p`.
pub fn fixed_point_check(theta: &Vector, instance: &ProblemInstance, loss: &Loss) -> f64 {
    let resid = &instance.y - &instance.x * theta;
    let score = resid.map(|r| loss.psi(r));
    instance.x.tr_mul(&score).norm() / (instance.p() as f64).sqrt()
}

/// One AMP step from `state` (which holds `θᵗ`, `Rᵗ⁻¹`, `b_{t−1}`).
pub fn amp_step(state: &AmpState, instance: &ProblemInstance, loss: &Loss, mode: &AmpMode) -> Result<AmpState> {
    let (n, p) = (instance.n(), instance.p());
    if state.theta.len() != p || state.resid_adj.len() != n {
        return Err(Error::invalid("AMP state does not match the instance dimensions"));
    }
    let delta = instance.delta;
    let memory = state.resid_adj.map(|r| loss.psi_eff(r, state.b));
    let resid_adj = &instance.y - &instance.x * &state.theta + memory;

    let (b, calibration_residual) = match mode {
        AmpMode::Empirical => {
            let hi = if state.t == 0 {
                CALIBRATION_B_START
            } else {
                2.0 * state.b
            };
            calibrate_empirical(loss, &resid_adj, delta, hi)?
        }
        AmpMode::Analytic(seq) => {
            let b = *seq
                .get(state.t)
                .or(seq.last())
                .ok_or_else(|| Error::invalid("analytic mode needs a nonempty b sequence"))?;
            let mean = resid_adj.iter().map(|&r| loss.psi_eff_prime(r, b)).sum::<f64>() / n as f64;
            (b, (mean - 1.0 / delta).abs())
        }
    };

    let score = resid_adj.map(|r| loss.psi_eff(r, b));
    let theta = &state.theta + instance.x.tr_mul(&score) * delta;
    Ok(AmpState {
        t: state.t + 1,
        theta,
        resid_adj,
        b,
        calibration_residual,
    })
}

/// Runs AMP from `theta_init` until `‖θᵗ⁺¹ − θᵗ‖₂/√p ≤ tol` or `max_iters`.
///
/// Row `t` of the trajectory reports `θᵗ` together with the `b_t` computed
/// from it. `reference` (usually the Newton M-estimate) fills `rmse_mest`.
pub fn amp_run(
    instance: &ProblemInstance,
    loss: &Loss,
    theta_init: &Vector,
    max_iters: usize,
    tol: f64,
    mode: &AmpMode,
    reference: Option<&Vector>,
) -> Result<AmpReport> {
    let (n, p) = (instance.n(), instance.p());
    if theta_init.len() != p {
        return Err(Error::invalid(format!(
            "initial theta has length {}, expected {p}",
            theta_init.len()
        )));
    }
    let sqrt_p = (p as f64).sqrt();
    let observe = |t: usize, theta: &Vector, b: f64| {
        let err = theta - &instance.theta0;
        let sq = err.norm_squared();
        AmpIterate {
            t,
            b,
            rmse_truth: (sq / p as f64).sqrt(),
            rmse_mest: reference.map(|r| (theta - r).norm() / sqrt_p),
            grad_norm: fixed_point_check(theta, instance, loss),
            tau_hat: (sq / n as f64).sqrt(),
            mse: sq / p as f64,
            mae: err.lp_norm(1) / p as f64,
        }
    };

    let tau0_sq = (theta_init - &instance.theta0).norm_squared() / n as f64;
    let mut state = AmpState::initial(theta_init.clone(), n);
    let mut trajectory = Vec::new();
    let mut converged = false;
    while state.t < max_iters {
        let next = amp_step(&state, instance, loss, mode)?;
        trajectory.push(observe(state.t, &state.theta, next.b));
        let step = (&next.theta - &state.theta).norm() / sqrt_p;
        state = next;
        if !step.is_finite() {
            return Err(Error::Convergence(format!("AMP diverged at iteration {}", state.t)));
        }
        if step <= tol {
            converged = true;
            break;
        }
    }
    let last = observe(state.t, &state.theta, state.b);
    trajectory.push(last);
    Ok(AmpReport {
        converged,
        iterations: state.t,
        final_b: state.b,
        final_gradient_norm: last.grad_norm,
        final_rmse_truth: last.rmse_truth,
        tau0_sq,
        theta: state.theta.iter().copied().collect(),
        trajectory,
    })
}

/// SE-calibrated `b_t` for analytic mode: `b(τ_t)` along the SE trajectory
/// started at `τ₀²`.
pub fn analytic_b_sequence(se: &StateEvolution, tau0_sq: f64, steps: usize) -> Result<Vec<f64>> {
    Ok(se.run_fixed(tau0_sq, steps)?.iter().map(|s| s.b).collect())
}
