//! Direct M-estimation by damped Newton, the classical asymptotic variance
//! `V(ψ, F) = E ψ² / (E ψ′)²`, and whitening of general Gaussian designs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::ProblemInstance;
use crate::loss::Loss;
use crate::noise::NoiseModel;
use crate::numerics::{serde_vector, spd_sqrt_pair, Matrix, Quadrature, Vector};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 100;

/// Hessian floor for losses that are not strongly convex.
const RIDGE_FLOOR: f64 = 1e-10;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MEstimate {
    #[serde(with = "serde_vector")]
    pub theta: Vector,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub loss_value: f64,
    /// `L(θ)` after each accepted step, starting with the initial point.
    pub loss_trace: Vec<f64>,
}

fn objective(loss: &Loss, x: &Matrix, y: &Vector, theta: &Vector) -> (f64, Vector) {
    let r = y - x * theta;
    (r.iter().map(|&v| loss.rho(v)).sum(), r)
}

fn gradient_norm(loss: &Loss, x: &Matrix, r: &Vector) -> (Vector, f64) {
    let g = -x.tr_mul(&r.map(|v| loss.psi(v)));
    let norm = g.norm() / (x.ncols() as f64).sqrt();
    (g, norm)
}

/// Newton direction for `H d = −g` with `H = Xᵀ diag(ψ′(r)) X + ridge·I`,
/// raising the ridge if the factorisation fails.
fn newton_direction(loss: &Loss, x: &Matrix, r: &Vector, g: &Vector) -> Result<Vector> {
    let weights = r.map(|v| loss.psi_prime(v).sqrt());
    let mut scaled = x.clone();
    for (mut row, w) in scaled.row_iter_mut().zip(weights.iter()) {
        row *= *w;
    }
    let hess = scaled.tr_mul(&scaled);
    let scale = hess.diagonal().amax().max(1.0);
    let mut ridge = if loss.is_strongly_convex() { 0.0 } else { RIDGE_FLOOR };
    for _ in 0..12 {
        let mut h = hess.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += ridge;
        }
        if let Some(chol) = h.cholesky() {
            return Ok(chol.solve(&(-g)));
        }
        ridge = if ridge == 0.0 {
            RIDGE_FLOOR * scale
        } else {
            ridge * 100.0
        };
    }
    Err(Error::Solver("Hessian could not be factorised".into()))
}

/// Minimises `Σ ρ(Yᵢ − ⟨Xᵢ, θ⟩)` from `θ = 0` by damped Newton with Armijo
/// backtracking, stopping when `‖∇L‖₂/√p ≤ tol`.
pub fn m_estimate(instance: &ProblemInstance, loss: &Loss, tol: f64, max_iters: usize) -> Result<MEstimate> {
    m_estimate_from(
        &instance.x,
        &instance.y,
        loss,
        &Vector::zeros(instance.p()),
        tol,
        max_iters,
    )
}

pub fn m_estimate_from(
    x: &Matrix,
    y: &Vector,
    loss: &Loss,
    start: &Vector,
    tol: f64,
    max_iters: usize,
) -> Result<MEstimate> {
    let (n, p) = x.shape();
    if n <= p || y.len() != n || start.len() != p {
        return Err(Error::invalid(format!(
            "M-estimation needs n > p and matching shapes, got X {n}x{p}, Y {}, start {}",
            y.len(),
            start.len()
        )));
    }
    let mut theta = start.clone();
    let (mut value, mut r) = objective(loss, x, y, &theta);
    let (mut g, mut gnorm) = gradient_norm(loss, x, &r);
    let mut trace = vec![value];
    let mut iterations = 0;
    while gnorm > tol {
        if iterations == max_iters {
            return Err(Error::Solver(format!(
                "Newton did not reach gradient norm {tol:e} in {max_iters} iterations (at {gnorm:e})"
            )));
        }
        let d = newton_direction(loss, x, &r, &g)?;
        let slope = g.dot(&d);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand = &theta + &d * step;
            let (v, rc) = objective(loss, x, y, &cand);
            if v <= value + ARMIJO * step * slope {
                accepted = Some((cand, v, rc));
                break;
            }
            // Near the optimum L stops resolving the decrease; fall back to
            // the gradient.
            if (v - value).abs() <= 1e-13 * (1.0 + value.abs()) && gradient_norm(loss, x, &rc).1 < gnorm {
                accepted = Some((cand, v.min(value), rc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, v, rc)) = accepted else {
            return Err(Error::Solver(format!(
                "line search failed at iteration {iterations} (gradient norm {gnorm:e})"
            )));
        };
        theta = cand;
        value = v;
        r = rc;
        (g, gnorm) = gradient_norm(loss, x, &r);
        trace.push(value);
        iterations += 1;
    }
    Ok(MEstimate {
        theta,
        gradient_norm: gnorm,
        iterations,
        loss_value: value,
        loss_trace: trace,
    })
}

/// `V(ψ, F) = E ψ(W)² / (E ψ′(W))²`.
pub fn classical_variance(loss: &Loss, noise: &NoiseModel) -> f64 {
    let quad = Quadrature::default();
    let kinks = loss.score_kinks();
    let num = noise.smoothed_expectation(0.0, |w| loss.psi(w).powi(2), &kinks, &quad);
    let den = noise.smoothed_expectation(0.0, |w| loss.psi_prime(w), &kinks, &quad);
    num / (den * den)
}

/// `X Σ^{−1/2}` together with the parameter maps `θ ↦ Σ^{1/2} θ` and back.
#[derive(Debug, Clone)]
pub struct Whitening {
    pub x_standard: Matrix,
    sqrt: Matrix,
    inv_sqrt: Matrix,
}

impl Whitening {
    /// Parameter of the whitened problem: `Σ^{1/2} θ`.
    pub fn to_standard(&self, theta: &Vector) -> Vector {
        &self.sqrt * theta
    }

    /// Parameter of the original problem: `Σ^{−1/2} θ̃`.
    pub fn from_standard(&self, theta: &Vector) -> Vector {
        &self.inv_sqrt * theta
    }
}

pub fn whiten_design(x: &Matrix, sigma: &Matrix) -> Result<Whitening> {
    if sigma.nrows() != x.ncols() {
        return Err(Error::Matrix(format!(
            "covariance is {}x{}, design has {} columns",
            sigma.nrows(),
            sigma.ncols(),
            x.ncols()
        )));
    }
    let (sqrt, inv_sqrt) = spd_sqrt_pair(sigma)?;
    Ok(Whitening {
        x_standard: x * &inv_sqrt,
        sqrt,
        inv_sqrt,
    })
}
