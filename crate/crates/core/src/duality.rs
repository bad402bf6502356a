//! M-estimation with `p < n` as penalised least squares on the orthogonal
//! complement of the design.
//!
//! With `X̃` spanning `image(X)^⊥` and `Ỹ = X̃Y`,
//! `min_θ Σ ρ_J(Yᵢ − ⟨Xᵢ, θ⟩) = min_β ½‖Ỹ − X̃β‖² + Σ J(βᵢ)` where
//! `ρ_J(z) = min_x ½(z − x)² + J(x)`. For `J = λ|·|` this is Huber versus
//! the Lasso; the solutions are linked by `θ = LS(X, Y − β)` and
//! `β = Y − Xθ − ψ(Y − Xθ)`.

use serde::{Deserialize, Serialize};

use crate::amp::fixed_point_check;
use crate::baseline::m_estimate;
use crate::error::{Error, Result};
use crate::harness::{ProblemInstance, SignalSpec};
use crate::loss::Loss;
use crate::noise::NoiseModel;
use crate::numerics::{least_squares_solve, qr_orthocomplement, Matrix, Vector};

pub const DEFAULT_LASSO_TOL: f64 = 1e-13;
pub const DEFAULT_LASSO_MAX_ITERS: usize = 200_000;

/// Stationarity required of a Huber estimate before mapping it to the Lasso.
const STATIONARITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct DualInstance {
    pub y_tilde: Vector,
    pub x_tilde: Matrix,
    pub lambda: f64,
}

impl DualInstance {
    pub fn lasso_objective(&self, beta: &Vector) -> f64 {
        0.5 * (&self.y_tilde - &self.x_tilde * beta).norm_squared() + self.lambda * beta.lp_norm(1)
    }

    /// Largest violation of the Lasso subgradient conditions at `β`.
    pub fn kkt_residual(&self, beta: &Vector) -> f64 {
        let corr = self.x_tilde.tr_mul(&(&self.y_tilde - &self.x_tilde * beta));
        corr.iter()
            .zip(beta.iter())
            .map(|(&g, &b)| {
                if b != 0.0 {
                    (g - self.lambda * b.signum()).abs()
                } else {
                    (g.abs() - self.lambda).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }
}

pub fn build_dual(x: &Matrix, y: &Vector, lambda: f64) -> Result<DualInstance> {
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    if y.len() != x.nrows() {
        return Err(Error::invalid("Y length does not match the design"));
    }
    let x_tilde = qr_orthocomplement(x)?;
    Ok(DualInstance {
        y_tilde: &x_tilde * y,
        x_tilde,
        lambda,
    })
}

/// `sign(x) (|x| − α)₊`.
pub fn soft_threshold(x: f64, alpha: f64) -> f64 {
    if x > alpha {
        x - alpha
    } else if x < -alpha {
        x + alpha
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct LassoSolution {
    pub beta: Vector,
    pub sweeps: usize,
    pub objective: f64,
    pub kkt_residual: f64,
}

/// Cyclic coordinate descent until the largest coordinate change in a sweep
/// is at most `tol`.
pub fn lasso_solve(dual: &DualInstance, tol: f64, max_iters: usize) -> Result<LassoSolution> {
    let x = &dual.x_tilde;
    let n = x.ncols();
    let col_sq: Vec<f64> = x.column_iter().map(|c| c.norm_squared()).collect();
    let mut beta = Vector::zeros(n);
    let mut resid = dual.y_tilde.clone();
    for sweep in 1..=max_iters {
        let mut max_change = 0.0f64;
        for j in 0..n {
            if col_sq[j] <= 1e-300 {
                continue;
            }
            let col = x.column(j);
            let old = beta[j];
            let rho = col.dot(&resid) + col_sq[j] * old;
            let new = soft_threshold(rho, dual.lambda) / col_sq[j];
            if new != old {
                resid.axpy(old - new, &col, 1.0);
                beta[j] = new;
                max_change = max_change.max((new - old).abs());
            }
        }
        if max_change <= tol {
            return Ok(LassoSolution {
                objective: dual.lasso_objective(&beta),
                kkt_residual: dual.kkt_residual(&beta),
                beta,
                sweeps: sweep,
            });
        }
    }
    Err(Error::Solver(format!(
        "coordinate descent did not converge in {max_iters} sweeps"
    )))
}

/// Closed-form minimiser of `½‖Ỹ − X̃β‖² + (κ/2)‖β‖²`.
pub fn ridge_solve(dual: &DualInstance, kappa: f64) -> Result<Vector> {
    let x = &dual.x_tilde;
    let mut gram = x.tr_mul(x);
    for i in 0..gram.nrows() {
        gram[(i, i)] += kappa;
    }
    gram.cholesky()
        .map(|c| c.solve(&x.tr_mul(&dual.y_tilde)))
        .ok_or_else(|| Error::Matrix("ridge system is not positive definite".into()))
}

/// `θ = argmin ‖(Y − β) − Xθ‖`.
pub fn huber_from_lasso(x: &Matrix, y: &Vector, beta: &Vector) -> Result<Vector> {
    if beta.len() != y.len() {
        return Err(Error::invalid("beta length does not match Y"));
    }
    least_squares_solve(x, &(y - beta))
}

/// `β = Y − Xθ − ψ(Y − Xθ)` for a stationary Huber estimate `θ`.
pub fn lasso_from_huber(x: &Matrix, y: &Vector, theta: &Vector, lambda: f64) -> Result<Vector> {
    let loss = Loss::huber(lambda)?;
    let r = y - x * theta;
    let u = r.map(|v| loss.psi(v));
    let stationarity = x.tr_mul(&u).norm() / (x.ncols() as f64).sqrt();
    if stationarity > STATIONARITY_TOL {
        return Err(Error::Precondition(format!(
            "theta is not a Huber minimiser: ‖Xᵀψ‖/√p = {stationarity:e}"
        )));
    }
    Ok(r - u)
}

/// `ρ_J(z) = min_x ½(z − x)² + λ|x|`, attained at the soft threshold.
pub fn moreau_l1(z: f64, lambda: f64) -> f64 {
    let x = soft_threshold(z, lambda);
    0.5 * (z - x).powi(2) + lambda * x.abs()
}

/// `ρ_J(z)` for `J(x) = κx²/2`: `κ z² / (2(1 + κ))`.
pub fn moreau_quadratic(z: f64, kappa: f64) -> f64 {
    kappa * z * z / (2.0 * (1.0 + kappa))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityRecord {
    pub huber_objective: f64,
    pub lasso_objective: f64,
    pub roundtrip_error: f64,
    pub kkt_residual: f64,
}

/// Solves Huber(λ) by Newton and Lasso(λ) by coordinate descent on the same
/// data and compares them. `roundtrip_error` is the larger of
/// `‖θ̂ − H(L(θ̂))‖_∞` and `‖β̂ − L(H(β̂))‖_∞`.
pub fn compare(instance: &ProblemInstance, lambda: f64) -> Result<DualityRecord> {
    let loss = Loss::huber(lambda)?;
    let (x, y) = (&instance.x, &instance.y);
    let theta = m_estimate(instance, &loss, 1e-12, 200)?.theta;
    let dual = build_dual(x, y, lambda)?;
    let lasso = lasso_solve(&dual, DEFAULT_LASSO_TOL, DEFAULT_LASSO_MAX_ITERS)?;

    let beta_from_theta = lasso_from_huber(x, y, &theta, lambda)?;
    let theta_back = huber_from_lasso(x, y, &beta_from_theta)?;
    let theta_from_beta = huber_from_lasso(x, y, &lasso.beta)?;
    let beta_back = if fixed_point_check(&theta_from_beta, instance, &loss) <= STATIONARITY_TOL {
        lasso_from_huber(x, y, &theta_from_beta, lambda)?
    } else {
        // Report the mismatch instead of failing the comparison.
        let r = y - x * &theta_from_beta;
        &r - r.map(|v| loss.psi(v))
    };
    let roundtrip_error = (&theta - theta_back).amax().max((&lasso.beta - beta_back).amax());

    let huber_objective = (y - x * &theta).iter().map(|&r| loss.rho(r)).sum();
    Ok(DualityRecord {
        huber_objective,
        lasso_objective: lasso.objective,
        roundtrip_error,
        kkt_residual: lasso.kkt_residual,
    })
}

/// The `duality-check` experiment: Gaussian design, unit-norm signal,
/// contaminated-normal noise.
pub fn duality_check(n: usize, p: usize, lambda: f64, seed: u64) -> Result<DualityRecord> {
    let noise = NoiseModel::contaminated_normal(0.1, 10.0)?;
    let instance = ProblemInstance::generate(n, p, &noise, &SignalSpec::Sphere { norm_per_sqrt_p: 1.0 }, seed)?;
    compare(&instance, lambda)
}
