//! Two-time covariance of the SE Gaussian process at the fixed point.

use super::{FixedPoint, StateEvolution};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

impl StateEvolution {
    /// `E{Ψ(W + U₁; b) Ψ(W + U₂; b)}` for `(U₁, U₂)` centred normal with
    /// covariance `[[v1, c], [c, v2]]`, independent of `W`.
    pub fn score_cross_moment(&self, b: f64, v1: f64, v2: f64, c: f64) -> f64 {
        let kinks = self.loss.effective_kinks(b);
        let psi = |x1: f64, x2: f64| self.loss.psi_eff(x1, b) * self.loss.psi_eff(x2, b);
        let gaussian: f64 = self
            .noise
            .gaussian_components
            .iter()
            .map(|g| {
                let s2 = g.sd * g.sd;
                g.weight
                    * self
                        .quad
                        .bivariate((g.mean, g.mean), s2 + v1, s2 + v2, s2 + c, psi, &kinks, &kinks)
            })
            .sum();
        let atoms: f64 = self
            .noise
            .atoms
            .iter()
            .map(|a| {
                a.weight
                    * self
                        .quad
                        .bivariate((a.location, a.location), v1, v2, c, psi, &kinks, &kinks)
            })
            .sum();
        gaussian + atoms
    }

    /// The `(T+1)×(T+1)` matrix `Γ` with `Γ₀₀ = τ*²`, `Γ₀ₜ = 0` for `t ≥ 1`
    /// and `Γ_{t+1,s+1} = δ E{Ψ(W + Z_t; b*) Ψ(W + Z_s; b*)}`, where
    /// `(Z_t, Z_s)` is centred normal with covariance drawn from `Γ`.
    pub fn gamma_recursion(&self, fp: &FixedPoint, horizon: usize) -> Matrix {
        let n = horizon + 1;
        let mut gamma = Matrix::zeros(n, n);
        gamma[(0, 0)] = fp.tau_star_sq;
        for i in 1..n {
            for j in 1..=i {
                let (t, s) = (i - 1, j - 1);
                let v = self.delta * self.score_cross_moment(fp.b_star, gamma[(t, t)], gamma[(s, s)], gamma[(t, s)]);
                gamma[(i, j)] = v;
                gamma[(j, i)] = v;
            }
        }
        gamma
    }

    /// `H(q) = (δ/τ*²) E{Ψ(W + τ*Z₁; b*) Ψ(W + τ*Z₂; b*)}` with
    /// `corr(Z₁, Z₂) = q`. `H(1) = 1` at the fixed point.
    pub fn h_map(&self, fp: &FixedPoint, q: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&q) {
            return Err(Error::invalid(format!("correlation must lie in [-1, 1], got {q}")));
        }
        if fp.tau_star_sq <= 0.0 {
            return Err(Error::invalid("H is undefined when tau*^2 = 0"));
        }
        let t2 = fp.tau_star_sq;
        Ok(self.delta / t2 * self.score_cross_moment(fp.b_star, t2, t2, q * t2))
    }

    /// `H′(1) = δ E{Ψ′(W + τ*Z; b*)²}`.
    pub fn h_slope_at_one(&self, fp: &FixedPoint) -> f64 {
        let b = fp.b_star;
        let kinks = self.loss.effective_kinks(b);
        self.delta
            * self.noise.smoothed_expectation(
                fp.tau_star_sq.sqrt(),
                |x| self.loss.psi_eff_prime(x, b).powi(2),
                &kinks,
                &self.quad,
            )
    }
}
