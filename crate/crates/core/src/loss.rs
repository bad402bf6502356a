//! Smooth convex losses and their Moreau-regularised score family.
//!
//! For a loss `ρ` with score `ψ = ρ′` and `b > 0`:
//!
//! * `prox(z; b) = argmin_x { ρ(x) + (x − z)² / (2b) }`, the unique solution of
//!   `x + b ψ(x) = z`;
//! * `Ψ(z; b) = z − prox(z; b) = b ψ(prox(z; b))`, the effective score;
//! * `∂Ψ/∂z = b ψ′(x) / (1 + b ψ′(x))` at `x = prox(z; b)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROX_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Loss {
    /// `z²/2`.
    Squared,
    /// `z²/2` on `|z| ≤ λ`, `λ|z| − λ²/2` outside.
    Huber { lambda: f64 },
    /// Huber plus `ridge · z²/2`; strongly convex for `ridge > 0`.
    HuberRidge { lambda: f64, ridge: f64 },
    /// `s² log cosh(z/s)`; smooth, with `inf ρ″ = 0`.
    LogCosh { scale: f64 },
}

impl Loss {
    pub fn huber(lambda: f64) -> Result<Self> {
        Loss::Huber { lambda }.validated()
    }

    pub fn huber_ridge(lambda: f64, ridge: f64) -> Result<Self> {
        Loss::HuberRidge { lambda, ridge }.validated()
    }

    pub fn log_cosh(scale: f64) -> Result<Self> {
        Loss::LogCosh { scale }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        let ok = match self {
            Loss::Squared => true,
            Loss::Huber { lambda } => lambda > 0.0 && lambda.is_finite(),
            Loss::HuberRidge { lambda, ridge } => {
                lambda > 0.0 && lambda.is_finite() && ridge >= 0.0 && ridge.is_finite()
            }
            Loss::LogCosh { scale } => scale > 0.0 && scale.is_finite(),
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::invalid(format!("loss parameters out of range: {self:?}")))
        }
    }

    /// `(λ, κ)` for the Huber family; `κ` is the ridge weight.
    fn huber_parts(&self) -> Option<(f64, f64)> {
        match *self {
            Loss::Huber { lambda } => Some((lambda, 0.0)),
            Loss::HuberRidge { lambda, ridge } => Some((lambda, ridge)),
            _ => None,
        }
    }

    pub fn rho(&self, z: f64) -> f64 {
        match *self {
            Loss::Squared => 0.5 * z * z,
            Loss::LogCosh { scale } => {
                // log cosh(u) = |u| + log(1 + e^{−2|u|}) − log 2, stable for large |u|.
                let u = (z / scale).abs();
                scale * scale * (u + (-2.0 * u).exp().ln_1p() - std::f64::consts::LN_2)
            }
            _ => {
                let (lambda, ridge) = self.huber_parts().unwrap();
                let a = z.abs();
                let h = if a <= lambda {
                    0.5 * z * z
                } else {
                    lambda * a - 0.5 * lambda * lambda
                };
                h + 0.5 * ridge * z * z
            }
        }
    }

    pub fn psi(&self, z: f64) -> f64 {
        match *self {
            Loss::Squared => z,
            Loss::LogCosh { scale } => scale * (z / scale).tanh(),
            _ => {
                let (lambda, ridge) = self.huber_parts().unwrap();
                z.clamp(-lambda, lambda) + ridge * z
            }
        }
    }

    /// a.e. derivative of `ψ`; at the Huber kinks `|z| = λ` the inner branch
    /// is used.
    pub fn psi_prime(&self, z: f64) -> f64 {
        match *self {
            Loss::Squared => 1.0,
            Loss::LogCosh { scale } => {
                let s = 1.0 / (z / scale).cosh();
                s * s
            }
            _ => {
                let (lambda, ridge) = self.huber_parts().unwrap();
                if z.abs() <= lambda {
                    1.0 + ridge
                } else {
                    ridge
                }
            }
        }
    }

    pub fn psi_prime_sup(&self) -> f64 {
        match *self {
            Loss::Squared | Loss::LogCosh { .. } => 1.0,
            _ => 1.0 + self.huber_parts().unwrap().1,
        }
    }

    pub fn curvature_inf(&self) -> f64 {
        match *self {
            Loss::Squared => 1.0,
            Loss::LogCosh { .. } | Loss::Huber { .. } => 0.0,
            Loss::HuberRidge { ridge, .. } => ridge,
        }
    }

    pub fn is_strongly_convex(&self) -> bool {
        self.curvature_inf() > 0.0
    }

    /// Points where `ψ′` jumps.
    pub fn score_kinks(&self) -> Vec<f64> {
        match self.huber_parts() {
            Some((lambda, _)) => vec![-lambda, lambda],
            None => Vec::new(),
        }
    }

    /// Points where `∂Ψ(·; b)/∂z` jumps.
    pub fn effective_kinks(&self, b: f64) -> Vec<f64> {
        match self.huber_parts() {
            Some((lambda, ridge)) => {
                let k = lambda * (1.0 + b * (1.0 + ridge));
                vec![-k, k]
            }
            None => Vec::new(),
        }
    }

    /// `prox(z; b)`, reporting non-convergence of the safeguarded Newton
    /// iteration used for losses without a closed form.
    pub fn try_prox(&self, z: f64, b: f64) -> Result<f64> {
        if !(b >= 0.0) {
            return Err(Error::invalid(format!("prox needs b >= 0, got {b}")));
        }
        if b == 0.0 {
            return Ok(z);
        }
        match *self {
            Loss::Squared => Ok(z / (1.0 + b)),
            Loss::LogCosh { .. } => self.newton_prox(z, b),
            _ => {
                let (lambda, ridge) = self.huber_parts().unwrap();
                let inner = 1.0 + b * (1.0 + ridge);
                if z.abs() <= lambda * inner {
                    Ok(z / inner)
                } else {
                    Ok((z - (b * lambda).copysign(z)) / (1.0 + b * ridge))
                }
            }
        }
    }

    /// `prox(z; b)`. The Newton path is bracketed, so the fallback value
    /// after the iteration cap is within bisection accuracy of the root.
    pub fn prox(&self, z: f64, b: f64) -> f64 {
        match self.try_prox(z, b) {
            Ok(x) => x,
            Err(Error::Convergence(_)) => self.bisect_prox(z, b),
            Err(e) => panic!("{e}"),
        }
    }

    fn prox_bracket(&self, z: f64, b: f64) -> (f64, f64) {
        let spread = b * self.psi_prime_sup() * z.abs() + 1.0;
        (z - spread, z + spread)
    }

    fn newton_prox(&self, z: f64, b: f64) -> Result<f64> {
        let g = |x: f64| x + b * self.psi(x) - z;
        let (mut lo, mut hi) = self.prox_bracket(z, b);
        let tol = 1e-12 * (1.0 + z.abs());
        let mut x = z / (1.0 + b * self.psi_prime(z));
        for _ in 0..PROX_MAX_ITER {
            let gx = g(x);
            if gx.abs() <= tol {
                return Ok(x);
            }
            if gx > 0.0 {
                hi = hi.min(x);
            } else {
                lo = lo.max(x);
            }
            let step = gx / (1.0 + b * self.psi_prime(x));
            let mut next = x - step;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= f64::EPSILON * (1.0 + x.abs()) {
                return Ok(next);
            }
            x = next;
        }
        Err(Error::Convergence(format!("prox Newton iteration at z = {z}, b = {b}")))
    }

    fn bisect_prox(&self, z: f64, b: f64) -> f64 {
        let (mut lo, mut hi) = self.prox_bracket(z, b);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid + b * self.psi(mid) - z > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Effective score `Ψ(z; b) = z − prox(z; b)`.
    pub fn psi_eff(&self, z: f64, b: f64) -> f64 {
        z - self.prox(z, b)
    }

    /// `∂Ψ(z; b)/∂z ∈ [0, 1)`.
    pub fn psi_eff_prime(&self, z: f64, b: f64) -> f64 {
        if b == 0.0 {
            return 0.0;
        }
        let c = b * self.psi_prime(self.prox(z, b));
        c / (1.0 + c)
    }

    /// Ordinary-residual map `η(z; b) = z − Ψ(z; b) = prox(z; b)`.
    pub fn eta_residual(&self, z: f64, b: f64) -> f64 {
        self.prox(z, b)
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Loss::Squared => write!(f, "squared"),
            Loss::Huber { lambda } => write!(f, "huber:{lambda}"),
            Loss::HuberRidge { lambda, ridge } => write!(f, "huber-ridge:{lambda},{ridge}"),
            Loss::LogCosh { scale } => write!(f, "logcosh:{scale}"),
        }
    }
}

impl FromStr for Loss {
    type Err = Error;

    /// `squared`, `huber:λ`, `huber-ridge:λ,κ` or `logcosh:s`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let nums = args
            .split(',')
            .filter(|a| !a.trim().is_empty())
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse("loss", s, e.to_string()))?;
        let loss = match (name.to_ascii_lowercase().as_str(), nums.as_slice()) {
            ("squared", []) => Loss::Squared,
            ("huber", [lambda]) => Loss::Huber { lambda: *lambda },
            ("huber-ridge", [lambda, ridge]) => Loss::HuberRidge {
                lambda: *lambda,
                ridge: *ridge,
            },
            ("logcosh", [scale]) => Loss::LogCosh { scale: *scale },
            _ => {
                return Err(Error::parse(
                    "loss",
                    s,
                    "expected squared, huber:L, huber-ridge:L,K or logcosh:S",
                ))
            }
        };
        loss.validated().map_err(|e| Error::parse("loss", s, e.to_string()))
    }
}
