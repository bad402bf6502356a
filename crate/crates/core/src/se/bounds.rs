//! Information lower bounds on the SE variance.

use serde::{Deserialize, Serialize};

use crate::noise::NoiseModel;

/// Lower bounds on `τ_t²` implied by the Fisher information `I` of the noise:
/// `τ_t² ≥ Σ_{j<t} δ^{−j} / (δ I)` and, in the limit, `τ*² ≥ 1/((δ−1) I)`.
///
/// When `I = ∞` (the noise has an atom) the bounds are trivially zero and
/// `degenerate` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBounds {
    pub delta: f64,
    /// `None` when infinite.
    pub fisher_information: Option<f64>,
    pub degenerate: bool,
    pub first_step: f64,
    pub second_step: f64,
    pub accumulation: f64,
}

impl LowerBounds {
    pub fn new(noise: &NoiseModel, delta: f64) -> Self {
        Self::from_information(noise.fisher_information(), delta)
    }

    pub fn from_information(information: f64, delta: f64) -> Self {
        let degenerate = !information.is_finite();
        let mut out = LowerBounds {
            delta,
            fisher_information: (!degenerate).then_some(information),
            degenerate,
            first_step: 0.0,
            second_step: 0.0,
            accumulation: 0.0,
        };
        if !degenerate {
            out.first_step = out.at_iteration(1);
            out.second_step = out.at_iteration(2);
            out.accumulation = out.limit();
        }
        out
    }

    /// Bound on `τ_t²` after `t` iterations (zero at `t = 0`).
    pub fn at_iteration(&self, t: usize) -> f64 {
        match self.fisher_information {
            None => 0.0,
            Some(info) => {
                let sum: f64 = (0..t).map(|j| self.delta.powi(-(j as i32))).sum();
                sum / (self.delta * info)
            }
        }
    }

    /// Bound on any accumulation point of the SE recursion.
    pub fn limit(&self) -> f64 {
        match self.fisher_information {
            Some(info) if self.delta > 1.0 => 1.0 / ((self.delta - 1.0) * info),
            Some(_) => f64::INFINITY,
            None => 0.0,
        }
    }
}
