//! Quadrature rules and Gaussian expectation engines.
//!
//! Every expectation in state evolution has the form `E f(m + s Z)` with
//! `Z ~ N(0, 1)`, possibly nested for the two-time correlation diagnostics.
//! Two engines are provided:
//!
//! * [`Quadrature::Hermite`] applies a fixed Gauss–Hermite rule. It is
//!   exponentially accurate for smooth integrands, but an integrand with a
//!   jump (the effective slope of the Huber loss) costs it ~1e-3 of accuracy
//!   and makes the result piecewise constant in the kink location.
//! * [`Quadrature::Composite`] integrates `f(m + s z) φ(z)` over `|z| ≤ z_max`
//!   with Gauss–Legendre panels of unit width, split additionally at the
//!   caller-supplied kink abscissae. On each panel the integrand is smooth, so
//!   piecewise-smooth integrands are handled to ~1e-14.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    /// Nodes and weights for `E f(Z)`, `Z ~ N(0, 1)`; weights sum to one.
    GaussHermite,
    /// Nodes and weights for `∫_{-1}^{1} f(x) dx`.
    GaussLegendre,
    /// Composite trapezoid weights on a uniform grid.
    TrapezoidOnGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub kind: RuleKind,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ wᵢ f(xᵢ)`.
    pub fn apply(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

pub const MAX_HERMITE_ORDER: usize = 512;

/// Gauss–Hermite rule for the standard normal weight, so that
/// `Σ wᵢ f(xᵢ) ≈ E f(Z)`; exact for polynomials of degree `≤ 2·order − 1`.
///
/// Nodes come from the Golub–Welsch eigenproblem and are polished by Newton
/// steps on the orthonormal Hermite polynomial. Weights are Christoffel
/// numbers `1 / Σₖ φₖ(x)²`, accumulated with running rescaling so that large
/// orders do not overflow. Weights that underflow are clamped to the smallest
/// positive normal double.
pub fn gauss_hermite(order: usize) -> Result<QuadratureRule> {
    if !(1..=MAX_HERMITE_ORDER).contains(&order) {
        return Err(Error::invalid(format!(
            "Gauss-Hermite order must be in 1..={MAX_HERMITE_ORDER}, got {order}"
        )));
    }
    if order == 1 {
        return Ok(QuadratureRule {
            nodes: vec![0.0],
            weights: vec![1.0],
            kind: RuleKind::GaussHermite,
        });
    }

    // Jacobi matrix of the probabilists' Hermite recurrence.
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let off = (k as f64).sqrt();
        jacobi[(k - 1, k)] = off;
        jacobi[(k, k - 1)] = off;
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.total_cmp(b));

    let mut weights = Vec::with_capacity(order);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (phi_n, phi_nm1) = hermite_orthonormal_pair(order, *x);
            let step = phi_n / ((order as f64).sqrt() * phi_nm1);
            if step.is_finite() {
                *x -= step;
            }
        }
        weights.push(christoffel_weight(order, *x));
    }
    // Exact symmetry of the rule.
    for i in 0..order / 2 {
        let j = order - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if order % 2 == 1 {
        nodes[order / 2] = 0.0;
    }

    Ok(QuadratureRule {
        nodes,
        weights,
        kind: RuleKind::GaussHermite,
    })
}

/// `(φₙ(x), φₙ₋₁(x))` for the orthonormal probabilists' Hermite polynomials,
/// rescaled by a common positive factor (only the ratio is meaningful).
fn hermite_orthonormal_pair(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..n {
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
        let scale = cur.abs().max(prev.abs());
        if scale > 1e100 {
            cur /= scale;
            prev /= scale;
        }
    }
    (cur, prev)
}

fn christoffel_weight(n: usize, x: f64) -> f64 {
    // Σ_{k<n} φₖ(x)² with the running scale tracked in log space.
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut sum = 1.0;
    let mut log_scale = 0.0f64; // true value = stored · exp(log_scale)
    for k in 0..n - 1 {
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
        sum += cur * cur;
        let scale = cur.abs().max(prev.abs());
        if scale > 1e100 {
            cur /= scale;
            prev /= scale;
            sum /= scale * scale;
            log_scale += scale.ln();
        }
    }
    let log_w = -sum.ln() - 2.0 * log_scale;
    log_w.exp().max(f64::MIN_POSITIVE)
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> Result<QuadratureRule> {
    if order == 0 || order > 1024 {
        return Err(Error::invalid(format!(
            "Gauss-Legendre order must be in 1..=1024, got {order}"
        )));
    }
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule {
        nodes,
        weights,
        kind: RuleKind::GaussLegendre,
    })
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite trapezoid rule with `points` equispaced nodes on `[lo, hi]`.
pub fn trapezoid(lo: f64, hi: f64, points: usize) -> Result<QuadratureRule> {
    if points < 2 || !(hi > lo) {
        return Err(Error::invalid(format!(
            "trapezoid grid needs points >= 2 and lo < hi (got {points} on [{lo}, {hi}])"
        )));
    }
    let h = (hi - lo) / (points - 1) as f64;
    let nodes = (0..points).map(|i| lo + h * i as f64).collect();
    let mut weights = vec![h; points];
    weights[0] = 0.5 * h;
    weights[points - 1] = 0.5 * h;
    Ok(QuadratureRule {
        nodes,
        weights,
        kind: RuleKind::TrapezoidOnGrid,
    })
}

/// Engine for expectations under a (possibly degenerate) normal law.
#[derive(Debug, Clone)]
pub enum Quadrature {
    Hermite(QuadratureRule),
    Composite {
        panel: QuadratureRule,
        z_max: f64,
        width: f64,
    },
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature::composite()
    }
}

impl Quadrature {
    pub const DEFAULT_HERMITE_ORDER: usize = 61;

    pub fn gauss_hermite(order: usize) -> Result<Self> {
        Ok(Quadrature::Hermite(gauss_hermite(order)?))
    }

    /// Unit-width panels of 10-point Gauss–Legendre on `|z| ≤ 9`.
    pub fn composite() -> Self {
        Quadrature::Composite {
            panel: gauss_legendre(10).expect("static order"),
            z_max: 9.0,
            width: 1.0,
        }
    }

    /// `E f(mean + sd·Z)`. `kinks` are abscissae (in the argument of `f`)
    /// where `f` or its derivative may jump; the Hermite engine ignores them.
    pub fn normal(&self, mean: f64, sd: f64, mut f: impl FnMut(f64) -> f64, kinks: &[f64]) -> f64 {
        if sd <= 0.0 {
            return f(mean);
        }
        match self {
            Quadrature::Hermite(rule) => rule.apply(|z| f(mean + sd * z)),
            Quadrature::Composite { panel, z_max, width } => {
                let breaks = panel_breaks(*z_max, *width, kinks.iter().map(|k| (k - mean) / sd));
                let mut total = 0.0;
                for seg in breaks.windows(2) {
                    let half = 0.5 * (seg[1] - seg[0]);
                    let mid = 0.5 * (seg[1] + seg[0]);
                    for (&x, &w) in panel.nodes.iter().zip(&panel.weights) {
                        let z = mid + half * x;
                        total += w * half * INV_SQRT_2PI * (-0.5 * z * z).exp() * f(mean + sd * z);
                    }
                }
                total
            }
        }
    }

    /// `E f(X₁, X₂)` for `(X₁, X₂)` jointly normal with the given means and
    /// covariance `[[var1, cov], [cov, var2]]`, evaluated as an iterated
    /// integral over `X₁` and `X₂ | X₁` (the Cholesky embedding).
    #[allow(clippy::too_many_arguments)]
    pub fn bivariate(
        &self,
        means: (f64, f64),
        var1: f64,
        var2: f64,
        cov: f64,
        mut f: impl FnMut(f64, f64) -> f64,
        kinks1: &[f64],
        kinks2: &[f64],
    ) -> f64 {
        let (m1, m2) = means;
        if var1 <= 0.0 {
            let sd2 = var2.max(0.0).sqrt();
            return self.normal(m2, sd2, |x2| f(m1, x2), kinks2);
        }
        let sd1 = var1.sqrt();
        let slope = cov / var1;
        let cond_sd = (var2 - cov * slope).max(0.0).sqrt();
        self.normal(
            m1,
            sd1,
            |x1| {
                let cm = m2 + slope * (x1 - m1);
                self.normal(cm, cond_sd, |x2| f(x1, x2), kinks2)
            },
            kinks1,
        )
    }
}

fn panel_breaks(z_max: f64, width: f64, kinks: impl Iterator<Item = f64>) -> Vec<f64> {
    let panels = (2.0 * z_max / width).round().max(1.0) as usize;
    let mut breaks: Vec<f64> = (0..=panels)
        .map(|i| -z_max + 2.0 * z_max * i as f64 / panels as f64)
        .collect();
    breaks.extend(kinks.filter(|z| z.is_finite() && z.abs() < z_max));
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    breaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hermite_order_one_is_the_origin() {
        let rule = gauss_hermite(1).unwrap();
        assert_eq!(rule.nodes, vec![0.0]);
        assert_eq!(rule.weights, vec![1.0]);
        assert_eq!(rule.apply(|z| z), 0.0);
    }

    #[test]
    fn hermite_moments() {
        let rule = gauss_hermite(20).unwrap();
        assert_abs_diff_eq!(rule.apply(|z| z * z), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rule.apply(|z| z.powi(4)), 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rule.apply(|z| z.powi(3)), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn hermite_weights_normalised_across_orders() {
        for order in [2, 7, 61, 128, 300, 512] {
            let rule = gauss_hermite(order).unwrap();
            let total: f64 = rule.weights.iter().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            // Degree 2·order − 1 exactness, checked through the sixth moment.
            if order >= 4 {
                assert!((rule.apply(|z| z.powi(6)) - 15.0).abs() < 1e-9, "order {order}");
            }
        }
    }

    #[test]
    fn hermite_rejects_out_of_range_orders() {
        assert!(matches!(gauss_hermite(0), Err(Error::InvalidArgument(_))));
        assert!(matches!(gauss_hermite(513), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let rule = gauss_legendre(10).unwrap();
        assert_abs_diff_eq!(rule.apply(|_| 1.0), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(rule.apply(|x| x.powi(18)), 2.0 / 19.0, epsilon = 1e-14);
    }

    #[test]
    fn composite_handles_a_jump_exactly() {
        // P(|Z| <= 3) = erf(3/√2).
        let q = Quadrature::composite();
        let p = q.normal(0.0, 1.0, |x| if x.abs() <= 3.0 { 1.0 } else { 0.0 }, &[-3.0, 3.0]);
        assert_abs_diff_eq!(p, 0.997_300_203_936_739_8, epsilon = 1e-13);
    }

    #[test]
    fn composite_moments_and_degenerate_sd() {
        let q = Quadrature::composite();
        assert_abs_diff_eq!(q.normal(1.0, 2.0, |x| x * x, &[]), 5.0, epsilon = 1e-13);
        assert_eq!(q.normal(4.0, 0.0, |x| x * x, &[]), 16.0);
    }

    #[test]
    fn bivariate_cross_moment() {
        for q in [Quadrature::composite(), Quadrature::gauss_hermite(61).unwrap()] {
            let v = q.bivariate((0.5, -1.0), 2.0, 3.0, 1.2, |a, b| a * b, &[], &[]);
            assert_abs_diff_eq!(v, 1.2 - 0.5, epsilon = 1e-12);
            // Perfect correlation collapses onto the 1-D rule.
            let v = q.bivariate((0.0, 0.0), 2.0, 2.0, 2.0, |a, b| a * b, &[], &[]);
            assert_abs_diff_eq!(v, 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn trapezoid_rejects_bad_grids() {
        assert!(trapezoid(0.0, 1.0, 1).is_err());
        assert!(trapezoid(1.0, 1.0, 10).is_err());
        let rule = trapezoid(0.0, 1.0, 101).unwrap();
        assert_abs_diff_eq!(rule.apply(|x| x), 0.5, epsilon = 1e-14);
    }
}
