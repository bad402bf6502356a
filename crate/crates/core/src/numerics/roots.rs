//! Bracketed scalar root finding.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    /// Stop once the bracket is narrower than this.
    pub xtol: f64,
    /// Stop once `|f(x)|` is below this.
    pub ftol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            xtol: 1e-10,
            ftol: 1e-12,
            max_iter: 200,
        }
    }
}

impl RootOptions {
    pub fn uniform(tol: f64) -> Self {
        RootOptions {
            xtol: tol,
            ftol: tol,
            ..RootOptions::default()
        }
    }
}

/// Root of `f` in `[lo, hi]` given a sign change, using a single tolerance
/// for both the bracket width and the residual.
pub fn find_root_bracketed(f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    find_root_with(f, lo, hi, RootOptions::uniform(tol))
}

/// Brent's method (inverse quadratic interpolation, secant, bisection).
/// Returns as soon as `|f(x)| ≤ ftol` or the bracket shrinks below `xtol`.
pub fn find_root_with(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, opts: RootOptions) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    find_root_from(&mut f, &mut a, &mut b, &mut fa, &mut fb, opts)
}

fn find_root_from(
    f: &mut impl FnMut(f64) -> f64,
    a: &mut f64,
    b: &mut f64,
    fa: &mut f64,
    fb: &mut f64,
    opts: RootOptions,
) -> Result<f64> {
    if fa.is_nan() || fb.is_nan() || *fa * *fb > 0.0 {
        return Err(Error::Bracket {
            lo: *a,
            hi: *b,
            f_lo: *fa,
            f_hi: *fb,
        });
    }
    if fa.abs() <= opts.ftol {
        return Ok(*a);
    }
    if fb.abs() <= opts.ftol {
        return Ok(*b);
    }

    let (mut c, mut fc) = (*a, *fa);
    let mut d = *b - *a;
    let mut e = d;
    for _ in 0..opts.max_iter {
        if (*fb > 0.0) == (fc > 0.0) {
            c = *a;
            fc = *fa;
            d = *b - *a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            *a = *b;
            *b = c;
            c = *a;
            *fa = *fb;
            *fb = fc;
            fc = *fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * opts.xtol;
        let xm = 0.5 * (c - *b);
        if xm.abs() <= tol1 || fb.abs() <= opts.ftol {
            return Ok(*b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = *fb / *fa;
            let (mut p, mut q);
            if *a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = *fa / fc;
                let r = *fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (*b - *a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        *a = *b;
        *fa = *fb;
        *b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        *fb = f(*b);
    }
    Err(Error::Convergence(format!(
        "Brent iteration exhausted {} steps near x = {}",
        opts.max_iter, b
    )))
}

/// Smallest root of `f` on `[lo, hi]`: scans `grid` equal intervals for the
/// first sign change, then refines it with Brent's method.
pub fn smallest_root_scan(f: impl FnMut(f64) -> f64, lo: f64, hi: f64, grid: usize, tol: f64) -> Result<f64> {
    smallest_root_scan_with(f, lo, hi, grid, RootOptions::uniform(tol))
}

pub fn smallest_root_scan_with(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    grid: usize,
    opts: RootOptions,
) -> Result<f64> {
    if grid < 2 || !(hi > lo) {
        return Err(Error::invalid(format!(
            "scan needs grid >= 2 and lo < hi (got {grid} on [{lo}, {hi}])"
        )));
    }
    let h = (hi - lo) / grid as f64;
    let mut x0 = lo;
    let mut f0 = f(x0);
    let f_lo = f0;
    if f0 == 0.0 {
        return Ok(x0);
    }
    for i in 1..=grid {
        let mut x1 = if i == grid { hi } else { lo + h * i as f64 };
        let mut f1 = f(x1);
        if f1 == 0.0 {
            return Ok(x1);
        }
        if (f0 < 0.0) != (f1 < 0.0) {
            return find_root_from(&mut f, &mut x0, &mut x1, &mut f0, &mut f1, opts);
        }
        x0 = x1;
        f0 = f1;
    }
    Err(Error::Bracket { lo, hi, f_lo, f_hi: f0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn linear_and_sqrt2() {
        assert_abs_diff_eq!(
            find_root_bracketed(|x| x - 1.0, 0.0, 2.0, 1e-10).unwrap(),
            1.0,
            epsilon = 1e-10
        );
        let r = find_root_bracketed(|x| x * x - 2.0, 0.0, 2.0, 1e-10).unwrap();
        assert_abs_diff_eq!(r, std::f64::consts::SQRT_2, epsilon = 1e-10);
    }

    #[test]
    fn slope_calibration_for_squared_loss() {
        // b/(1+b) = 1/δ at δ = 5 ⇒ b = 1/(δ−1).
        let r = find_root_bracketed(|b| b / (1.0 + b) - 0.2, 0.0, 10.0, 1e-12).unwrap();
        assert_abs_diff_eq!(r, 0.25, epsilon = 1e-10);
    }

    #[test]
    fn no_sign_change_is_a_bracket_error() {
        let err = find_root_bracketed(|x| x * x + 1.0, -1.0, 1.0, 1e-10).unwrap_err();
        assert!(matches!(err, Error::Bracket { .. }));
        let err = smallest_root_scan(|x| x * x + 1.0, -1.0, 1.0, 16, 1e-10).unwrap_err();
        assert!(matches!(err, Error::Bracket { .. }));
    }

    #[test]
    fn scan_picks_the_smallest_root() {
        let r = smallest_root_scan(|x| (x - 1.0) * (x - 3.0), 0.0, 4.0, 40, 1e-12).unwrap();
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-10);
        let r = smallest_root_scan(f64::sin, 1.0, 7.0, 100, 1e-12).unwrap();
        assert_abs_diff_eq!(r, std::f64::consts::PI, epsilon = 1e-8);
    }

    #[test]
    fn scan_agrees_with_brent_for_a_unique_root() {
        let f = |x: f64| x.exp() - 3.0;
        let a = smallest_root_scan(f, 0.0, 4.0, 64, 1e-13).unwrap();
        let b = find_root_bracketed(f, 0.0, 4.0, 1e-13).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn discontinuous_function_converges_to_the_jump() {
        let r = find_root_with(|x| if x < 0.3 { -1.0 } else { 1.0 }, 0.0, 1.0, RootOptions::default()).unwrap();
        assert_abs_diff_eq!(r, 0.3, epsilon = 1e-9);
    }
}
