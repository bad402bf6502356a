//! Shared numerical kernels: quadrature, root finding, random streams and
//! dense linear algebra.

pub mod linalg;
pub mod quadrature;
pub mod rng;
pub mod roots;

pub use linalg::{least_squares_solve, qr_orthocomplement, serde_vector, spd_sqrt_pair, HouseholderQr, Matrix, Vector};
pub use quadrature::{gauss_hermite, gauss_legendre, trapezoid, Quadrature, QuadratureRule, RuleKind};
pub use rng::RngStream;
pub use roots::{find_root_bracketed, find_root_with, smallest_root_scan, smallest_root_scan_with, RootOptions};

/// Bracket search for the smallest root of an increasing-on-average function
/// with `f(0) < 0`: scan `[0, hi]` on `grid` intervals, doubling `hi` from
/// `hi_start` until a sign change appears or `hi` exceeds `hi_max`.
pub fn smallest_root_doubling(
    mut f: impl FnMut(f64) -> f64,
    hi_start: f64,
    hi_max: f64,
    grid: usize,
    opts: RootOptions,
) -> Option<f64> {
    let mut lo = 0.0;
    let mut hi = hi_start;
    while hi <= hi_max {
        match smallest_root_scan_with(&mut f, lo, hi, grid, opts) {
            Ok(root) => return Some(root),
            Err(_) => {
                lo = hi;
                hi *= 2.0;
            }
        }
    }
    None
}
