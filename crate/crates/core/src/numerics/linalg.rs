//! Dense kernels: Householder QR, least squares, orthogonal complements and
//! symmetric matrix square roots.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative pivot size below which a column is treated as dependent.
const RANK_TOL: f64 = 1e-12;

/// Householder QR factorisation `X = Q R` of a tall matrix.
#[derive(Debug, Clone)]
pub struct HouseholderQr {
    rows: usize,
    cols: usize,
    r: Matrix,
    reflectors: Vec<(Vector, f64)>,
}

impl HouseholderQr {
    pub fn new(x: &Matrix) -> Result<Self> {
        let (n, p) = x.shape();
        if n < p || p == 0 {
            return Err(Error::Matrix(format!("QR needs rows >= cols >= 1, got {n}x{p}")));
        }
        let scale = x
            .column_iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut a = x.clone();
        let mut reflectors = Vec::with_capacity(p);
        for j in 0..p {
            let col = a.view((j, j), (n - j, 1)).column(0).into_owned();
            let norm = col.norm();
            if norm <= RANK_TOL * scale {
                return Err(Error::Rank { column: j, pivot: norm });
            }
            let alpha = if col[0] >= 0.0 { -norm } else { norm };
            let mut v = col;
            v[0] -= alpha;
            let vnorm2 = v.norm_squared();
            let tau = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };
            {
                let mut block = a.view_mut((j, j), (n - j, p - j));
                let w = block.tr_mul(&v) * tau;
                block.ger(-1.0, &v, &w, 1.0);
            }
            reflectors.push((v, tau));
        }
        let r = a.view((0, 0), (p, p)).upper_triangle();
        Ok(HouseholderQr {
            rows: n,
            cols: p,
            r,
            reflectors,
        })
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    /// `Qᵀ v`.
    pub fn apply_qt(&self, v: &Vector) -> Vector {
        let mut out = v.clone();
        for (j, (h, tau)) in self.reflectors.iter().enumerate() {
            let mut tail = out.rows_mut(j, self.rows - j);
            let s = tau * h.dot(&tail);
            tail.axpy(-s, h, 1.0);
        }
        out
    }

    /// Least-squares solution of `X θ ≈ v`.
    pub fn solve(&self, v: &Vector) -> Result<Vector> {
        if v.len() != self.rows {
            return Err(Error::Matrix(format!(
                "right-hand side has length {}, expected {}",
                v.len(),
                self.rows
            )));
        }
        let qtv = self.apply_qt(v);
        let head = qtv.rows(0, self.cols).into_owned();
        self.r
            .solve_upper_triangular(&head)
            .ok_or_else(|| Error::Matrix("singular triangular factor".into()))
    }

    /// The last `n − p` rows of `Qᵀ`: an orthonormal basis of the orthogonal
    /// complement of `image(X)`, stored as rows.
    pub fn orthocomplement(&self) -> Matrix {
        let (n, p) = (self.rows, self.cols);
        let mut qt = Matrix::identity(n, n);
        for (j, (h, tau)) in self.reflectors.iter().enumerate() {
            let mut block = qt.view_mut((j, 0), (n - j, n));
            let w = block.tr_mul(h) * *tau;
            block.ger(-1.0, h, &w, 1.0);
        }
        qt.rows(p, n - p).into_owned()
    }
}

/// `X̃` with orthonormal rows spanning `image(X)^⊥`: `X̃ X̃ᵀ = I`, `X̃ X = 0`.
pub fn qr_orthocomplement(x: &Matrix) -> Result<Matrix> {
    let (n, p) = x.shape();
    if n <= p {
        return Err(Error::invalid(format!("orthocomplement needs n > p, got {n}x{p}")));
    }
    Ok(HouseholderQr::new(x)?.orthocomplement())
}

/// `argmin_θ ‖v − Xθ‖₂` through Householder QR.
pub fn least_squares_solve(x: &Matrix, v: &Vector) -> Result<Vector> {
    HouseholderQr::new(x)?.solve(v)
}

/// `(Σ^{1/2}, Σ^{-1/2})` for a symmetric positive definite `Σ`.
pub fn spd_sqrt_pair(sigma: &Matrix) -> Result<(Matrix, Matrix)> {
    let p = sigma.nrows();
    if sigma.ncols() != p {
        return Err(Error::Matrix(format!(
            "covariance must be square, got {:?}",
            sigma.shape()
        )));
    }
    let asym = (sigma - sigma.transpose()).amax();
    if asym > 1e-10 * sigma.amax().max(1.0) {
        return Err(Error::Matrix(format!(
            "covariance is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let eig = SymmetricEigen::new(sigma.clone());
    let max_ev = eig.eigenvalues.amax();
    if eig
        .eigenvalues
        .iter()
        .any(|&l| !(l > 1e-14 * max_ev.max(f64::MIN_POSITIVE)))
    {
        return Err(Error::Matrix("covariance is not strictly positive definite".into()));
    }
    let q = &eig.eigenvectors;
    let root = Matrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let inv_root = Matrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok((q * root * q.transpose(), q * inv_root * q.transpose()))
}

/// Serde adapter writing a [`Vector`] as a plain JSON array.
pub mod serde_vector {
    use super::Vector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        Ok(Vector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}
