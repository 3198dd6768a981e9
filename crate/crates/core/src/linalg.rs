//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

/// Relative floor on `min_eig / trace` below which a moment matrix is
/// treated as rank deficient.
pub const CONDITION_TOL: f64 = 1e-10;

/// Floor on the diagonal of `R` (after column equilibration) used to detect
/// collinear regressors in [`Projector`].
const RANK_TOL: f64 = 1e-8;

pub fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(sym.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Cholesky factorisation of a symmetric matrix after checking that its
/// smallest eigenvalue clears `CONDITION_TOL * trace`. Returns the factor
/// and the smallest eigenvalue, or `Err(min_eig)` when the check fails.
pub fn checked_cholesky(sym: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64), f64> {
    let min_eig = min_eigenvalue(sym);
    let trace = sym.trace();
    if !(min_eig > CONDITION_TOL * trace) || !trace.is_finite() {
        return Err(min_eig);
    }
    Cholesky::new(sym.clone())
        .map(|c| (c, min_eig))
        .ok_or(min_eig)
}

/// Residual maker `M_X = I - X (X'X)^{-1} X'` applied through a thin QR of
/// the column-equilibrated regressor matrix. Never forms an `n x n` matrix.
#[derive(Debug, Clone)]
pub struct Projector {
    q: DMatrix<f64>,
}

impl Projector {
    /// Returns `None` when `x` is (numerically) column-rank deficient.
    pub fn new(x: &DMatrix<f64>) -> Option<Self> {
        let (n, k) = x.shape();
        if k == 0 {
            return Some(Projector {
                q: DMatrix::zeros(n, 0),
            });
        }
        if n < k {
            return None;
        }
        let mut scaled = x.clone();
        for j in 0..k {
            let norm = scaled.column(j).norm();
            if !(norm > 0.0) || !norm.is_finite() {
                return None;
            }
            scaled.column_mut(j).unscale_mut(norm);
        }
        let qr = scaled.qr();
        let r = qr.r();
        let max_diag = (0..k).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
        if (0..k).any(|j| r[(j, j)].abs() <= RANK_TOL * max_diag) {
            return None;
        }
        Some(Projector { q: qr.q() })
    }

    pub fn residual(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.q.ncols() == 0 {
            return v.clone();
        }
        let coef = self.q.tr_mul(v);
        v - &self.q * coef
    }

    /// Fitted values `P_X v`.
    pub fn fitted(&self, v: &DVector<f64>) -> DVector<f64> {
        v - self.residual(v)
    }
}

/// `[a | b]` column concatenation.
pub fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}
