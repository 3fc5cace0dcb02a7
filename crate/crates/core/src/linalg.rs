//! Small dense solvers shared by the learners and the optimizer.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold on the diagonal of `R` below which a least-squares
/// design is treated as rank deficient.
const RANK_TOL: f64 = 1e-12;

/// Minimizes `‖A β - y‖² + ridge · ‖β‖²` by Householder QR of the augmented
/// system `[A; √ridge I]`.
pub fn ridge_least_squares(design: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    let (n, p) = design.shape();
    Error::check_len(n, y.len())?;
    if ridge < 0.0 || !ridge.is_finite() {
        return Err(Error::InvalidParameter(format!("ridge must be a finite nonnegative number, got {ridge}")));
    }
    if p == 0 {
        return Ok(DVector::zeros(0));
    }
    let (a, rhs) = if ridge > 0.0 {
        let mut a = DMatrix::zeros(n + p, p);
        a.view_mut((0, 0), (n, p)).copy_from(design);
        let s = ridge.sqrt();
        for j in 0..p {
            a[(n + j, j)] = s;
        }
        let mut rhs = DVector::zeros(n + p);
        rhs.rows_mut(0, n).copy_from(y);
        (a, rhs)
    } else {
        if n < p {
            return Err(Error::InsufficientData(format!(
                "{n} observations for {p} unknowns without ridge stabilization"
            )));
        }
        (design.clone(), y.clone())
    };
    let qr = a.qr();
    let r = qr.r();
    let max_diag = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if max_diag == 0.0 || (0..p).any(|j| r[(j, j)].abs() <= RANK_TOL * max_diag) {
        return Err(Error::SingularSystem("least-squares design is rank deficient".into()));
    }
    let qty = qr.q().transpose() * rhs;
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| Error::SingularSystem("triangular solve failed".into()))
}

/// Solves `S x = b` for symmetric positive-definite `S` by Cholesky.
pub fn spd_solve(s: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("matrix is not positive definite".into()))?;
    let x = chol.solve(b);
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::SingularSystem("Cholesky solve produced non-finite values".into()))
    }
}
