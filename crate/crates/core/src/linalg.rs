//! Dense least-squares and SPD helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold on the R diagonal for rank decisions.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug)]
pub struct Lstsq {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
    /// (X'X)⁻¹, for conventional standard errors.
    pub xtx_inv: DMatrix<f64>,
}

/// Ordinary least squares via QR with a rank check.
///
/// A rank-deficient design is an error naming every column that is (numerically)
/// a linear combination of the columns before it.
pub fn lstsq(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<Lstsq> {
    let (n, p) = x.shape();
    assert_eq!(names.len(), p, "one name per column");
    if n < p {
        return Err(Error::numerical(format!(
            "least squares needs at least as many rows ({n}) as columns ({p})"
        )));
    }
    check_full_rank(x, names)?;
    // Thin QR least squares: solve R beta = Q' y by back substitution.
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    let coefficients = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::numerical("QR back substitution failed".to_string()))?;
    let residuals = y - x * &coefficients;
    let rss = residuals.dot(&residuals);
    let xtx = x.transpose() * x;
    let xtx_inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::numerical("X'X not invertible at stated rank".to_string()))?;
    Ok(Lstsq {
        coefficients,
        residuals,
        rss,
        xtx_inv,
    })
}

/// Err(SingularDesign) naming dependent columns if `x` is not full column rank.
///
/// Uses the unpivoted QR: the R diagonal collapses exactly at columns spanned by
/// earlier ones, so the first occurrence of a collinear group is kept and the
/// repeats are reported.
pub fn check_full_rank(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let p = x.ncols();
    let r = x.clone().qr().unpack_r();
    let max_diag = (0..p).map(|i| r[(i, i)].abs()).fold(0.0f64, f64::max);
    let dropped: Vec<String> = (0..p)
        .filter(|&i| r[(i, i)].abs() <= RANK_TOL * max_diag.max(1e-300))
        .map(|i| names[i].clone())
        .collect();
    if dropped.is_empty() {
        Ok(())
    } else {
        Err(Error::SingularDesign(dropped))
    }
}

/// Solve A x = b for symmetric positive definite A.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().cholesky().map(|ch| ch.solve(b))
}

/// Invert a symmetric positive definite matrix.
pub fn inv_spd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().cholesky().map(|ch| ch.inverse())
}
