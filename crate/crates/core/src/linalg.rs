//! Small dense linear-algebra helpers shared by the filters and the solver.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Lower Cholesky factorisation of an SPD matrix; `name` is used in the error.
pub fn cholesky(matrix: &DMatrix<f64>, name: &str) -> Result<Cholesky<f64, Dyn>> {
    if !matrix.iter().all(|v| v.is_finite()) {
        return Err(Error::NotSpd(format!("{name} (non-finite entries)")));
    }
    matrix
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotSpd(name.to_string()))
}

/// `(P + Pᵀ) / 2`.
pub fn symmetrize(matrix: &DMatrix<f64>) -> DMatrix<f64> {
    (matrix + matrix.transpose()) * 0.5
}

/// True when `matrix` is symmetric to `rel_tol` relative to its largest entry.
pub fn is_symmetric(matrix: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !matrix.is_square() {
        return false;
    }
    let scale = matrix.amax().max(f64::MIN_POSITIVE);
    let n = matrix.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (matrix[(i, j)] - matrix[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

/// Returns `L⁻¹ r` where `covariance = L Lᵀ`.
///
/// A correctly modelled residual comes out with identity covariance.
pub fn whiten(residual: &DVector<f64>, covariance: &DMatrix<f64>) -> Result<DVector<f64>> {
    if covariance.nrows() != residual.len() || !covariance.is_square() {
        return Err(Error::Dimension {
            context: "whiten".into(),
            expected: residual.len(),
            actual: covariance.nrows(),
        });
    }
    let chol = cholesky(covariance, "residual covariance")?;
    Ok(whiten_with(&chol.l(), residual))
}

/// Whitening with a precomputed lower factor.
pub fn whiten_with(lower: &DMatrix<f64>, residual: &DVector<f64>) -> DVector<f64> {
    lower
        .solve_lower_triangular(residual)
        .expect("Cholesky factor has a non-zero diagonal")
}

/// Inverse of [`whiten`]: `L x`.
pub fn unwhiten(whitened: &DVector<f64>, covariance: &DMatrix<f64>) -> Result<DVector<f64>> {
    let chol = cholesky(covariance, "residual covariance")?;
    Ok(chol.l() * whitened)
}

/// Inverse of an SPD matrix through its Cholesky factor, symmetrised.
pub fn spd_inverse(matrix: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&cholesky(matrix, name)?.inverse()))
}
