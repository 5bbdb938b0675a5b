//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{KnockoffError, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Replace `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn symmetric_eigenvalues(m: &Matrix) -> Vector {
    SymmetricEigen::new(m.clone()).eigenvalues
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    symmetric_eigenvalues(m)
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Column means and population (1/n) standard deviations.
pub fn column_moments(x: &Matrix) -> (Vector, Vector) {
    if x.nrows() == 0 {
        return (Vector::zeros(x.ncols()), Vector::zeros(x.ncols()));
    }
    let n = x.nrows() as f64;
    let mut means = Vector::zeros(x.ncols());
    let mut sds = Vector::zeros(x.ncols());
    for (j, col) in x.column_iter().enumerate() {
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            // exact zero spread even when sum/n rounds away from the value
            means[j] = first;
            continue;
        }
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        means[j] = mean;
        sds[j] = var.sqrt();
    }
    (means, sds)
}

/// Center every column and scale it to unit population standard deviation.
/// Zero-variance columns are centered and left at zero.
pub fn standardize_columns(x: &Matrix) -> Matrix {
    let (means, sds) = column_moments(x);
    let mut z = x.clone();
    for (j, mut col) in z.column_iter_mut().enumerate() {
        let sd = sds[j];
        for v in col.iter_mut() {
            *v = if sd > 0.0 { (*v - means[j]) / sd } else { 0.0 };
        }
    }
    z
}

pub fn center_columns(x: &Matrix) -> Matrix {
    let (means, _) = column_moments(x);
    let mut z = x.clone();
    for (j, mut col) in z.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    z
}

/// Lower-triangular `L` with `L Lᵀ = m` for a positive semidefinite `m`.
///
/// Positive definite input gets the ordinary Cholesky factor. Singular input
/// (the equi-correlated knockoff covariance is singular by construction) is
/// factored through its eigendecomposition: with `m = B Bᵀ`,
/// `B = Q·diag(√λ₊)`, the QR factorization `Bᵀ = Q₂R` gives `L = Rᵀ`.
pub fn psd_cholesky(m: &Matrix) -> Result<Matrix> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(KnockoffError::Contract(
            "cholesky of a non-square matrix".into(),
        ));
    }
    if let Some(chol) = m.clone().cholesky() {
        return Ok(chol.l());
    }
    let eig = m.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let lo = eig.eigenvalues.min();
    if lo < -1e-8 * scale {
        return Err(KnockoffError::Numerical(format!(
            "matrix is not PSD (min eigenvalue {lo:.3e})"
        )));
    }
    let mut b = eig.eigenvectors;
    for (j, mut col) in b.column_iter_mut().enumerate() {
        col *= eig.eigenvalues[j].max(0.0).sqrt();
    }
    let r = b.transpose().qr().r();
    let mut l = r.transpose();
    for (j, mut col) in l.column_iter_mut().enumerate() {
        if col[j] < 0.0 {
            col.neg_mut();
        }
    }
    Ok(l)
}

/// Solve `a x = b` for symmetric positive definite `a`.
pub fn spd_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| KnockoffError::Numerical("matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// `m` with row and column `idx` removed.
pub fn drop_index(m: &Matrix, idx: usize) -> Matrix {
    m.clone().remove_row(idx).remove_column(idx)
}

/// Log-determinant of a symmetric positive definite matrix.
pub fn spd_logdet(a: &Matrix) -> Option<f64> {
    let chol = a.clone().cholesky()?;
    Some(
        2.0 * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|v| v.ln())
            .sum::<f64>(),
    )
}
