//! Gaussian knockoffs with the equi-correlated construction.
//!
//! Given `Σ` and `D = diag(s)`, knockoffs are drawn row by row from
//! `N(x − xΣ⁻¹D, 2D − DΣ⁻¹D)`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::covariance::{assert_psd, CovarianceEstimate};
use crate::error::{ensure, KnockoffError, Result};
use crate::linalg::{psd_cholesky, symmetric_eigenvalues, symmetrize, Matrix, Vector};
use crate::pair::{KnockoffMethod, KnockoffPair};
use crate::rng::substream;

/// Floor applied to `λ_min(Σ)` before the equi-correlated rule.
pub const MIN_EIGENVALUE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKnockoffSampler {
    pub sigma: Matrix,
    pub sigma_inv: Matrix,
    pub s: Vector,
    /// Lower-triangular `L` with `L Lᵀ = V`.
    pub conditional_cov_cholesky: Matrix,
    /// `I − Σ⁻¹D`; the conditional mean of a row `x` is `x·mean_map`.
    pub mean_map: Matrix,
    /// Diagonal shift added to `V`, zero if none was needed.
    pub jitter: f64,
    pub warnings: Vec<String>,
}

impl GaussianKnockoffSampler {
    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    /// `V = 2D − DΣ⁻¹D` reconstructed from its factor.
    pub fn conditional_cov(&self) -> Matrix {
        &self.conditional_cov_cholesky * self.conditional_cov_cholesky.transpose()
    }
}

/// `s_j = min(2λ_min(Σ), tr(Σ)/p)` for every `j`.
pub fn equicorrelated_s(sigma: &CovarianceEstimate) -> Result<Vector> {
    let p = sigma.dim();
    let eig = symmetric_eigenvalues(&sigma.sigma);
    let lo = eig.min();
    let scale = eig.amax().max(f64::MIN_POSITIVE);
    ensure!(
        lo >= -1e-10 * scale,
        "covariance is not PSD (min eigenvalue {lo:.3e})"
    );
    let lo = lo.max(MIN_EIGENVALUE_FLOOR);
    let value = (2.0 * lo).min(sigma.sigma.trace() / p as f64);
    Ok(Vector::from_element(p, value))
}

/// Precompute the conditional mean map and the factor of `V`.
pub fn build_sampler(sigma: &CovarianceEstimate) -> Result<GaussianKnockoffSampler> {
    let s = equicorrelated_s(sigma)?;
    let p = s.len();
    let chol = sigma.sigma.clone().cholesky().ok_or_else(|| {
        KnockoffError::Numerical("covariance is singular; cannot build knockoff sampler".into())
    })?;
    let d = Matrix::from_diagonal(&s);
    let sinv_d = chol.solve(&d);
    let sigma_inv = chol.inverse();
    let mut v = &d * 2.0 - &d * &sinv_d;
    symmetrize(&mut v);
    let budget = 1e-6 * v.trace().max(0.0) / p as f64;
    let repaired = assert_psd(&v, budget)?;
    let factor = psd_cholesky(&repaired.sigma)?;
    let mean_map = Matrix::identity(p, p) - sinv_d;
    Ok(GaussianKnockoffSampler {
        sigma: sigma.sigma.clone(),
        sigma_inv,
        s,
        conditional_cov_cholesky: factor,
        mean_map,
        jitter: repaired.jitter,
        warnings: repaired.warning.into_iter().collect(),
    })
}

/// Draw `X̃` for the rows of `x`. Row `i` uses the generator substream
/// `(seed, i)`, so the result does not depend on how rows are scheduled.
pub fn sample_knockoffs(
    sampler: &GaussianKnockoffSampler,
    x: &Matrix,
    seed: u64,
) -> Result<Matrix> {
    let p = sampler.dim();
    ensure!(
        x.ncols() == p,
        "design has {} columns but the sampler has dimension {p}",
        x.ncols()
    );
    let n = x.nrows();
    let noise: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            (0..p).map(|_| StandardNormal.sample(&mut rng)).collect()
        })
        .collect();
    let z = Matrix::from_fn(n, p, |i, j| noise[i][j]);
    Ok(x * &sampler.mean_map + z * sampler.conditional_cov_cholesky.transpose())
}

/// Build the sampler from `sigma` and draw knockoffs for `x`.
pub fn gaussian_knockoffs(
    x: &Matrix,
    sigma: &CovarianceEstimate,
    seed: u64,
) -> Result<KnockoffPair> {
    let sampler = build_sampler(sigma)?;
    let x_tilde = sample_knockoffs(&sampler, x, seed)?;
    let mut warnings = sigma.warnings.clone();
    warnings.extend(sampler.warnings);
    Ok(KnockoffPair {
        x: x.clone(),
        x_tilde,
        method: KnockoffMethod::Gaussian,
        seed,
        generation_log: Vec::new(),
        warnings,
        fitted: None,
        residuals: None,
    })
}
