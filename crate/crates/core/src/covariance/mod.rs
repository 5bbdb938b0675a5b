//! Covariance estimation for Gaussian knockoffs.
//!
//! All estimators use the `1/n` empirical covariance of the centered data as
//! their starting point and return a symmetrized [`CovarianceEstimate`]
//! carrying its own smallest eigenvalue.

mod glasso;

pub use glasso::{
    alpha_grid_select, default_alpha_multipliers, graphical_lasso, graphical_lasso_cv,
    heldout_log_likelihood, GLASSO_MAX_ITER, GLASSO_TOL,
};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, KnockoffError, Result};
use crate::linalg::{center_columns, min_eigenvalue, symmetric_eigenvalues, symmetrize, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMethod {
    Empirical,
    LedoitWolf,
    GraphicalLasso,
    Oracle,
}

impl CovarianceMethod {
    /// Short name used on the command line and in benchmark tables.
    pub fn short_name(self) -> &'static str {
        match self {
            CovarianceMethod::Empirical => "empirical",
            CovarianceMethod::LedoitWolf => "lw",
            CovarianceMethod::GraphicalLasso => "glasso",
            CovarianceMethod::Oracle => "oracle",
        }
    }

    pub fn from_short_name(s: &str) -> Option<Self> {
        match s {
            "empirical" => Some(Self::Empirical),
            "lw" | "ledoit_wolf" | "ledoit-wolf" => Some(Self::LedoitWolf),
            "glasso" | "graphical_lasso" => Some(Self::GraphicalLasso),
            "oracle" => Some(Self::Oracle),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub sigma: Matrix,
    pub method: CovarianceMethod,
    /// Ledoit-Wolf shrinkage intensity or graphical-lasso penalty; zero otherwise.
    pub shrinkage_or_penalty: f64,
    pub min_eigenvalue: f64,
    /// Precision matrix, when the estimator produces one.
    pub precision: Option<Matrix>,
    pub converged: bool,
    pub warnings: Vec<String>,
    /// Per outer iteration: `−log det Σ̂` for the graphical lasso.
    pub objective_trace: Vec<f64>,
    /// Per outer iteration: duality gap for the graphical lasso.
    pub gap_trace: Vec<f64>,
}

impl CovarianceEstimate {
    /// Wrap a matrix, symmetrizing it and recording its smallest eigenvalue.
    pub fn new(
        mut sigma: Matrix,
        method: CovarianceMethod,
        shrinkage_or_penalty: f64,
    ) -> Result<Self> {
        ensure!(
            sigma.is_square() && sigma.nrows() > 0,
            "covariance must be a non-empty square matrix"
        );
        ensure!(
            sigma.iter().all(|v| v.is_finite()),
            "covariance has non-finite entries"
        );
        symmetrize(&mut sigma);
        let min_eigenvalue = min_eigenvalue(&sigma);
        Ok(Self {
            sigma,
            method,
            shrinkage_or_penalty,
            min_eigenvalue,
            precision: None,
            converged: true,
            warnings: Vec::new(),
            objective_trace: Vec::new(),
            gap_trace: Vec::new(),
        })
    }

    /// A known covariance, e.g. the exact covariance of a simulated design.
    pub fn oracle(sigma: Matrix) -> Result<Self> {
        Self::new(sigma, CovarianceMethod::Oracle, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }
}

fn sample_covariance(x: &Matrix) -> Result<Matrix> {
    ensure!(
        x.nrows() >= 2,
        "need at least 2 rows to estimate a covariance, got {}",
        x.nrows()
    );
    ensure!(x.ncols() >= 1, "design has no columns");
    let xc = center_columns(x);
    let mut s = xc.tr_mul(&xc) / x.nrows() as f64;
    symmetrize(&mut s);
    Ok(s)
}

/// `(1/n)(X − mean)ᵀ(X − mean)`.
pub fn empirical_covariance(x: &Matrix) -> Result<CovarianceEstimate> {
    CovarianceEstimate::new(sample_covariance(x)?, CovarianceMethod::Empirical, 0.0)
}

/// Optimal shrinkage intensity toward `(tr S / p)·I`, clipped to `[0, 1]`.
fn ledoit_wolf_intensity(xc: &Matrix, s: &Matrix) -> f64 {
    let (n, p) = xc.shape();
    let nf = n as f64;
    let pf = p as f64;
    let mu = s.trace() / pf;
    // Σ_k ‖x_k‖⁴
    let fourth: f64 = xc.row_iter().map(|r| r.norm_squared().powi(2)).sum();
    let s_frob2 = s.norm_squared();
    let beta = (fourth / nf - s_frob2) / (pf * nf);
    let delta = (s_frob2 - 2.0 * mu * s.trace() + pf * mu * mu) / pf;
    let beta = beta.min(delta);
    if beta <= 0.0 || delta <= 0.0 {
        0.0
    } else {
        (beta / delta).clamp(0.0, 1.0)
    }
}

/// Ledoit-Wolf shrinkage `(1 − δ)S + δ(tr S/p)I`.
pub fn ledoit_wolf(x: &Matrix) -> Result<CovarianceEstimate> {
    let s = sample_covariance(x)?;
    let trace = s.trace();
    if trace <= 0.0 {
        return Err(KnockoffError::Degenerate(
            "all columns are constant; Ledoit-Wolf target is zero".into(),
        ));
    }
    let xc = center_columns(x);
    let delta = ledoit_wolf_intensity(&xc, &s);
    let p = s.nrows();
    let mu = trace / p as f64;
    let mut shrunk = &s * (1.0 - delta);
    for j in 0..p {
        shrunk[(j, j)] += delta * mu;
    }
    CovarianceEstimate::new(shrunk, CovarianceMethod::LedoitWolf, delta)
}

/// Relative size below which a negative eigenvalue is treated as rounding.
pub const PSD_ROUNDING: f64 = 1e-12;

/// Outcome of [`assert_psd`].
#[derive(Debug, Clone, PartialEq)]
pub struct PsdRepair {
    pub sigma: Matrix,
    /// Diagonal shift that was added (zero when none was needed).
    pub jitter: f64,
    pub warning: Option<String>,
}

/// Return `sigma` unchanged if it is PSD (eigenvalues below zero by at most
/// `PSD_ROUNDING` relative to the spectral radius are accepted), otherwise
/// `sigma + εI` with the smallest shift that lifts the spectrum to zero plus
/// the same relative margin. Fails if `ε` exceeds `jitter_max`.
pub fn assert_psd(sigma: &Matrix, jitter_max: f64) -> Result<PsdRepair> {
    ensure!(sigma.is_square(), "assert_psd needs a square matrix");
    let asym = (sigma - sigma.transpose()).amax();
    ensure!(
        asym <= 1e-8 * sigma.amax().max(1.0),
        "assert_psd needs a symmetric matrix (asymmetry {asym:.3e})"
    );
    let eig = symmetric_eigenvalues(sigma);
    let lo = eig.min();
    let scale = eig.amax().max(f64::MIN_POSITIVE);
    // eigenvalues within rounding of zero count as non-negative
    if lo >= -PSD_ROUNDING * scale {
        return Ok(PsdRepair {
            sigma: sigma.clone(),
            jitter: 0.0,
            warning: None,
        });
    }
    let margin = PSD_ROUNDING * scale;
    let eps = -lo + margin;
    if eps > jitter_max {
        return Err(KnockoffError::NotPsd {
            min_eigenvalue: lo,
            required: eps,
            budget: jitter_max,
        });
    }
    let mut out = sigma.clone();
    for j in 0..out.nrows() {
        out[(j, j)] += eps;
    }
    let msg = format!("added jitter {eps:.3e} to restore PSD (min eigenvalue was {lo:.3e})");
    warn!("{msg}");
    Ok(PsdRepair {
        sigma: out,
        jitter: eps,
        warning: Some(msg),
    })
}
