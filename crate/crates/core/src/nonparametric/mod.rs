//! Nonparametric knockoffs by regression and residual permutation.
//!
//! Each knockoff column is `f_j(features) + σ(ε̂_j)`, with `f_j` a column
//! regression and `ε̂_j` its residuals. Three schedules are provided:
//! sequential (features include the knockoffs built so far), parallel
//! (features are `X_{−j}` only, so all regressions are independent) and
//! cross-fitted (regressions trained on complement folds, residuals taken on
//! the held-out fold).

mod learner;

pub use learner::{ColumnContext, ColumnLearner, LambdaRule, LassoLearner, OracleGaussianLearner};

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, KnockoffError, Result};
use crate::linalg::{column_moments, Matrix, Vector};
use crate::pair::{ColumnLog, KnockoffMethod, KnockoffPair};
use crate::rng::{derive_seed, rng_from_seed};

/// Below this many rows generation proceeds with a warning.
pub const MIN_ROWS: usize = 10;

const TAG_PERMUTATION: u64 = 1;
const TAG_SHARED: u64 = 2;
const TAG_FOLDS: u64 = 3;
const TAG_RESAMPLE: u64 = 4;

/// How residual permutations are drawn in the parallel method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationMode {
    /// A fresh permutation per column.
    #[default]
    Independent,
    /// One permutation shared by all columns.
    Shared,
}

/// A uniformly random permutation of `0..n`.
pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    perm
}

/// `eps` reordered by a uniform random permutation.
pub fn permute_residuals(eps: &Vector, seed: u64) -> Vector {
    let perm = random_permutation(eps.len(), seed);
    Vector::from_fn(eps.len(), |i, _| eps[perm[i]])
}

/// Theoretical `Cov(X̃₁, X̃₂)` of parallel generation on two unit-variance
/// Gaussian columns with correlation `rho` and independent permutations.
pub fn parallel_gap_independent(rho: f64) -> f64 {
    rho.powi(3)
}

/// As [`parallel_gap_independent`] with one permutation shared by both columns.
pub fn parallel_gap_shared(rho: f64) -> f64 {
    -rho + 2.0 * rho.powi(3)
}

fn check_design(x: &Matrix) -> Result<Vec<String>> {
    let (n, p) = x.shape();
    ensure!(
        p >= 2,
        "nonparametric knockoffs need at least 2 columns, got {p}"
    );
    ensure!(
        n >= 3,
        "nonparametric knockoffs need at least 3 rows, got {n}"
    );
    ensure!(
        x.iter().all(|v| v.is_finite()),
        "design has non-finite entries"
    );
    let (_, sds) = column_moments(x);
    if let Some(j) = sds.iter().position(|&s| s == 0.0) {
        return Err(KnockoffError::Degenerate(format!("column {j} is constant")));
    }
    let mut warnings = Vec::new();
    if n < MIN_ROWS {
        let msg = format!(
            "only {n} rows; residual permutation with fewer than {MIN_ROWS} rows is unreliable"
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(warnings)
}

/// `[X_{−j}, extra[:, 0..k]]`.
fn features(x: &Matrix, j: usize, extra: Option<(&Matrix, usize)>) -> Matrix {
    let (n, p) = x.shape();
    let k = extra.map_or(0, |(_, k)| k);
    let mut out = Matrix::zeros(n, p - 1 + k);
    let mut c = 0;
    for l in 0..p {
        if l != j {
            out.set_column(c, &x.column(l));
            c += 1;
        }
    }
    if let Some((e, k)) = extra {
        for l in 0..k {
            out.set_column(c, &e.column(l));
            c += 1;
        }
    }
    out
}

struct ColumnFit {
    fitted: Vector,
    residuals: Vector,
    log: ColumnLog,
}

fn fit_column(
    learner: &dyn ColumnLearner,
    feats: &Matrix,
    target: Vector,
    ctx: ColumnContext,
) -> Result<ColumnFit> {
    let model = learner.fit(feats, &target, &ctx)?;
    let fitted = model.predict(feats);
    let residuals = target - &fitted;
    let log = ColumnLog {
        column: ctx.column,
        lambda: model.penalty().unwrap_or(f64::NAN),
        residual_variance: residuals.norm_squared() / residuals.len() as f64,
        converged: model.converged(),
    };
    Ok(ColumnFit {
        fitted,
        residuals,
        log,
    })
}

fn non_converged_warnings(log: &[ColumnLog]) -> Vec<String> {
    log.iter()
        .filter(|c| !c.converged)
        .map(|c| format!("regression for column {} did not converge", c.column))
        .collect()
}

/// Sequential generation: column `j` is regressed on `(X_{−j}, X̃_{0..j})` in
/// input order and its knockoff is the fit plus permuted residuals.
pub fn sequential_knockoffs(
    x: &Matrix,
    learner: &dyn ColumnLearner,
    seed: u64,
) -> Result<KnockoffPair> {
    let mut warnings = check_design(x)?;
    let (n, p) = x.shape();
    let mut x_tilde = Matrix::zeros(n, p);
    let mut fitted = Matrix::zeros(n, p);
    let mut residuals = Matrix::zeros(n, p);
    let mut log = Vec::with_capacity(p);
    for j in 0..p {
        let feats = features(x, j, Some((&x_tilde, j)));
        let ctx = ColumnContext {
            column: j,
            n_variables: p,
            n_knockoff_features: j,
        };
        let fit = fit_column(learner, &feats, x.column(j).into_owned(), ctx)?;
        let permuted = permute_residuals(
            &fit.residuals,
            derive_seed(seed, &[TAG_PERMUTATION, j as u64]),
        );
        x_tilde.set_column(j, &(&fit.fitted + permuted));
        fitted.set_column(j, &fit.fitted);
        residuals.set_column(j, &fit.residuals);
        log.push(fit.log);
    }
    warnings.extend(non_converged_warnings(&log));
    Ok(KnockoffPair {
        x: x.clone(),
        x_tilde,
        method: KnockoffMethod::Sequential,
        seed,
        generation_log: log,
        warnings,
        fitted: Some(fitted),
        residuals: Some(residuals),
    })
}

/// Parallel generation: all column regressions use `X_{−j}` only and run
/// concurrently on `workers` threads (on the enclosing pool when called from a
/// rayon worker). Permutations come from per-column seeds
/// (or one shared seed), so the output does not depend on `workers`.
pub fn parallel_knockoffs(
    x: &Matrix,
    learner: &dyn ColumnLearner,
    seed: u64,
    workers: usize,
    mode: PermutationMode,
) -> Result<KnockoffPair> {
    let mut warnings = check_design(x)?;
    ensure!(workers >= 1, "workers must be >= 1");
    let (n, p) = x.shape();
    let fit = |j: usize| {
        let feats = features(x, j, None);
        let ctx = ColumnContext {
            column: j,
            n_variables: p,
            n_knockoff_features: 0,
        };
        fit_column(learner, &feats, x.column(j).into_owned(), ctx)
    };
    // inside a rayon pool (e.g. a benchmark run) reuse it: blocking on a
    // second pool would let this thread pick up unrelated jobs meanwhile
    let fits: Vec<Result<ColumnFit>> = if workers == 1 {
        (0..p).map(fit).collect()
    } else if rayon::current_thread_index().is_some() {
        (0..p).into_par_iter().map(fit).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| KnockoffError::Numerical(format!("cannot start worker pool: {e}")))?;
        pool.install(|| (0..p).into_par_iter().map(fit).collect())
    };
    let shared = random_permutation(n, derive_seed(seed, &[TAG_SHARED]));
    let mut x_tilde = Matrix::zeros(n, p);
    let mut fitted = Matrix::zeros(n, p);
    let mut residuals = Matrix::zeros(n, p);
    let mut log = Vec::with_capacity(p);
    for (j, fit) in fits.into_iter().enumerate() {
        let fit = fit?;
        let perm = match mode {
            PermutationMode::Independent => {
                random_permutation(n, derive_seed(seed, &[TAG_PERMUTATION, j as u64]))
            }
            PermutationMode::Shared => shared.clone(),
        };
        for i in 0..n {
            x_tilde[(i, j)] = fit.fitted[i] + fit.residuals[perm[i]];
        }
        fitted.set_column(j, &fit.fitted);
        residuals.set_column(j, &fit.residuals);
        log.push(fit.log);
    }
    warnings.extend(non_converged_warnings(&log));
    Ok(KnockoffPair {
        x: x.clone(),
        x_tilde,
        method: KnockoffMethod::Parallel,
        seed,
        generation_log: log,
        warnings,
        fitted: Some(fitted),
        residuals: Some(residuals),
    })
}

/// Fold labels drawn uniformly with replacement; redrawn with the next
/// sub-seed while any fold is empty. Returns the labels and the number of
/// redraws.
pub fn crossfit_folds(n: usize, k: usize, seed: u64) -> Result<(Vec<usize>, usize)> {
    ensure!(k >= 2, "cross-fitting needs at least 2 folds, got {k}");
    ensure!(n >= k, "cannot fill {k} folds with {n} rows");
    for attempt in 0..1000u64 {
        let mut rng = rng_from_seed(derive_seed(seed, &[TAG_FOLDS, attempt]));
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let mut seen = vec![false; k];
        for &l in &labels {
            seen[l] = true;
        }
        if seen.iter().all(|&s| s) {
            return Ok((labels, attempt as usize));
        }
    }
    Err(KnockoffError::Numerical(format!(
        "could not draw {k} nonempty folds for {n} rows"
    )))
}

/// Cross-fitted sequential generation.
///
/// For each fold `k` and column `j`, `f_{j,k}` is trained on the other folds
/// with features `(X_{−j}, X̄_{0..j})`, where `X̄` is an auxiliary knockoff of
/// the training rows. Held-out residuals on fold `k` (features
/// `(X_{−j}, X̃_{0..j})`) form the pool from which residuals are drawn
/// uniformly with replacement, both for `X̄` on the training rows and for `X̃`
/// on fold `k`.
pub fn crossfit_knockoffs(
    x: &Matrix,
    learner: &dyn ColumnLearner,
    folds: usize,
    seed: u64,
) -> Result<KnockoffPair> {
    let mut warnings = check_design(x)?;
    let (n, p) = x.shape();
    let (labels, redraws) = crossfit_folds(n, folds, seed)?;
    if redraws > 0 {
        let msg = format!("fold assignment redrawn {redraws} time(s) to avoid empty folds");
        warn!("{msg}");
        warnings.push(msg);
    }
    let mut x_tilde = Matrix::zeros(n, p);
    let mut fitted = Matrix::zeros(n, p);
    let mut residuals = Matrix::zeros(n, p);
    let mut lambda_sum = vec![0.0; p];
    let mut converged = vec![true; p];
    for k in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| labels[i] != k).collect();
        let test: Vec<usize> = (0..n).filter(|&i| labels[i] == k).collect();
        let x_train = x.select_rows(train.iter());
        let x_test = x.select_rows(test.iter());
        let mut x_bar = Matrix::zeros(train.len(), p);
        let mut xt_test = Matrix::zeros(test.len(), p);
        for j in 0..p {
            let ctx = ColumnContext {
                column: j,
                n_variables: p,
                n_knockoff_features: j,
            };
            let train_feats = features(&x_train, j, Some((&x_bar, j)));
            let model = learner.fit(&train_feats, &x_train.column(j).into_owned(), &ctx)?;
            lambda_sum[j] += model.penalty().unwrap_or(f64::NAN);
            converged[j] &= model.converged();
            let test_feats = features(&x_test, j, Some((&xt_test, j)));
            let test_fit = model.predict(&test_feats);
            let pool: Vector = x_test.column(j) - &test_fit;
            let train_fit = model.predict(&train_feats);
            let mut rng = rng_from_seed(derive_seed(seed, &[TAG_RESAMPLE, k as u64, j as u64]));
            for i in 0..train.len() {
                x_bar[(i, j)] = train_fit[i] + pool[rng.random_range(0..pool.len())];
            }
            for (r, &i) in test.iter().enumerate() {
                let value = test_fit[r] + pool[rng.random_range(0..pool.len())];
                xt_test[(r, j)] = value;
                x_tilde[(i, j)] = value;
                fitted[(i, j)] = test_fit[r];
                residuals[(i, j)] = pool[r];
            }
        }
    }
    let log: Vec<ColumnLog> = (0..p)
        .map(|j| ColumnLog {
            column: j,
            lambda: lambda_sum[j] / folds as f64,
            residual_variance: residuals.column(j).norm_squared() / n as f64,
            converged: converged[j],
        })
        .collect();
    warnings.extend(non_converged_warnings(&log));
    Ok(KnockoffPair {
        x: x.clone(),
        x_tilde,
        method: KnockoffMethod::Crossfit,
        seed,
        generation_log: log,
        warnings,
        fitted: Some(fitted),
        residuals: Some(residuals),
    })
}
