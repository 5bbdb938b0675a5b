//! Graphical lasso by block coordinate descent on the covariance.

use log::warn;
use rayon::prelude::*;

use super::{sample_covariance, CovarianceEstimate, CovarianceMethod};
use crate::error::{ensure, KnockoffError, Result};
use crate::folds::shuffled_folds;
use crate::linalg::{column_moments, spd_logdet, standardize_columns, symmetrize, Matrix};
use crate::regression::soft_threshold;
use crate::rng::{derive_seed, rng_from_seed};

pub const GLASSO_TOL: f64 = 1e-4;
pub const GLASSO_MAX_ITER: usize = 100;

const INNER_TOL: f64 = 1e-8;
const INNER_MAX_ITER: usize = 1000;
/// Active-set sweeps between full passes.
const ACTIVE_SWEEPS: usize = 10;

/// Grid multipliers applied to the largest off-diagonal absolute correlation.
pub fn default_alpha_multipliers() -> Vec<f64> {
    vec![0.01, 0.05, 0.1, 0.2, 0.5]
}

/// Solver state: current `W`, `Θ` and the block regression coefficients.
#[derive(Clone)]
struct State {
    w: Matrix,
    theta: Matrix,
    /// Column `i` holds the regression coefficients of block `i`.
    beta: Matrix,
}

impl State {
    fn cold(s: &Matrix) -> Self {
        let p = s.nrows();
        let mut w = s * 0.95;
        for i in 0..p {
            w[(i, i)] = s[(i, i)];
        }
        let theta = Matrix::from_fn(p, p, |i, j| if i == j { 1.0 / s[(i, i)] } else { 0.0 });
        State {
            w,
            theta,
            beta: Matrix::zeros(p, p),
        }
    }
}

struct Outcome {
    state: State,
    converged: bool,
    objective_trace: Vec<f64>,
    gap_trace: Vec<f64>,
}

/// Lasso for block `skip`: minimize `½βᵀW₁₁β − s₁₂ᵀβ + α‖β‖₁` with `W₁₁` the
/// submatrix of `w` without row/column `skip`. Works in place on a length-p
/// `beta` whose entry `skip` stays zero. Sweeps alternate between the
/// nonzero coordinates (at most `ACTIVE_SWEEPS` at a time) and full passes;
/// only a full pass can stop the loop.
fn block_lasso(w: &Matrix, s: &Matrix, skip: usize, alpha: f64, beta: &mut [f64]) {
    let p = w.nrows();
    let data = w.as_slice();
    let col = |k: usize| &data[k * p..(k + 1) * p];
    let scale = s[(skip, skip)].sqrt();
    let mut grad: Vec<f64> = (0..p).map(|k| s[(k, skip)]).collect();
    for l in 0..p {
        if l != skip && beta[l] != 0.0 {
            let b = beta[l];
            for (g, wk) in grad.iter_mut().zip(col(l)) {
                *g -= wk * b;
            }
        }
    }
    let update = |k: usize, beta: &mut [f64], grad: &mut [f64]| -> f64 {
        let wkk = data[k * p + k];
        let old = beta[k];
        let new = soft_threshold(grad[k] + wkk * old, alpha) / wkk;
        if new == old {
            return 0.0;
        }
        let delta = new - old;
        for (g, wk) in grad.iter_mut().zip(col(k)) {
            *g -= wk * delta;
        }
        beta[k] = new;
        delta.abs() * wkk.sqrt()
    };
    let all: Vec<usize> = (0..p).filter(|&k| k != skip).collect();
    let mut sweeps = 0;
    let mut try_polish = true;
    while sweeps < INNER_MAX_ITER {
        let mut max_change = 0.0f64;
        for &k in &all {
            max_change = max_change.max(update(k, beta, &mut grad));
        }
        sweeps += 1;
        if max_change < INNER_TOL * scale {
            break;
        }
        let active: Vec<usize> = all.iter().copied().filter(|&k| beta[k] != 0.0).collect();
        if try_polish && polish(w, s, skip, alpha, &active, beta) {
            // refresh the gradient; the next full sweep certifies the result
            for (k, g) in grad.iter_mut().enumerate() {
                *g = s[(k, skip)];
            }
            for &l in &active {
                let b = beta[l];
                for (g, wk) in grad.iter_mut().zip(col(l)) {
                    *g -= wk * b;
                }
            }
            continue;
        }
        try_polish = !try_polish;
        let stop = INNER_MAX_ITER.min(sweeps + ACTIVE_SWEEPS);
        while sweeps < stop {
            let mut change = 0.0f64;
            for &k in &active {
                change = change.max(update(k, beta, &mut grad));
            }
            sweeps += 1;
            if change < INNER_TOL * scale {
                break;
            }
        }
    }
}

/// Exact minimizer on the current support with the current signs:
/// `W_AA β_A = s_A − α·sign(β_A)`. Accepted only if no sign flips.
fn polish(
    w: &Matrix,
    s: &Matrix,
    skip: usize,
    alpha: f64,
    active: &[usize],
    beta: &mut [f64],
) -> bool {
    let m = active.len();
    if m == 0 {
        return false;
    }
    let waa = Matrix::from_fn(m, m, |a, b| w[(active[a], active[b])]);
    let Some(chol) = waa.cholesky() else {
        return false;
    };
    let rhs = crate::linalg::Vector::from_fn(m, |a, _| {
        s[(active[a], skip)] - alpha * beta[active[a]].signum()
    });
    let sol = chol.solve(&rhs);
    if active
        .iter()
        .zip(sol.iter())
        .any(|(&k, &v)| v == 0.0 || v.signum() != beta[k].signum())
    {
        return false;
    }
    for (&k, &v) in active.iter().zip(sol.iter()) {
        beta[k] = v;
    }
    true
}

/// Duality gap `f(Θ) − g(W)` with primal
/// `f(Θ) = −log det Θ + tr(SΘ) + α‖Θ‖₁,off` at the symmetrized `Θ` and dual
/// `g(W) = log det W + p`; `W` stays dual feasible (`|W − S|` ≤ α off the
/// diagonal, equal on it) by construction. `+∞` while `Θ` is not positive
/// definite.
fn dual_gap(s: &Matrix, theta: &Matrix, logdet_w: Option<f64>, alpha: f64) -> f64 {
    let p = s.nrows();
    let mut sym = theta.clone();
    symmetrize(&mut sym);
    let (Some(ld_theta), Some(ld_w)) = (spd_logdet(&sym), logdet_w) else {
        return f64::INFINITY;
    };
    let mut penalty = 0.0;
    for j in 0..p {
        for i in 0..p {
            if i != j {
                penalty += sym[(i, j)].abs();
            }
        }
    }
    -ld_theta + s.component_mul(&sym).sum() + alpha * penalty - ld_w - p as f64
}

fn solve(s: &Matrix, alpha: f64, tol: f64, max_iter: usize, mut st: State) -> Outcome {
    let p = s.nrows();
    let mut objective_trace = Vec::new();
    let mut gap_trace = Vec::new();
    let mut converged = false;
    let mut beta = vec![0.0; p];
    for _ in 0..max_iter {
        for i in 0..p {
            beta.copy_from_slice(st.beta.column(i).as_slice());
            block_lasso(&st.w, s, i, alpha, &mut beta);
            // w₁₂ = W₁₁β; entry i of the accumulator is never read
            let mut w12 = vec![0.0; p];
            for (l, &b) in beta.iter().enumerate() {
                if b != 0.0 {
                    for (acc, wv) in w12.iter_mut().zip(st.w.column(l).iter()) {
                        *acc += wv * b;
                    }
                }
            }
            w12[i] = 0.0;
            let quad: f64 = w12.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let t22 = 1.0 / (s[(i, i)] - quad);
            for k in 0..p {
                if k != i {
                    st.w[(k, i)] = w12[k];
                    st.w[(i, k)] = w12[k];
                    st.theta[(k, i)] = -t22 * beta[k];
                    st.theta[(i, k)] = -t22 * beta[k];
                }
            }
            st.theta[(i, i)] = t22;
            st.beta.column_mut(i).copy_from_slice(&beta);
        }
        let logdet_w = spd_logdet(&st.w);
        let gap = dual_gap(s, &st.theta, logdet_w, alpha);
        gap_trace.push(gap);
        objective_trace.push(logdet_w.map_or(f64::INFINITY, |v| -v));
        if gap < tol {
            converged = true;
            break;
        }
    }
    Outcome {
        state: st,
        converged,
        objective_trace,
        gap_trace,
    }
}

fn check_diagonal(s: &Matrix) -> Result<()> {
    for j in 0..s.nrows() {
        if s[(j, j)] <= 0.0 {
            return Err(KnockoffError::Degenerate(format!("column {j} is constant")));
        }
    }
    Ok(())
}

fn into_estimate(s_alpha: f64, out: Outcome, max_iter: usize) -> Result<CovarianceEstimate> {
    let mut theta = out.state.theta;
    symmetrize(&mut theta);
    let mut est = CovarianceEstimate::new(out.state.w, CovarianceMethod::GraphicalLasso, s_alpha)?;
    est.precision = Some(theta);
    est.converged = out.converged;
    est.objective_trace = out.objective_trace;
    est.gap_trace = out.gap_trace;
    if !out.converged {
        let msg = format!(
            "graphical lasso did not converge in {max_iter} iterations (alpha = {s_alpha:.3e}, final gap {:.3e})",
            est.gap_trace.last().copied().unwrap_or(f64::NAN)
        );
        warn!("{msg}");
        est.warnings.push(msg);
    }
    Ok(est)
}

/// ℓ1-penalized Gaussian maximum likelihood for the precision matrix; the
/// diagonal is not penalized. Returns `Σ̂ = Θ̂⁻¹` with `Θ̂` in `precision`.
pub fn graphical_lasso(
    x: &Matrix,
    alpha: f64,
    tol: f64,
    max_iter: usize,
) -> Result<CovarianceEstimate> {
    ensure!(
        alpha > 0.0 && alpha.is_finite(),
        "alpha must be > 0, got {alpha}"
    );
    ensure!(
        tol > 0.0 && max_iter > 0,
        "tol and max_iter must be positive"
    );
    let s = sample_covariance(x)?;
    check_diagonal(&s)?;
    let out = solve(&s, alpha, tol, max_iter, State::cold(&s));
    into_estimate(alpha, out, max_iter)
}

/// `log det Θ − tr(S Θ)`; `−∞` if `Θ` is not positive definite.
pub fn heldout_log_likelihood(s_test: &Matrix, precision: &Matrix) -> f64 {
    match spd_logdet(precision) {
        Some(ld) => ld - s_test.component_mul(precision).sum(),
        None => f64::NEG_INFINITY,
    }
}

fn rows(x: &Matrix, keep: impl Fn(usize) -> bool) -> Matrix {
    let idx: Vec<usize> = (0..x.nrows()).filter(|&i| keep(i)).collect();
    x.select_rows(idx.iter())
}

/// Mean held-out log-likelihood of each grid value (in grid order). Every
/// (fold, alpha) fit starts cold.
fn grid_scores(x: &Matrix, grid: &[f64], folds: usize, seed: u64) -> Result<Vec<f64>> {
    let labels = shuffled_folds(
        x.nrows(),
        folds,
        &mut rng_from_seed(derive_seed(seed, &[0x61_6c_70_68_61])),
    );
    let mut split = Vec::with_capacity(folds);
    for k in 0..folds {
        let s = sample_covariance(&rows(x, |i| labels[i] != k))?;
        check_diagonal(&s)?;
        split.push((s, sample_covariance(&rows(x, |i| labels[i] == k))?));
    }
    let tasks: Vec<(usize, usize)> = (0..folds)
        .flat_map(|k| (0..grid.len()).map(move |g| (k, g)))
        .collect();
    let lls: Vec<f64> = tasks
        .par_iter()
        .map(|&(k, g)| {
            let (s, s_test) = &split[k];
            let out = solve(s, grid[g], GLASSO_TOL, GLASSO_MAX_ITER, State::cold(s));
            let mut theta = out.state.theta;
            symmetrize(&mut theta);
            let ll = heldout_log_likelihood(s_test, &theta);
            if ll.is_finite() {
                ll
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let mut total = vec![0.0; grid.len()];
    for (&(_, g), v) in tasks.iter().zip(lls) {
        total[g] += v / folds as f64;
    }
    Ok(total)
}

/// Grid value with the highest mean held-out Gaussian log-likelihood over
/// `folds` seeded folds; ties go to the earliest grid entry.
pub fn alpha_grid_select(x: &Matrix, grid: &[f64], folds: usize, seed: u64) -> Result<f64> {
    ensure!(!grid.is_empty(), "alpha grid is empty");
    ensure!(
        grid.iter().all(|&a| a > 0.0 && a.is_finite()),
        "alpha grid values must be > 0"
    );
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    ensure!(folds >= 2, "need at least 2 folds, got {folds}");
    ensure!(
        x.nrows() >= 2 * folds,
        "need at least {} rows for {folds} folds",
        2 * folds
    );
    let scores = grid_scores(x, grid, folds, seed)?;
    let mut best = 0;
    for (g, &v) in scores.iter().enumerate() {
        if v > scores[best] {
            best = g;
        }
    }
    Ok(grid[best])
}

/// Graphical lasso with the penalty chosen by [`alpha_grid_select`] on the
/// correlation scale.
///
/// Columns are standardized, the grid is `multipliers × max |off-diagonal
/// correlation|`, and the fitted correlation-scale estimate is mapped back
/// with the column standard deviations. The reported penalty is on the
/// correlation scale.
pub fn graphical_lasso_cv(
    x: &Matrix,
    multipliers: &[f64],
    folds: usize,
    seed: u64,
) -> Result<CovarianceEstimate> {
    ensure!(!multipliers.is_empty(), "alpha grid is empty");
    let (_, sds) = column_moments(x);
    if let Some(j) = sds.iter().position(|&v| v <= 0.0) {
        return Err(KnockoffError::Degenerate(format!("column {j} is constant")));
    }
    let z = standardize_columns(x);
    let r = sample_covariance(&z)?;
    let p = r.nrows();
    let mut max_corr = 0.0f64;
    for j in 0..p {
        for i in 0..p {
            if i != j {
                max_corr = max_corr.max(r[(i, j)].abs());
            }
        }
    }
    let base = max_corr.max(1e-6);
    let grid: Vec<f64> = multipliers.iter().map(|m| m * base).collect();
    let alpha = alpha_grid_select(&z, &grid, folds, seed)?;
    let out = solve(&r, alpha, GLASSO_TOL, GLASSO_MAX_ITER, State::cold(&r));
    let mut est = into_estimate(alpha, out, GLASSO_MAX_ITER)?;
    let sigma = Matrix::from_fn(p, p, |i, j| est.sigma[(i, j)] * sds[i] * sds[j]);
    let precision = est
        .precision
        .as_ref()
        .map(|t| Matrix::from_fn(p, p, |i, j| t[(i, j)] / (sds[i] * sds[j])));
    let rescaled = CovarianceEstimate::new(sigma, CovarianceMethod::GraphicalLasso, alpha)?;
    est.sigma = rescaled.sigma;
    est.min_eigenvalue = rescaled.min_eigenvalue;
    est.precision = precision;
    Ok(est)
}
