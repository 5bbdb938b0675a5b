use log::warn;
use nalgebra::{Cholesky, Dyn};

use super::FittedRegressor;
use crate::error::{ensure, Result};
use crate::linalg::{column_moments, Matrix, Vector};

pub const LASSO_TOL: f64 = 1e-8;
pub const LASSO_MAX_ITER: usize = 10_000;

/// Coordinates whose partial correlation sits within rounding of the penalty
/// stay at zero. With duplicated columns this makes the earlier column in the
/// cyclic order absorb the whole coefficient.
const TIE_SLACK: f64 = 1e-12;

/// Result of an L1-penalized least-squares fit.
///
/// The objective is `½n⁻¹‖y − b − Xβ‖² + λ‖β‖₁` with an unpenalized intercept
/// `b`, on the original scale of `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coefficients: Vector,
    pub lambda: f64,
    pub intercept: f64,
    pub n_iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl LassoFit {
    pub fn predict(&self, x: &Matrix) -> Vector {
        let mut out = x * &self.coefficients;
        out.add_scalar_mut(self.intercept);
        out
    }
}

impl FittedRegressor for LassoFit {
    fn predict(&self, x: &Matrix) -> Vector {
        LassoFit::predict(self, x)
    }

    fn penalty(&self) -> Option<f64> {
        Some(self.lambda)
    }

    fn converged(&self) -> bool {
        self.converged
    }
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

fn check_xy(x: &Matrix, y: &Vector) -> Result<()> {
    ensure!(
        x.ncols() >= 1 && x.nrows() >= 1,
        "design matrix is empty ({}x{})",
        x.nrows(),
        x.ncols()
    );
    ensure!(
        y.len() == x.nrows(),
        "response has {} entries but design has {} rows",
        y.len(),
        x.nrows()
    );
    Ok(())
}

/// Smallest penalty for which the lasso solution is identically zero:
/// `(1/n)·max_j |(X_j − mean_j)ᵀ(y − ȳ)|`.
pub fn lambda_max(x: &Matrix, y: &Vector) -> Result<f64> {
    check_xy(x, y)?;
    let n = x.nrows() as f64;
    let ybar = y.mean();
    let mut best = 0.0f64;
    for col in x.column_iter() {
        let mean = col.mean();
        let dot: f64 = col
            .iter()
            .zip(y.iter())
            .map(|(a, b)| (a - mean) * (b - ybar))
            .sum();
        best = best.max(dot.abs() / n);
    }
    Ok(best)
}

/// The `λmax / 100` rule used for every knockoff regression.
pub fn default_lambda(x: &Matrix, y: &Vector) -> Result<f64> {
    Ok(lambda_max(x, y)? / 100.0)
}

/// Cyclic coordinate descent on
/// `½γᵀGγ − bᵀγ + Σ_j penalty_j |γ_j|`.
///
/// Coordinates with a non-positive Gram diagonal are held at zero. The
/// gradient `b − Gγ` is maintained incrementally (covariance updates) and
/// recomputed from scratch before convergence is declared.
///
/// Once the sweeps have slowed down, the solver periodically moves towards the
/// exact solution on the current active set and sign pattern,
/// `G_AA γ_A = b_A − penalty_A·sign_A`, dropping coordinates that reach zero
/// on the way. Convergence is still decided by a full sweep.
pub(crate) fn solve_gram_lasso(
    gram: &Matrix,
    linear: &Vector,
    penalty: &[f64],
    warm_start: Option<&Vector>,
    tol: f64,
    max_iter: usize,
) -> (Vector, usize, bool) {
    let d = linear.len();
    let mut gamma = warm_start.cloned().unwrap_or_else(|| Vector::zeros(d));
    let mut grad = linear - gram * &gamma;
    let mut iterations = 0;
    let mut converged = false;
    let mut next_polish = POLISH_EVERY;
    let mut polish_failures = 0;
    while iterations < max_iter {
        iterations += 1;
        let max_change = sweep(gram, penalty, &mut gamma, &mut grad);
        if max_change < tol {
            // refresh the gradient to shed accumulated rounding, then confirm
            // with one more sweep
            grad = linear - gram * &gamma;
            let stable = (0..d).all(|j| {
                let gjj = gram[(j, j)];
                if gjj <= 0.0 {
                    return true;
                }
                (coordinate_update(grad[j], gjj, gamma[j], penalty[j]) - gamma[j]).abs()
                    * gjj.sqrt()
                    < tol
            });
            if stable {
                converged = true;
                break;
            }
        } else if max_change < POLISH_BELOW && iterations >= next_polish {
            next_polish = match polish(gram, linear, penalty, &gamma) {
                Some((g, r, optimal)) => {
                    gamma = g;
                    grad = r;
                    // support changed; retry after one sweep
                    if optimal {
                        iterations + 1
                    } else {
                        iterations + 2
                    }
                }
                None => {
                    polish_failures += 1;
                    iterations + (POLISH_EVERY << polish_failures.min(3))
                }
            };
        }
    }
    (gamma, iterations, converged)
}

const POLISH_BELOW: f64 = 1e-2;
const POLISH_EVERY: usize = 20;

fn coordinate_update(grad_j: f64, gjj: f64, old: f64, penalty_j: f64) -> f64 {
    let z = grad_j + gjj * old;
    if z.abs() <= penalty_j * (1.0 + TIE_SLACK) {
        0.0
    } else {
        soft_threshold(z, penalty_j) / gjj
    }
}

/// One cyclic pass; returns the largest scaled coefficient change.
fn sweep(gram: &Matrix, penalty: &[f64], gamma: &mut Vector, grad: &mut Vector) -> f64 {
    let d = gamma.len();
    let g = gram.as_slice();
    let grad = grad.as_mut_slice();
    let mut max_change = 0.0f64;
    for j in 0..d {
        let col = &g[j * d..(j + 1) * d];
        let gjj = col[j];
        if gjj <= 0.0 {
            continue;
        }
        let old = gamma[j];
        let new = coordinate_update(grad[j], gjj, old, penalty[j]);
        if new != old {
            let delta = new - old;
            for (r, c) in grad.iter_mut().zip(col) {
                *r -= delta * c;
            }
            gamma[j] = new;
            max_change = max_change.max(delta.abs() * gjj.sqrt());
        }
    }
    max_change
}

/// Primal active-set steps from `gamma` on its support with its signs. Each
/// step moves towards the exact fixed-sign solution and stops where the first
/// coordinate reaches zero, which then leaves the support; the fixed-sign
/// objective is convex along the segment, so no step increases the lasso
/// objective. A singular active Gram block makes that objective linear along
/// its null space; the step then follows the null-space part of the gradient.
/// Steps that would not decrease the objective in floating point end the
/// search.
/// Returns the new point, its gradient and whether it is optimal.
fn polish(
    gram: &Matrix,
    linear: &Vector,
    penalty: &[f64],
    gamma: &Vector,
) -> Option<(Vector, Vector, bool)> {
    let mut point = gamma.clone();
    let mut full_step = false;
    let mut moved = false;
    let mut active: Vec<usize> = (0..point.len()).filter(|&j| point[j] != 0.0).collect();
    // carried across steps and downdated as coordinates leave
    let mut factor: Option<ActiveFactor> = None;
    while !full_step && !active.is_empty() {
        let g_aa = gram
            .select_rows(active.iter())
            .select_columns(active.iter());
        let rhs = Vector::from_iterator(
            active.len(),
            active
                .iter()
                .map(|&j| linear[j] - penalty[j] * point[j].signum()),
        );
        let current = Vector::from_iterator(active.len(), active.iter().map(|&j| point[j]));
        let slope = &g_aa * &current - &rhs;
        let f = factor.get_or_insert_with(|| ActiveFactor::new(&g_aa));
        let (direction, max_step) = match f {
            ActiveFactor::Cholesky(chol) => (chol.solve(&rhs) - &current, 1.0),
            ActiveFactor::Null(basis) => (-(&*basis * (basis.transpose() * &slope)), f64::INFINITY),
        };
        // step length at which each coordinate would change sign
        let crossing: Vec<f64> = current
            .iter()
            .zip(direction.iter())
            .map(|(&c, &d)| if c * d < 0.0 { -c / d } else { f64::INFINITY })
            .collect();
        let t = crossing.iter().copied().fold(max_step, f64::min);
        let change = t * direction.dot(&slope) + 0.5 * t * t * direction.dot(&(&g_aa * &direction));
        if !(t > 0.0 && t.is_finite() && change < 0.0) {
            break;
        }
        let mut dropped = Vec::new();
        for (k, &j) in active.iter().enumerate() {
            point[j] = if crossing[k] > t {
                current[k] + t * direction[k]
            } else {
                0.0
            };
            if point[j] == 0.0 {
                dropped.push(k);
            }
        }
        for &k in dropped.iter().rev() {
            active.remove(k);
            factor = factor.and_then(|f| f.remove(k));
        }
        full_step = t == 1.0;
        moved = true;
    }
    if !moved {
        return None;
    }
    let grad = linear - gram * &point;
    let optimal = full_step
        && (0..point.len()).all(|j| {
            point[j] != 0.0 || gram[(j, j)] <= 0.0 || grad[j].abs() <= penalty[j] * (1.0 + 1e-9)
        });
    Some((point, grad, optimal))
}

/// Factorization of the active Gram block: a Cholesky factor, or an
/// orthonormal null-space basis when the block is singular.
enum ActiveFactor {
    Cholesky(Cholesky<f64, Dyn>),
    Null(Matrix),
}

impl ActiveFactor {
    fn new(g: &Matrix) -> Self {
        if let Some(chol) = g.clone().cholesky() {
            return ActiveFactor::Cholesky(chol);
        }
        let eig = g.clone().symmetric_eigen();
        let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
        let null: Vec<usize> = (0..g.nrows())
            .filter(|&k| eig.eigenvalues[k] <= 1e-10 * scale)
            .collect();
        ActiveFactor::Null(eig.eigenvectors.select_columns(null.iter()))
    }

    /// Factor of the block with row and column `k` removed; `None` once the
    /// null space is exhausted and the block has to be refactored.
    fn remove(self, k: usize) -> Option<Self> {
        match self {
            ActiveFactor::Cholesky(chol) => Some(ActiveFactor::Cholesky(chol.remove_column(k))),
            ActiveFactor::Null(basis) => {
                // null vectors of the smaller block are the old ones vanishing
                // at k; a reflection puts row k into the first column
                let row = basis.row(k).transpose();
                let norm = row.norm();
                let mut rotated = basis;
                if norm > 0.0 {
                    let mut u = row / norm;
                    u[0] -= 1.0;
                    let un = u.norm();
                    if un > 0.0 {
                        u /= un;
                        let proj = &rotated * &u;
                        rotated -= 2.0 * proj * u.transpose();
                    }
                    rotated = rotated.remove_column(0);
                }
                let rotated = rotated.remove_row(k);
                (rotated.ncols() > 0).then_some(ActiveFactor::Null(rotated))
            }
        }
    }
}

/// Fit the lasso at a fixed penalty by cyclic coordinate descent.
///
/// Columns are centered and scaled to unit standard deviation internally and
/// the penalty is rescaled per column, so the solution is that of the
/// original-scale objective. Zero-variance columns get a zero coefficient.
pub fn lasso_fit(
    x: &Matrix,
    y: &Vector,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LassoFit> {
    check_xy(x, y)?;
    let n = x.nrows() as f64;
    let (means, sds) = column_moments(x);
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        if sds[j] > 0.0 {
            col.add_scalar_mut(-means[j]);
        } else {
            col.fill(0.0);
        }
    }
    let ybar = y.mean();
    let mut yc = y.clone();
    yc.add_scalar_mut(-ybar);
    let xct = xc.transpose();
    let cov = &xct * &xc / n;
    let cross = &xct * &yc / n;
    lasso_from_moments(&cov, &cross, means.as_slice(), ybar, lambda, tol, max_iter)
}

/// Lasso from centered second moments: `cov = (1/n)X_cᵀX_c`,
/// `cross = (1/n)X_cᵀy_c`, column means and the response mean. Columns with
/// zero variance keep a zero coefficient.
pub(crate) fn lasso_from_moments(
    cov: &Matrix,
    cross: &Vector,
    means: &[f64],
    ybar: f64,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LassoFit> {
    ensure!(
        lambda >= 0.0 && lambda.is_finite(),
        "lambda must be finite and >= 0, got {lambda}"
    );
    ensure!(tol > 0.0, "tol must be > 0, got {tol}");
    let d = cross.len();
    let sds: Vec<f64> = (0..d).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let mut gram = Matrix::from_fn(d, d, |i, j| {
        if sds[i] > 0.0 && sds[j] > 0.0 {
            cov[(i, j)] / (sds[i] * sds[j])
        } else {
            0.0
        }
    });
    for j in 0..d {
        // standardized columns have unit diagonal; pin it so duplicated
        // columns see bit-identical updates
        gram[(j, j)] = if sds[j] > 0.0 { 1.0 } else { 0.0 };
    }
    let linear = Vector::from_fn(d, |j, _| if sds[j] > 0.0 { cross[j] / sds[j] } else { 0.0 });
    let penalty: Vec<f64> = sds
        .iter()
        .map(|&sd| if sd > 0.0 { lambda / sd } else { f64::INFINITY })
        .collect();

    let (gamma, n_iterations, converged) =
        solve_gram_lasso(&gram, &linear, &penalty, None, tol, max_iter);

    let mut coefficients = Vector::zeros(d);
    for j in 0..d {
        if sds[j] > 0.0 {
            coefficients[j] = gamma[j] / sds[j];
        }
    }
    let intercept = ybar
        - coefficients
            .iter()
            .zip(means)
            .map(|(b, m)| b * m)
            .sum::<f64>();
    let mut warnings = Vec::new();
    if !converged {
        let msg = format!(
            "lasso did not converge in {max_iter} sweeps (lambda = {lambda:.3e}, {d} features)"
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(LassoFit {
        coefficients,
        lambda,
        intercept,
        n_iterations,
        converged,
        warnings,
    })
}

/// `½n⁻¹‖y − b − Xβ‖² + λ‖β‖₁` at `(β, b)`.
pub fn lasso_objective(
    x: &Matrix,
    y: &Vector,
    coefficients: &Vector,
    intercept: f64,
    lambda: f64,
) -> f64 {
    let n = x.nrows() as f64;
    let mut r = y - x * coefficients;
    r.add_scalar_mut(-intercept);
    0.5 * r.norm_squared() / n + lambda * coefficients.iter().map(|v| v.abs()).sum::<f64>()
}

/// Largest violation of the lasso optimality conditions on the original
/// scale: `|(1/n)X_jᵀr − λ·sign(β_j)|` for active coordinates and
/// `max(0, |(1/n)X_jᵀr| − λ)` for inactive ones, with `r` the residual.
pub fn kkt_violation(x: &Matrix, y: &Vector, fit: &LassoFit) -> f64 {
    let n = x.nrows() as f64;
    let mut r = y - x * &fit.coefficients;
    r.add_scalar_mut(-fit.intercept);
    let mut worst = 0.0f64;
    for (j, col) in x.column_iter().enumerate() {
        let mean = col.mean();
        let c: f64 = col
            .iter()
            .zip(r.iter())
            .map(|(a, b)| (a - mean) * b)
            .sum::<f64>()
            / n;
        let beta = fit.coefficients[j];
        let v = if beta != 0.0 {
            (c - fit.lambda * beta.signum()).abs()
        } else {
            (c.abs() - fit.lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}
