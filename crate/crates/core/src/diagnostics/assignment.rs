//! Linear assignment and the sample-pairing check.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, KnockoffError, Result};
use crate::linalg::{column_moments, Matrix};
use crate::rng::rng_from_seed;

/// Minimum-cost perfect matching of rows to columns; `out[i]` is the column
/// assigned to row `i`. Shortest augmenting paths with potentials, `O(n³)`.
pub fn hungarian(cost: &Matrix) -> Result<Vec<usize>> {
    let n = cost.nrows();
    ensure!(
        cost.ncols() == n,
        "cost matrix must be square, got {}x{}",
        n,
        cost.ncols()
    );
    ensure!(
        cost.iter().all(|c| c.is_finite()),
        "cost matrix has non-finite entries"
    );
    if n == 0 {
        return Ok(Vec::new());
    }
    // 1-based arrays; index 0 is the virtual root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[owner[j] - 1] = j - 1;
    }
    Ok(out)
}

/// Total cost of an assignment.
pub fn assignment_cost(cost: &Matrix, assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[(i, j)])
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingVerdict {
    Paired,
    MispairingDetected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingReport {
    pub assignment: Vec<usize>,
    pub identity_fraction: f64,
    pub total_cost: f64,
    pub verdict: PairingVerdict,
    /// Rows used when the input was subsampled, in assignment order.
    pub rows: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairingConfig {
    /// Mispairing is flagged when the identity fraction is below this.
    pub threshold: f64,
    pub max_rows: usize,
    /// Above `max_rows`, assign a uniform subsample of `max_rows` pairs
    /// instead of failing.
    pub subsample: bool,
    pub seed: u64,
}

impl Default for PairingConfig {
    fn default() -> Self {
        Self {
            threshold: 0.99,
            max_rows: 5000,
            subsample: false,
            seed: 0,
        }
    }
}

/// Squared Euclidean distances `C_ij = ‖x_i − x̃_j‖²` after standardizing
/// each column with the pooled mean and standard deviation of `[X; X̃]`.
pub fn pairing_cost(x: &Matrix, x_tilde: &Matrix) -> Result<Matrix> {
    ensure!(
        x.shape() == x_tilde.shape(),
        "originals and knockoffs differ in shape"
    );
    let (n, p) = x.shape();
    let mut pooled = Matrix::zeros(2 * n, p);
    pooled.rows_mut(0, n).copy_from(x);
    pooled.rows_mut(n, n).copy_from(x_tilde);
    let (means, sds) = column_moments(&pooled);
    for (j, mut col) in pooled.column_iter_mut().enumerate() {
        let sd = if sds[j] > 0.0 { sds[j] } else { 1.0 };
        col.add_scalar_mut(-means[j]);
        col /= sd;
    }
    let a = pooled.rows(0, n);
    let b = pooled.rows(n, n);
    let an: Vec<f64> = a.row_iter().map(|r| r.norm_squared()).collect();
    let bn: Vec<f64> = b.row_iter().map(|r| r.norm_squared()).collect();
    let cross = a * b.transpose();
    Ok(Matrix::from_fn(n, n, |i, j| {
        (an[i] + bn[j] - 2.0 * cross[(i, j)]).max(0.0)
    }))
}

/// Optimal assignment of knockoff rows to original rows; a well-paired
/// knockoff matrix is assigned (almost) to the identity.
pub fn pairing_check(
    x: &Matrix,
    x_tilde: &Matrix,
    config: &PairingConfig,
) -> Result<PairingReport> {
    ensure!(
        x.shape() == x_tilde.shape(),
        "originals are {:?} but knockoffs are {:?}",
        x.shape(),
        x_tilde.shape()
    );
    ensure!(
        (0.0..=1.0).contains(&config.threshold),
        "threshold must lie in [0, 1]"
    );
    ensure!(config.max_rows >= 1, "row cap must be >= 1");
    let n = x.nrows();
    ensure!(n >= 1, "pairing check needs at least one row");
    let (xs, xts, rows) = if n > config.max_rows {
        if !config.subsample {
            return Err(KnockoffError::Contract(format!(
                "{n} rows exceed the pairing cap of {}; enable subsampling to check a random subset",
                config.max_rows
            )));
        }
        let mut rows =
            index::sample(&mut rng_from_seed(config.seed), n, config.max_rows).into_vec();
        rows.sort_unstable();
        (x.select_rows(&rows), x_tilde.select_rows(&rows), Some(rows))
    } else {
        (x.clone(), x_tilde.clone(), None)
    };
    let cost = pairing_cost(&xs, &xts)?;
    let assignment = hungarian(&cost)?;
    let m = assignment.len();
    let identity_fraction = assignment
        .iter()
        .enumerate()
        .filter(|(i, &j)| *i == j)
        .count() as f64
        / m as f64;
    let verdict = if identity_fraction < config.threshold {
        PairingVerdict::MispairingDetected
    } else {
        PairingVerdict::Paired
    };
    Ok(PairingReport {
        total_cost: assignment_cost(&cost, &assignment),
        assignment,
        identity_fraction,
        verdict,
        rows,
    })
}
