//! Classifier two-sample test between original and knockoff rows.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, KnockoffError, Result};
use crate::folds::shuffled_folds;
use crate::linalg::{column_moments, Matrix};
use crate::regression::{classifier_fit, classifier_predict};
use crate::rng::{derive_seed, rng_from_seed};

/// Features handed to the linear classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMap {
    /// The standardized columns.
    Linear,
    /// Standardized columns and their squares.
    Squares,
    /// All monomials of degree ≤ 2 in the leading `components` principal
    /// component scores of the training rows.
    Quadratic { components: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C2stConfig {
    pub l2_penalty: f64,
    pub feature_map: FeatureMap,
    /// A violation is reported when the p-value is below this level.
    pub alpha: f64,
}

impl Default for C2stConfig {
    fn default() -> Self {
        Self {
            l2_penalty: 1.0,
            feature_map: FeatureMap::Quadratic { components: 10 },
            alpha: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum C2stVerdict {
    ConsistentWithExchangeability,
    ViolationDetected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C2STReport {
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub n_test_total: usize,
    pub correct_total: usize,
    pub p_value: f64,
    pub verdict: C2stVerdict,
    /// Fold splits discarded because a training set held a single class.
    pub resplits: usize,
}

/// `[X; X̃]` with labels 0 for original rows and 1 for knockoff rows.
pub fn build_c2st_dataset(x: &Matrix, x_tilde: &Matrix) -> Result<(Matrix, Vec<u8>)> {
    ensure!(
        x.shape() == x_tilde.shape(),
        "originals are {:?} but knockoffs are {:?}",
        x.shape(),
        x_tilde.shape()
    );
    let (n, p) = x.shape();
    let mut z = Matrix::zeros(2 * n, p);
    z.rows_mut(0, n).copy_from(x);
    z.rows_mut(n, n).copy_from(x_tilde);
    let labels = (0..2 * n).map(|i| u8::from(i >= n)).collect();
    Ok((z, labels))
}

/// One-sided tail `P[Bin(n, ½) ≥ correct]`, summed exactly in log space.
pub fn c2st_pvalue(correct: usize, n: usize) -> Result<f64> {
    ensure!(correct <= n, "correct count {correct} exceeds {n} trials");
    if correct == 0 {
        return Ok(1.0);
    }
    let ln2 = std::f64::consts::LN_2;
    // log C(n, correct)
    let mut log_c: f64 = (0..correct)
        .map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln())
        .sum();
    let mut terms = Vec::with_capacity(n - correct + 1);
    for k in correct..=n {
        terms.push(log_c - n as f64 * ln2);
        if k < n {
            log_c += ((n - k) as f64).ln() - ((k + 1) as f64).ln();
        }
    }
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total = top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln();
    Ok(total.exp().min(1.0))
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Pairs `(x_i, x̃_i)` sorted lexicographically on the concatenated rows, so
/// the split depends on the pair multiset and the seed only.
fn canonical_pairs(x: &Matrix, x_tilde: &Matrix) -> (Matrix, Matrix) {
    let key: Vec<Vec<f64>> = x
        .row_iter()
        .zip(x_tilde.row_iter())
        .map(|(a, b)| a.iter().chain(b.iter()).copied().collect())
        .collect();
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.sort_by(|&a, &b| lexicographic(&key[a], &key[b]));
    (x.select_rows(&order), x_tilde.select_rows(&order))
}

struct Standardizer {
    means: Vec<f64>,
    scales: Vec<f64>,
}

impl Standardizer {
    fn fit(z: &Matrix) -> Self {
        let (m, s) = column_moments(z);
        Self {
            means: m.iter().copied().collect(),
            scales: s.iter().map(|&v| if v > 0.0 { v } else { 1.0 }).collect(),
        }
    }

    fn apply(&self, z: &Matrix) -> Matrix {
        Matrix::from_fn(z.nrows(), z.ncols(), |i, j| {
            (z[(i, j)] - self.means[j]) / self.scales[j]
        })
    }
}

/// The trained feature transform of one fold.
enum Transform {
    Linear(Standardizer),
    Squares(Standardizer),
    Quadratic {
        base: Standardizer,
        loadings: Matrix,
    },
}

impl Transform {
    fn fit(map: FeatureMap, train: &Matrix) -> Self {
        let base = Standardizer::fit(train);
        match map {
            FeatureMap::Linear => Transform::Linear(base),
            FeatureMap::Squares => Transform::Squares(base),
            FeatureMap::Quadratic { components } => {
                let zs = base.apply(train);
                let p = zs.ncols();
                let k = components.clamp(1, p);
                let cov = zs.tr_mul(&zs) / zs.nrows().max(1) as f64;
                let eig = cov.symmetric_eigen();
                let mut order: Vec<usize> = (0..p).collect();
                order.sort_by(|&a, &b| {
                    eig.eigenvalues[b]
                        .total_cmp(&eig.eigenvalues[a])
                        .then(a.cmp(&b))
                });
                let mut loadings = Matrix::zeros(p, k);
                for (c, &idx) in order.iter().take(k).enumerate() {
                    let mut v = eig.eigenvectors.column(idx).into_owned();
                    // fix the sign so the transform is deterministic
                    let lead =
                        v.iter()
                            .copied()
                            .fold(0.0f64, |acc, e| if e.abs() > acc.abs() { e } else { acc });
                    if lead < 0.0 {
                        v = -v;
                    }
                    loadings.set_column(c, &v);
                }
                Transform::Quadratic { base, loadings }
            }
        }
    }

    fn apply(&self, z: &Matrix) -> Matrix {
        match self {
            Transform::Linear(s) => s.apply(z),
            Transform::Squares(s) => {
                let zs = s.apply(z);
                let p = zs.ncols();
                Matrix::from_fn(zs.nrows(), 2 * p, |i, j| {
                    if j < p {
                        zs[(i, j)]
                    } else {
                        zs[(i, j - p)].powi(2)
                    }
                })
            }
            Transform::Quadratic { base, loadings } => {
                let scores = base.apply(z) * loadings;
                let k = scores.ncols();
                let mut cols = Vec::with_capacity(k + k * (k + 1) / 2);
                for a in 0..k {
                    cols.push(scores.column(a).into_owned());
                }
                for a in 0..k {
                    for b in a..k {
                        cols.push(scores.column(a).component_mul(&scores.column(b)));
                    }
                }
                Matrix::from_columns(&cols)
            }
        }
    }
}

fn fold_accuracy(
    z: &Matrix,
    labels: &[u8],
    folds: &[usize],
    fold: usize,
    config: &C2stConfig,
) -> Result<(usize, usize)> {
    let train: Vec<usize> = (0..z.nrows()).filter(|&i| folds[i] != fold).collect();
    let test: Vec<usize> = (0..z.nrows()).filter(|&i| folds[i] == fold).collect();
    let train_z = z.select_rows(&train);
    let train_l: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
    let transform = Transform::fit(config.feature_map, &train_z);
    let mut features = transform.apply(&train_z);
    // second standardization keeps the penalty comparable across monomials
    let rescale = Standardizer::fit(&features);
    features = rescale.apply(&features);
    let fit = classifier_fit(&features, &train_l, config.l2_penalty)?;
    let test_features = rescale.apply(&transform.apply(&z.select_rows(&test)));
    let pred = classifier_predict(&fit, &test_features)?;
    let correct = test
        .iter()
        .zip(&pred)
        .filter(|(&i, &g)| labels[i] == g)
        .count();
    Ok((correct, test.len()))
}

const MAX_RESPLITS: usize = 100;

/// `folds`-fold C2ST: train on the complement of each fold, score on the
/// fold, pool correct counts for the binomial p-value. Folds are drawn over
/// pairs, so `x_i` and `x̃_i` always land in the same fold and every fold
/// holds equally many rows of each label.
pub fn c2st(
    x: &Matrix,
    x_tilde: &Matrix,
    folds: usize,
    config: &C2stConfig,
    seed: u64,
) -> Result<C2STReport> {
    ensure!(folds >= 2, "C2ST needs at least 2 folds, got {folds}");
    ensure!(config.l2_penalty > 0.0, "l2_penalty must be > 0");
    ensure!(
        config.alpha > 0.0 && config.alpha < 1.0,
        "alpha must lie in (0, 1)"
    );
    ensure!(
        x.shape() == x_tilde.shape(),
        "x is {:?} but x_tilde is {:?}",
        x.shape(),
        x_tilde.shape()
    );
    ensure!(
        2 * x.nrows() >= 2 * folds,
        "{} rows are too few for {folds} folds",
        2 * x.nrows()
    );
    let (xs, xts) = canonical_pairs(x, x_tilde);
    let (z, labels) = build_c2st_dataset(&xs, &xts)?;
    let n = xs.nrows();

    let mut resplits = 0;
    let assignment = loop {
        let mut rng = rng_from_seed(derive_seed(seed, &[resplits as u64]));
        let pair_folds = shuffled_folds(n, folds, &mut rng);
        let assignment: Vec<usize> = (0..2 * n).map(|i| pair_folds[i % n]).collect();
        let single_class = (0..folds).any(|k| {
            let ones = (0..labels.len())
                .filter(|&i| assignment[i] != k && labels[i] == 1)
                .count();
            let total = assignment.iter().filter(|&&f| f != k).count();
            ones == 0 || ones == total
        });
        if !single_class {
            break assignment;
        }
        resplits += 1;
        log::warn!("C2ST fold split {resplits} left a single-class training set; resplitting");
        if resplits >= MAX_RESPLITS {
            return Err(KnockoffError::Degenerate(
                "no fold split with two classes in every training set".into(),
            ));
        }
    };

    let counts: Vec<Result<(usize, usize)>> = (0..folds)
        .into_par_iter()
        .map(|k| fold_accuracy(&z, &labels, &assignment, k, config))
        .collect();
    let mut fold_accuracies = Vec::with_capacity(folds);
    let mut correct_total = 0;
    let mut n_test_total = 0;
    for c in counts {
        let (correct, total) = c?;
        fold_accuracies.push(correct as f64 / total as f64);
        correct_total += correct;
        n_test_total += total;
    }
    let mean_accuracy = fold_accuracies.iter().sum::<f64>() / folds as f64;
    let p_value = c2st_pvalue(correct_total, n_test_total)?;
    let verdict = if p_value < config.alpha {
        C2stVerdict::ViolationDetected
    } else {
        C2stVerdict::ConsistentWithExchangeability
    };
    Ok(C2STReport {
        fold_accuracies,
        mean_accuracy,
        n_test_total,
        correct_total,
        p_value,
        verdict,
        resplits,
    })
}
