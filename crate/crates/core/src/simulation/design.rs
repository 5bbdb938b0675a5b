//! Smoothed Gaussian designs on a 3-D grid, supports, responses and the
//! pairing shuffle.

use rand::seq::{index, SliceRandom};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, KnockoffError, Result};
use crate::linalg::{Matrix, Vector};
use crate::rng::rng_from_seed;

/// Benchmark configuration. `shape` is the voxel grid, flattened row-major so
/// that the last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    pub shape: [usize; 3],
    pub kernel_width: f64,
    pub sparsity: f64,
    pub snr: f64,
    pub seed: u64,
    pub runs: usize,
    pub q: f64,
    /// Rescale every smoothed column to unit variance.
    pub standardize: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n: 200,
            shape: [10, 10, 2],
            kernel_width: 0.0,
            sparsity: 0.1,
            snr: 2.0,
            seed: 0,
            runs: 30,
            q: 0.1,
            standardize: false,
        }
    }
}

impl SimulationConfig {
    pub fn p(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn support_size(&self) -> usize {
        support_size(self.p(), self.sparsity)
    }

    pub fn validate(&self) -> Result<()> {
        check_shape(self.shape)?;
        ensure!(self.n >= 1, "n must be >= 1");
        ensure!(
            self.kernel_width >= 0.0 && self.kernel_width.is_finite(),
            "kernel width must be >= 0, got {}",
            self.kernel_width
        );
        ensure!(
            self.sparsity > 0.0 && self.sparsity <= 1.0,
            "sparsity must lie in (0, 1], got {}",
            self.sparsity
        );
        ensure!(
            self.support_size() >= 1,
            "sparsity {} leaves an empty support for p = {}",
            self.sparsity,
            self.p()
        );
        ensure!(
            self.snr > 0.0 && self.snr.is_finite(),
            "snr must be > 0, got {}",
            self.snr
        );
        ensure!(
            self.q > 0.0 && self.q < 1.0,
            "q must lie in (0, 1), got {}",
            self.q
        );
        Ok(())
    }
}

/// True coefficients, the null and non-null sets and the noise scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTruth {
    pub beta_star: Vector,
    pub h1: Vec<usize>,
    pub h0: Vec<usize>,
    pub sigma_noise: f64,
    pub seed: u64,
}

fn check_shape(shape: [usize; 3]) -> Result<()> {
    ensure!(
        shape.iter().all(|&d| d > 0),
        "grid dimensions must be positive, got {shape:?}"
    );
    Ok(())
}

/// `⌊s_p·p⌋`, robust to representation error in the product.
pub fn support_size(p: usize, sparsity: f64) -> usize {
    (sparsity * p as f64 + 1e-9).floor() as usize
}

/// Half-sample symmetric reflection into `0..len` (`d c b a | a b c d | d c b a`).
fn reflect(i: isize, len: usize) -> usize {
    let period = 2 * len as isize;
    let m = i.rem_euclid(period) as usize;
    if m < len {
        m
    } else {
        2 * len - 1 - m
    }
}

/// Normalized 1-D Gaussian weights of standard deviation `w` on offsets
/// `−r..=r` with `r = ⌈4w⌉`.
pub fn kernel_weights(w: f64) -> Vec<f64> {
    if w == 0.0 {
        return vec![1.0];
    }
    let r = (4.0 * w).ceil() as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|k| (-(k * k) as f64 / (2.0 * w * w)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// One axis of the convolution as a `len × len` matrix with reflected
/// boundaries: `out = K · in`.
fn axis_operator(len: usize, weights: &[f64]) -> Matrix {
    let r = (weights.len() / 2) as isize;
    let mut k = Matrix::zeros(len, len);
    for out in 0..len {
        for (t, &wt) in weights.iter().enumerate() {
            let src = reflect(out as isize + t as isize - r, len);
            k[(out, src)] += wt;
        }
    }
    k
}

/// The `p × p` smoothing operator `A` (flattened field in, flattened field
/// out). The kernel is separable, so `A = K_a ⊗ K_b ⊗ K_c`.
pub fn smoothing_operator(shape: [usize; 3], w: f64) -> Result<Matrix> {
    check_shape(shape)?;
    ensure!(
        w >= 0.0 && w.is_finite(),
        "kernel width must be >= 0, got {w}"
    );
    let weights = kernel_weights(w);
    let [a, b, c] = shape;
    let ka = axis_operator(a, &weights);
    let kb = axis_operator(b, &weights);
    let kc = axis_operator(c, &weights);
    Ok(ka.kronecker(&kb).kronecker(&kc))
}

/// Exact covariance `A·Aᵀ` of the smoothed field.
pub fn oracle_covariance(shape: [usize; 3], w: f64) -> Result<Matrix> {
    let a = smoothing_operator(shape, w)?;
    let mut sigma = &a * a.transpose();
    crate::linalg::symmetrize(&mut sigma);
    Ok(sigma)
}

/// `n` smoothed fields as rows, optionally with unit-variance columns (the
/// population variance of each column, so the oracle covariance becomes a
/// correlation matrix).
pub fn generate_design(config: &SimulationConfig, seed: u64) -> Result<Matrix> {
    config.validate()?;
    let p = config.p();
    let mut rng = rng_from_seed(seed);
    let mut z = Matrix::zeros(config.n, p);
    // row-major draw order, independent of the matrix storage order
    for i in 0..config.n {
        for j in 0..p {
            z[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    if config.kernel_width == 0.0 {
        return Ok(z);
    }
    let a = smoothing_operator(config.shape, config.kernel_width)?;
    let mut x = z * a.transpose();
    if config.standardize {
        let scale = column_scales(&a);
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col /= scale[j];
        }
    }
    Ok(x)
}

fn column_scales(a: &Matrix) -> Vec<f64> {
    a.row_iter().map(|r| r.norm()).collect()
}

/// Covariance of designs produced by [`generate_design`] under `config`.
pub fn design_covariance(config: &SimulationConfig) -> Result<Matrix> {
    let sigma = oracle_covariance(config.shape, config.kernel_width)?;
    if !config.standardize {
        return Ok(sigma);
    }
    let d: Vec<f64> = (0..sigma.nrows()).map(|i| sigma[(i, i)].sqrt()).collect();
    Ok(Matrix::from_fn(sigma.nrows(), sigma.ncols(), |i, j| {
        sigma[(i, j)] / (d[i] * d[j])
    }))
}

/// Support, null and non-null sets (noise scale still unset).
#[derive(Debug, Clone, PartialEq)]
pub struct Support {
    pub beta_star: Vector,
    pub h1: Vec<usize>,
    pub h0: Vec<usize>,
}

impl Support {
    pub fn with_noise(self, sigma_noise: f64, seed: u64) -> SimulationTruth {
        SimulationTruth {
            beta_star: self.beta_star,
            h1: self.h1,
            h0: self.h0,
            sigma_noise,
            seed,
        }
    }
}

/// Uniform draw of `⌊s_p·p⌋` indices without replacement.
pub fn draw_support(p: usize, sparsity: f64, seed: u64) -> Result<Support> {
    ensure!(
        sparsity > 0.0 && sparsity <= 1.0,
        "sparsity must lie in (0, 1], got {sparsity}"
    );
    let k = support_size(p, sparsity);
    ensure!(k >= 1 && k <= p, "support size {k} is invalid for p = {p}");
    let mut rng = rng_from_seed(seed);
    let mut h1 = index::sample(&mut rng, p, k).into_vec();
    h1.sort_unstable();
    let mut beta_star = Vector::zeros(p);
    for &j in &h1 {
        beta_star[j] = 1.0;
    }
    let h0 = (0..p).filter(|j| beta_star[*j] == 0.0).collect();
    Ok(Support { beta_star, h1, h0 })
}

/// `y = Xβ* + σε` with `σ = ‖Xβ*‖ / (snr·‖ε‖)`.
pub fn generate_response(
    x: &Matrix,
    beta_star: &Vector,
    snr: f64,
    seed: u64,
) -> Result<(Vector, f64)> {
    ensure!(snr > 0.0, "snr must be > 0, got {snr}");
    ensure!(
        beta_star.len() == x.ncols(),
        "beta has {} entries for {} columns",
        beta_star.len(),
        x.ncols()
    );
    ensure!(
        beta_star.iter().any(|&b| b != 0.0),
        "beta_star has no nonzero entry"
    );
    let signal = x * beta_star;
    let signal_norm = signal.norm();
    if signal_norm == 0.0 {
        return Err(KnockoffError::Degenerate(
            "the signal Xβ* is identically zero".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let eps = Vector::from_fn(x.nrows(), |_, _| StandardNormal.sample(&mut rng));
    let sigma = signal_norm / (snr * eps.norm());
    Ok((signal + eps * sigma, sigma))
}

/// Moves `⌊fraction·n⌋` uniformly chosen rows along one random cycle, so
/// every chosen row leaves its place.
pub fn shuffle_pairings(x_tilde: &Matrix, fraction: f64, seed: u64) -> Result<Matrix> {
    ensure!(
        (0.0..=1.0).contains(&fraction),
        "fraction must lie in [0, 1], got {fraction}"
    );
    let n = x_tilde.nrows();
    let k = (fraction * n as f64 + 1e-9).floor() as usize;
    let mut out = x_tilde.clone();
    if k < 2 {
        return Ok(out);
    }
    let mut rng = rng_from_seed(seed);
    let mut chosen = index::sample(&mut rng, n, k).into_vec();
    chosen.shuffle(&mut rng);
    for (t, &dst) in chosen.iter().enumerate() {
        out.set_row(dst, &x_tilde.row(chosen[(t + 1) % k]));
    }
    Ok(out)
}
