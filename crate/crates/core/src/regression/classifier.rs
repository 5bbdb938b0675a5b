use super::{BinaryClassifier, FittedClassifier};
use crate::error::{ensure, KnockoffError, Result};
use crate::linalg::{Matrix, Vector};

/// L2-regularized logistic-loss linear classifier.
///
/// Training minimizes `Σ_i [log(1 + e^{s_i}) − l_i s_i] + (l2/2)‖w‖²` with
/// `s_i = z_iᵀw + bias` by damped Newton steps from `w = 0, bias = 0`. The
/// bias is not penalized. `objective_trace` holds the objective after every
/// accepted step and is non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifierFit {
    pub weights: Vector,
    pub bias: f64,
    pub l2_penalty: f64,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

impl LinearClassifierFit {
    pub fn scores(&self, z: &Matrix) -> Result<Vector> {
        ensure!(
            z.ncols() == self.weights.len(),
            "classifier expects {} features, got {}",
            self.weights.len(),
            z.ncols()
        );
        let mut s = z * &self.weights;
        s.add_scalar_mut(self.bias);
        Ok(s)
    }
}

impl FittedClassifier for LinearClassifierFit {
    fn predict(&self, z: &Matrix) -> Result<Vec<u8>> {
        classifier_predict(self, z)
    }
}

/// Numerically stable `log(1 + e^s)`.
fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

fn objective(z: &Matrix, labels: &[f64], w: &Vector, bias: f64, l2: f64) -> f64 {
    let mut s = z * w;
    s.add_scalar_mut(bias);
    let loss: f64 = s
        .iter()
        .zip(labels)
        .map(|(&si, &li)| softplus(si) - li * si)
        .sum();
    loss + 0.5 * l2 * w.norm_squared()
}

const CLASSIFIER_TOL: f64 = 1e-8;
const CLASSIFIER_MAX_ITER: usize = 100;

pub fn classifier_fit(z: &Matrix, labels: &[u8], l2_penalty: f64) -> Result<LinearClassifierFit> {
    let (m, d) = z.shape();
    ensure!(labels.len() == m, "{} labels for {} rows", labels.len(), m);
    ensure!(
        l2_penalty > 0.0 && l2_penalty.is_finite(),
        "l2_penalty must be > 0, got {l2_penalty}"
    );
    ensure!(labels.iter().all(|&l| l <= 1), "labels must be 0 or 1");
    let ones = labels.iter().filter(|&&l| l == 1).count();
    ensure!(
        ones > 0 && ones < m,
        "training data contains a single class"
    );

    let lab: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let mut w = Vector::zeros(d);
    let mut bias = 0.0;
    let mut f = objective(z, &lab, &w, bias, l2_penalty);
    let mut trace = vec![f];
    let mut converged = false;

    for _ in 0..CLASSIFIER_MAX_ITER {
        let mut s = z * &w;
        s.add_scalar_mut(bias);
        let p: Vec<f64> = s.iter().map(|&v| sigmoid(v)).collect();
        let resid = Vector::from_iterator(m, p.iter().zip(&lab).map(|(pi, li)| pi - li));
        let curv: Vec<f64> = p.iter().map(|pi| (pi * (1.0 - pi)).max(1e-12)).collect();

        // augmented system over (w, bias)
        let mut grad = Vector::zeros(d + 1);
        grad.rows_mut(0, d)
            .copy_from(&(z.tr_mul(&resid) + &w * l2_penalty));
        grad[d] = resid.sum();

        let mut weighted = z.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= curv[i];
        }
        let mut hess = Matrix::zeros(d + 1, d + 1);
        hess.view_mut((0, 0), (d, d))
            .copy_from(&z.tr_mul(&weighted));
        let zw_sum = weighted.row_sum_tr();
        for j in 0..d {
            hess[(j, j)] += l2_penalty;
            hess[(j, d)] = zw_sum[j];
            hess[(d, j)] = zw_sum[j];
        }
        hess[(d, d)] = curv.iter().sum::<f64>() + 1e-12;

        let step = hess
            .cholesky()
            .ok_or_else(|| {
                KnockoffError::Numerical("classifier Hessian is not positive definite".into())
            })?
            .solve(&grad);

        let mut t = 1.0;
        let mut accepted = false;
        let slope = -grad.dot(&step);
        for _ in 0..50 {
            let w_new = &w - &step.rows(0, d) * t;
            let b_new = bias - step[d] * t;
            let f_new = objective(z, &lab, &w_new, b_new, l2_penalty);
            if f_new <= f + 1e-4 * t * slope {
                w = w_new;
                bias = b_new;
                let decrease = f - f_new;
                f = f_new;
                trace.push(f);
                accepted = true;
                if step.amax() * t < CLASSIFIER_TOL
                    || decrease <= CLASSIFIER_TOL * f.abs().max(1.0) * 1e-4
                {
                    converged = true;
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no descent direction left at machine precision
            converged = true;
        }
        if converged {
            break;
        }
    }

    Ok(LinearClassifierFit {
        weights: w,
        bias,
        l2_penalty,
        converged,
        objective_trace: trace,
    })
}

/// Hard labels from the sign of the linear score; a score of exactly zero
/// maps to label 0.
pub fn classifier_predict(fit: &LinearClassifierFit, z: &Matrix) -> Result<Vec<u8>> {
    Ok(fit.scores(z)?.iter().map(|&s| u8::from(s > 0.0)).collect())
}

/// Logistic classifier configuration for use behind [`BinaryClassifier`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticClassifier {
    pub l2_penalty: f64,
}

impl Default for LogisticClassifier {
    fn default() -> Self {
        Self { l2_penalty: 1.0 }
    }
}

impl BinaryClassifier for LogisticClassifier {
    fn fit(&self, z: &Matrix, labels: &[u8]) -> Result<Box<dyn FittedClassifier>> {
        Ok(Box::new(classifier_fit(z, labels, self.l2_penalty)?))
    }
}
