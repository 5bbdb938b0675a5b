//! Column regressors used by the nonparametric generators.

use crate::error::{ensure, Result};
use crate::linalg::{column_moments, Matrix, Vector};
use crate::regression::{
    lambda_max, lasso_fit, FittedRegressor, LinearModel, LASSO_MAX_ITER, LASSO_TOL,
};

/// Where the regression for one knockoff column sits in the generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnContext {
    /// Column being regressed.
    pub column: usize,
    /// Number of variables `p`.
    pub n_variables: usize,
    /// The first `n_variables − 1` features are `X_{−j}` in input order; the
    /// remaining `n_knockoff_features` are knockoff (or auxiliary) columns
    /// `0..n_knockoff_features`.
    pub n_knockoff_features: usize,
}

/// Fits the regression `X_j ~ features` for one column.
///
/// Implementations must be deterministic. Consistency of the learner is what
/// makes the generated knockoffs valid; it cannot be checked at runtime.
pub trait ColumnLearner: Send + Sync {
    fn fit(
        &self,
        features: &Matrix,
        target: &Vector,
        ctx: &ColumnContext,
    ) -> Result<Box<dyn FittedRegressor>>;
}

/// Penalty rule for the column lasso.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    /// `fraction · λmax(features, target)`.
    MaxFraction(f64),
    Fixed(f64),
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::MaxFraction(0.01)
    }
}

impl LambdaRule {
    pub fn lambda(&self, x: &Matrix, y: &Vector) -> Result<f64> {
        match *self {
            LambdaRule::MaxFraction(f) => {
                ensure!(
                    f >= 0.0 && f.is_finite(),
                    "lambda fraction must be >= 0, got {f}"
                );
                Ok(f * lambda_max(x, y)?)
            }
            LambdaRule::Fixed(l) => {
                ensure!(l >= 0.0 && l.is_finite(), "lambda must be >= 0, got {l}");
                Ok(l)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoLearner {
    pub rule: LambdaRule,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LassoLearner {
    fn default() -> Self {
        LassoLearner {
            rule: LambdaRule::default(),
            tol: LASSO_TOL,
            max_iter: LASSO_MAX_ITER,
        }
    }
}

impl LassoLearner {
    pub fn new(rule: LambdaRule) -> Self {
        LassoLearner {
            rule,
            ..Default::default()
        }
    }
}

impl ColumnLearner for LassoLearner {
    fn fit(
        &self,
        features: &Matrix,
        target: &Vector,
        _ctx: &ColumnContext,
    ) -> Result<Box<dyn FittedRegressor>> {
        let lambda = self.rule.lambda(features, target)?;
        Ok(Box::new(lasso_fit(
            features,
            target,
            lambda,
            self.tol,
            self.max_iter,
        )?))
    }
}

/// Regression on `X_{−j}` with the population coefficients
/// `Σ_{−j,−j}⁻¹Σ_{−j,j}` of a known covariance. The intercept matches the
/// sample means. Only valid where the features are exactly `X_{−j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleGaussianLearner {
    pub sigma: Matrix,
}

impl ColumnLearner for OracleGaussianLearner {
    fn fit(
        &self,
        features: &Matrix,
        target: &Vector,
        ctx: &ColumnContext,
    ) -> Result<Box<dyn FittedRegressor>> {
        let p = self.sigma.nrows();
        ensure!(
            ctx.n_variables == p,
            "oracle covariance has dimension {p}, data has {}",
            ctx.n_variables
        );
        ensure!(
            ctx.n_knockoff_features == 0 && features.ncols() == p - 1,
            "the oracle learner only supports regressions on X_-j"
        );
        let j = ctx.column;
        let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
        let s11 = self
            .sigma
            .select_rows(others.iter())
            .select_columns(others.iter());
        let s12 = self.sigma.select_rows(others.iter()).column(j).into_owned();
        let coefficients =
            crate::linalg::spd_solve(&s11, &Matrix::from_column_slice(p - 1, 1, s12.as_slice()))?
                .column(0)
                .into_owned();
        let (means, _) = column_moments(features);
        let intercept = target.mean() - coefficients.dot(&means);
        Ok(Box::new(LinearModel {
            coefficients,
            intercept,
        }))
    }
}
