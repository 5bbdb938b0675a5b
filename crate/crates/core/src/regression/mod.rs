//! Sparse linear regression and the binary linear classifier.
//!
//! Both learners are pure functions of their inputs. The traits at the bottom
//! are the plug-in points used by the knockoff generators and the two-sample
//! test; only the linear learners in this module implement them.

mod classifier;
mod lasso;

pub use classifier::{classifier_fit, classifier_predict, LinearClassifierFit, LogisticClassifier};
pub use lasso::{
    default_lambda, kkt_violation, lambda_max, lasso_fit, lasso_objective, soft_threshold,
    LassoFit, LASSO_MAX_ITER, LASSO_TOL,
};

use crate::error::Result;
use crate::linalg::{Matrix, Vector};

/// A fitted regression model.
pub trait FittedRegressor: Send + Sync {
    fn predict(&self, x: &Matrix) -> Vector;

    /// Penalty used for the fit, when the learner has one.
    fn penalty(&self) -> Option<f64> {
        None
    }

    fn converged(&self) -> bool {
        true
    }
}

/// A fitted binary classifier producing hard labels in {0, 1}.
pub trait FittedClassifier: Send + Sync {
    fn predict(&self, z: &Matrix) -> Result<Vec<u8>>;
}

/// A trainable binary classifier.
pub trait BinaryClassifier: Send + Sync {
    fn fit(&self, z: &Matrix, labels: &[u8]) -> Result<Box<dyn FittedClassifier>>;
}

/// Plain linear predictor `x·coefficients + intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub coefficients: Vector,
    pub intercept: f64,
}

impl FittedRegressor for LinearModel {
    fn predict(&self, x: &Matrix) -> Vector {
        let mut out = x * &self.coefficients;
        out.add_scalar_mut(self.intercept);
        out
    }
}
