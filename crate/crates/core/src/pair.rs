//! The (X, X̃) pair produced by every knockoff generator.

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnockoffMethod {
    Gaussian,
    Sequential,
    Parallel,
    Crossfit,
}

impl KnockoffMethod {
    pub const ALL: [KnockoffMethod; 4] = [
        KnockoffMethod::Gaussian,
        KnockoffMethod::Sequential,
        KnockoffMethod::Parallel,
        KnockoffMethod::Crossfit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KnockoffMethod::Gaussian => "gaussian",
            KnockoffMethod::Sequential => "sequential",
            KnockoffMethod::Parallel => "parallel",
            KnockoffMethod::Crossfit => "crossfit",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Per-column record of a nonparametric generation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnLog {
    pub column: usize,
    /// Penalty of the column regression (averaged over folds for cross-fitting).
    pub lambda: f64,
    /// Mean squared residual of the column regression.
    pub residual_variance: f64,
    pub converged: bool,
}

/// Row-aligned originals and knockoffs: row `i` of `x_tilde` was generated
/// from row `i` of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnockoffPair {
    pub x: Matrix,
    pub x_tilde: Matrix,
    pub method: KnockoffMethod,
    pub seed: u64,
    pub generation_log: Vec<ColumnLog>,
    pub warnings: Vec<String>,
    /// Nonparametric methods: the regression predictions `f_j(row i)` each
    /// knockoff entry was built on.
    pub fitted: Option<Matrix>,
    /// Nonparametric methods: the residuals `ε̂_j` (held-out residuals for
    /// cross-fitting) before permutation or resampling.
    pub residuals: Option<Matrix>,
}
