//! Model-X knockoffs: Gaussian and nonparametric knockoff generation, the
//! knockoff filter, exchangeability diagnostics and a simulation harness.
//!
//! Matrices are `nalgebra` dense `f64` matrices with observations in rows.
//! Every random draw is derived from an explicit `u64` seed (see [`rng`]).

pub mod covariance;
pub mod diagnostics;
pub mod error;
pub mod folds;
pub mod gaussian;
pub mod inference;
pub mod linalg;
pub mod nonparametric;
pub mod pair;
pub mod regression;
pub mod rng;
pub mod simulation;

#[cfg(test)]
mod test_support;

pub use error::{KnockoffError, Result};
pub use linalg::{Matrix, Vector};
pub use pair::{ColumnLog, KnockoffMethod, KnockoffPair};
