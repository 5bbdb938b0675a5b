pub mod benchmark;
pub mod diagnose;
pub mod gap;
pub mod knockoffs;
pub mod select;
pub mod simulate;

use std::path::Path;

use knockforge::Matrix;

use crate::error::{CliError, CliResult};

/// Settings shared by every subcommand.
#[derive(Debug, Clone, Copy)]
pub struct Context {
    pub seed: u64,
    pub workers: usize,
}

/// 0-based indices to the 1-based numbering of the CSV headers.
pub fn one_based(idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|i| i + 1).collect()
}

pub fn check_aligned(a: &Matrix, a_path: &Path, b: &Matrix, b_path: &Path) -> CliResult<()> {
    if a.shape() != b.shape() {
        return Err(CliError::Data(format!(
            "{} is {}x{} but {} is {}x{}",
            a_path.display(),
            a.nrows(),
            a.ncols(),
            b_path.display(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(())
}
