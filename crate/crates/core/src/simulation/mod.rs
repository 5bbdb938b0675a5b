//! Smoothed-Gaussian simulation and the batch benchmark.

mod benchmark;
mod design;
mod gap;

pub use benchmark::{
    estimate_covariance, generate_knockoffs, run_benchmark, run_seed, run_single, simulate_run,
    summarize, BenchmarkError, BenchmarkOptions, BenchmarkRow, BenchmarkTable, MethodSpec,
    MethodSummary, RunData, CSV_HEADER,
};
pub use design::{
    design_covariance, draw_support, generate_design, generate_response, kernel_weights,
    oracle_covariance, shuffle_pairings, smoothing_operator, support_size, SimulationConfig,
    SimulationTruth, Support,
};
pub use gap::{
    bivariate_gaussian, default_rho_grid, parallel_gap_point, parallel_gap_sweep, GapPoint,
    GAP_CSV_HEADER,
};
