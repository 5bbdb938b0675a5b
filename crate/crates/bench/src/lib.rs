//! Fixtures shared by the benchmarks.

use knockforge::simulation::{generate_design, simulate_run, RunData, SimulationConfig};
use knockforge::Matrix;

/// The default simulation setting at kernel width `w`.
pub fn config(w: f64) -> SimulationConfig {
    SimulationConfig {
        kernel_width: w,
        ..Default::default()
    }
}

pub fn design(w: f64, seed: u64) -> Matrix {
    generate_design(&config(w), seed).expect("valid default config")
}

pub fn run(w: f64, seed: u64) -> RunData {
    simulate_run(&config(w), seed).expect("valid default config")
}
