use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::manifest::VERSION;

#[derive(Debug, Parser)]
#[command(name = "knockforge", version = VERSION, about = "Model-X knockoffs: generation, selection and diagnostics")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Master seed; every random draw derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Refuse to run without an explicit --seed.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Worker threads.
    #[arg(long, global = true, env = "KNOCKFORGE_WORKERS", default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a smoothed Gaussian design, sparse support and response.
    Simulate(SimulateArgs),
    /// Generate knockoffs for a design.
    Knockoffs(KnockoffsArgs),
    /// Knockoff statistics and selection at level q.
    Select(SelectArgs),
    /// Exchangeability diagnostics.
    #[command(subcommand)]
    Diagnose(DiagnoseCommand),
    /// Batch simulation benchmark.
    Benchmark(BenchmarkArgs),
    /// Covariance gap of parallel generation over a sweep of correlations.
    GapSweep(GapSweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Field shape a,b,c; p = a·b·c.
    #[arg(long, default_value = "10,10,2", value_parser = parse_shape)]
    pub shape: [usize; 3],
    /// Standard deviation of the smoothing kernel, in voxels.
    #[arg(long, default_value_t = 0.0)]
    pub kernel_width: f64,
    #[arg(long, default_value_t = 0.1)]
    pub sparsity: f64,
    #[arg(long, default_value_t = 2.0)]
    pub snr: f64,
    /// Rescale smoothed columns to unit variance.
    #[arg(long)]
    pub standardize: bool,
    /// Also write the exact design covariance as sigma.csv.
    #[arg(long)]
    pub write_oracle: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Gaussian,
    Sequential,
    Parallel,
    Crossfit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CovArg {
    Empirical,
    Lw,
    Glasso,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PermutationArg {
    Independent,
    Shared,
}

#[derive(Debug, Clone, Args)]
pub struct KnockoffsArgs {
    /// Design CSV.
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Covariance estimator for the gaussian method.
    #[arg(long, value_enum, default_value = "lw")]
    pub cov: CovArg,
    /// Covariance CSV for --cov oracle.
    #[arg(long)]
    pub oracle_sigma: Option<PathBuf>,
    /// Column lasso penalty as a fraction of λmax.
    #[arg(long, default_value_t = 0.01)]
    pub lambda_fraction: f64,
    #[arg(long, default_value_t = 5)]
    pub crossfit_folds: usize,
    /// Penalty grid for --cov glasso, as multiples of the largest
    /// off-diagonal correlation.
    #[arg(long, value_delimiter = ',')]
    pub glasso_multipliers: Option<Vec<f64>>,
    #[arg(long, default_value_t = 3)]
    pub glasso_folds: usize,
    /// Residual permutations of the parallel method.
    #[arg(long, value_enum, default_value = "independent")]
    pub permutation: PermutationArg,
    /// Knockoff CSV to write; the manifest and generation log go next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub x_tilde: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub q: f64,
    /// LCD lasso penalty as a fraction of λmax of the joint design.
    #[arg(long, default_value_t = 0.01, conflicts_with = "lambda")]
    pub lambda_fraction: f64,
    /// Absolute LCD lasso penalty.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Report π statistics and their BH selection only.
    #[arg(long)]
    pub emit_pi_only: bool,
    /// JSON report path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DiagnoseCommand {
    /// Classifier two-sample test between original and knockoff rows.
    C2st(C2stArgs),
    /// Optimal-assignment check of the row pairing.
    Pairing(PairingArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureMapArg {
    Linear,
    Squares,
    Quadratic,
}

#[derive(Debug, Clone, Args)]
pub struct PairArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub x_tilde: PathBuf,
    /// JSON report path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct C2stOptions {
    #[arg(long, default_value_t = 1.0)]
    pub l2_penalty: f64,
    #[arg(long, value_enum, default_value = "quadratic")]
    pub feature_map: FeatureMapArg,
    /// Principal components kept by the quadratic feature map.
    #[arg(long, default_value_t = 10)]
    pub components: usize,
    /// Significance level of the verdict.
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Args)]
pub struct C2stArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[command(flatten)]
    pub options: C2stOptions,
}

#[derive(Debug, Clone, Args)]
pub struct PairingArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Identity fraction below which mispairing is reported.
    #[arg(long, default_value_t = 0.99)]
    pub threshold: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_rows: usize,
    /// Check a random subset of --max-rows pairs on larger inputs.
    #[arg(long)]
    pub subsample: bool,
    /// Shuffle this fraction of knockoff rows before checking.
    #[arg(long)]
    pub shuffle_pairings: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    /// TOML file with benchmark settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated methods, e.g. gaussian-glasso,parallel.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_parser = parse_shape)]
    pub shape: Option<[usize; 3]>,
    #[arg(long)]
    pub kernel_width: Option<f64>,
    /// Kernel widths to sweep; overrides --kernel-width.
    #[arg(long, value_delimiter = ',')]
    pub w_sweep: Option<Vec<f64>>,
    #[arg(long)]
    pub sparsity: Option<f64>,
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub standardize: bool,
    #[arg(long)]
    pub skip_c2st: bool,
    /// Also time sequential against parallel generation.
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GapSweepArgs {
    /// Correlations to sweep (default 0, 0.05, ..., 0.95, 0.99).
    #[arg(long, value_delimiter = ',')]
    pub rho: Option<Vec<f64>>,
    #[arg(long, default_value_t = 200_000)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn parse_shape(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!(
            "expected three comma-separated sizes a,b,c, got {s:?}"
        ));
    }
    let mut shape = [0; 3];
    for (k, part) in parts.iter().enumerate() {
        shape[k] = part
            .parse()
            .map_err(|_| format!("{part:?} is not a nonnegative integer"))?;
        if shape[k] == 0 {
            return Err("shape entries must be positive".into());
        }
    }
    Ok(shape)
}
