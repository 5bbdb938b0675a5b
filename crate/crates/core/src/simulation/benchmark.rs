//! Batch benchmark: repeated simulate → knockoffs → select → diagnose runs.

use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::{
    design_covariance, draw_support, generate_design, generate_response, SimulationConfig,
    SimulationTruth,
};
use crate::covariance::{
    default_alpha_multipliers, empirical_covariance, graphical_lasso_cv, ledoit_wolf,
    CovarianceEstimate, CovarianceMethod,
};
use crate::diagnostics::{c2st, C2stConfig};
use crate::error::{KnockoffError, Result};
use crate::gaussian::gaussian_knockoffs;
use crate::inference::{fdp, knockoff_select, lcd_statistics, power, LcdLambda};
use crate::linalg::Matrix;
use crate::nonparametric::{
    crossfit_knockoffs, parallel_knockoffs, sequential_knockoffs, LassoLearner, PermutationMode,
};
use crate::pair::{KnockoffMethod, KnockoffPair};
use crate::rng::derive_seed;

const TAG_DESIGN: u64 = 1;
const TAG_SUPPORT: u64 = 2;
const TAG_RESPONSE: u64 = 3;
const TAG_KNOCKOFFS: u64 = 4;
const TAG_C2ST: u64 = 5;
const TAG_COVARIANCE: u64 = 6;

/// A knockoff generator as run by the benchmark; Gaussian generators carry
/// their covariance estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MethodSpec {
    pub method: KnockoffMethod,
    pub cov: Option<CovarianceMethod>,
}

impl MethodSpec {
    pub fn gaussian(cov: CovarianceMethod) -> Self {
        Self {
            method: KnockoffMethod::Gaussian,
            cov: Some(cov),
        }
    }

    pub fn nonparametric(method: KnockoffMethod) -> Self {
        Self { method, cov: None }
    }

    /// Every knockoff method paired with every covariance option where one
    /// applies.
    pub fn expand(methods: &[KnockoffMethod], covs: &[CovarianceMethod]) -> Vec<Self> {
        let mut out = Vec::new();
        for &m in methods {
            if m == KnockoffMethod::Gaussian {
                out.extend(covs.iter().map(|&c| Self::gaussian(c)));
            } else {
                out.push(Self::nonparametric(m));
            }
        }
        out
    }

    /// `gaussian-<cov>` or the bare nonparametric method name.
    pub fn parse(s: &str) -> Option<Self> {
        if let Some(cov) = s.strip_prefix("gaussian-") {
            return CovarianceMethod::from_short_name(cov).map(Self::gaussian);
        }
        match KnockoffMethod::from_name(s)? {
            KnockoffMethod::Gaussian => None,
            m => Some(Self::nonparametric(m)),
        }
    }

    pub fn valid_names() -> Vec<String> {
        let mut v: Vec<String> = [
            CovarianceMethod::Oracle,
            CovarianceMethod::GraphicalLasso,
            CovarianceMethod::LedoitWolf,
            CovarianceMethod::Empirical,
        ]
        .iter()
        .map(|c| format!("gaussian-{}", c.short_name()))
        .collect();
        v.extend(["sequential", "parallel", "crossfit"].map(String::from));
        v
    }

    fn tag(&self) -> [u64; 2] {
        let m = KnockoffMethod::ALL
            .iter()
            .position(|&k| k == self.method)
            .unwrap_or(0) as u64;
        [m, self.cov.map(|c| c as u64 + 1).unwrap_or(0)]
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.cov {
            Some(c) => write!(f, "{}-{}", self.method.name(), c.short_name()),
            None => f.write_str(self.method.name()),
        }
    }
}

/// Settings shared by every run of a benchmark.
#[derive(Debug, Clone)]
pub struct BenchmarkOptions {
    pub c2st: C2stConfig,
    pub c2st_folds: usize,
    pub lcd_lambda: LcdLambda,
    pub learner: LassoLearner,
    pub workers: usize,
    pub crossfit_folds: usize,
    pub glasso_multipliers: Vec<f64>,
    pub glasso_folds: usize,
    /// Skip the two-sample test (its columns become NaN).
    pub skip_c2st: bool,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            c2st: C2stConfig::default(),
            c2st_folds: 5,
            lcd_lambda: LcdLambda::default(),
            learner: LassoLearner::default(),
            workers: 1,
            crossfit_folds: 5,
            glasso_multipliers: default_alpha_multipliers(),
            glasso_folds: 3,
            skip_c2st: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub run: usize,
    pub method: String,
    pub cov: String,
    pub w: f64,
    pub n: usize,
    pub p: usize,
    pub q: f64,
    pub fdp: f64,
    pub power: f64,
    pub c2st_acc: f64,
    pub c2st_pval: f64,
    /// Run seed; [`run_single`] with this seed reproduces the row.
    pub seed: u64,
    pub wallclock_ms: u128,
    pub n_selected: usize,
    pub null_positive: usize,
    pub null_negative: usize,
    pub error: Option<String>,
}

pub const CSV_HEADER: &str =
    "run,method,cov,w,n,p,q,fdp,power,c2st_acc,c2st_pval,seed,wallclock_ms";

impl BenchmarkRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.run,
            self.method,
            self.cov,
            self.w,
            self.n,
            self.p,
            self.q,
            self.fdp,
            self.power,
            self.c2st_acc,
            self.c2st_pval,
            self.seed,
            self.wallclock_ms
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkError {
    pub run: usize,
    pub method: String,
    pub message: String,
}

/// Rows sorted by (run, method order); failed runs keep their row with NaN
/// metrics and an entry in `errors`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchmarkRow>,
    pub errors: Vec<BenchmarkError>,
}

impl BenchmarkTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }

    /// Rows of one method label.
    pub fn method_rows<'a>(
        &'a self,
        method: &'a str,
    ) -> impl Iterator<Item = &'a BenchmarkRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }
}

/// Covariance estimate used by a Gaussian generator.
pub fn estimate_covariance(
    x: &Matrix,
    method: CovarianceMethod,
    oracle: Option<&Matrix>,
    options: &BenchmarkOptions,
    seed: u64,
) -> Result<CovarianceEstimate> {
    match method {
        CovarianceMethod::Empirical => empirical_covariance(x),
        CovarianceMethod::LedoitWolf => ledoit_wolf(x),
        CovarianceMethod::GraphicalLasso => {
            graphical_lasso_cv(x, &options.glasso_multipliers, options.glasso_folds, seed)
        }
        CovarianceMethod::Oracle => match oracle {
            Some(s) => CovarianceEstimate::oracle(s.clone()),
            None => Err(KnockoffError::Contract(
                "oracle covariance requested but none supplied".into(),
            )),
        },
    }
}

/// Knockoffs for one method.
pub fn generate_knockoffs(
    x: &Matrix,
    spec: MethodSpec,
    oracle: Option<&Matrix>,
    options: &BenchmarkOptions,
    seed: u64,
) -> Result<KnockoffPair> {
    match spec.method {
        KnockoffMethod::Gaussian => {
            let cov = spec.cov.unwrap_or(CovarianceMethod::LedoitWolf);
            let est = estimate_covariance(
                x,
                cov,
                oracle,
                options,
                derive_seed(seed, &[TAG_COVARIANCE]),
            )?;
            gaussian_knockoffs(x, &est, seed)
        }
        KnockoffMethod::Sequential => sequential_knockoffs(x, &options.learner, seed),
        KnockoffMethod::Parallel => parallel_knockoffs(
            x,
            &options.learner,
            seed,
            options.workers,
            PermutationMode::Independent,
        ),
        KnockoffMethod::Crossfit => {
            crossfit_knockoffs(x, &options.learner, options.crossfit_folds, seed)
        }
    }
}

/// Simulated design, response and truth of one run.
pub struct RunData {
    pub x: Matrix,
    pub y: crate::linalg::Vector,
    pub truth: SimulationTruth,
}

pub fn run_seed(config: &SimulationConfig, run: usize) -> u64 {
    derive_seed(config.seed, &[run as u64])
}

pub fn simulate_run(config: &SimulationConfig, seed: u64) -> Result<RunData> {
    let x = generate_design(config, derive_seed(seed, &[TAG_DESIGN]))?;
    let support = draw_support(
        config.p(),
        config.sparsity,
        derive_seed(seed, &[TAG_SUPPORT]),
    )?;
    let (y, sigma) = generate_response(
        &x,
        &support.beta_star,
        config.snr,
        derive_seed(seed, &[TAG_RESPONSE]),
    )?;
    Ok(RunData {
        x,
        y,
        truth: support.with_noise(sigma, seed),
    })
}

struct Metrics {
    fdp: f64,
    power: f64,
    c2st_acc: f64,
    c2st_pval: f64,
    n_selected: usize,
    null_positive: usize,
    null_negative: usize,
}

fn evaluate(
    data: &RunData,
    spec: MethodSpec,
    config: &SimulationConfig,
    oracle: Option<&Matrix>,
    options: &BenchmarkOptions,
    seed: u64,
) -> Result<Metrics> {
    let tag = spec.tag();
    let pair = generate_knockoffs(
        &data.x,
        spec,
        oracle,
        options,
        derive_seed(seed, &[TAG_KNOCKOFFS, tag[0], tag[1]]),
    )?;
    for w in &pair.warnings {
        log::warn!("{spec}: {w}");
    }
    let stats = lcd_statistics(&pair.x, &pair.x_tilde, &data.y, options.lcd_lambda)?;
    if !stats.fit_converged {
        log::warn!("{spec}: statistic lasso did not converge");
    }
    let sel = knockoff_select(&stats.w, config.q)?;
    let h0 = &data.truth.h0;
    let (c2st_acc, c2st_pval) = if options.skip_c2st {
        (f64::NAN, f64::NAN)
    } else {
        let rep = c2st(
            &pair.x,
            &pair.x_tilde,
            options.c2st_folds,
            &options.c2st,
            derive_seed(seed, &[TAG_C2ST, tag[0], tag[1]]),
        )?;
        (rep.mean_accuracy, rep.p_value)
    };
    Ok(Metrics {
        fdp: fdp(&sel.selected, h0),
        power: power(&sel.selected, &data.truth.h1)?,
        c2st_acc,
        c2st_pval,
        n_selected: sel.selected.len(),
        null_positive: h0.iter().filter(|&&j| stats.w[j] > 0.0).count(),
        null_negative: h0.iter().filter(|&&j| stats.w[j] < 0.0).count(),
    })
}

fn row(
    config: &SimulationConfig,
    run: usize,
    spec: MethodSpec,
    seed: u64,
    metrics: std::result::Result<Metrics, String>,
    elapsed: u128,
) -> BenchmarkRow {
    let (m, error) = match metrics {
        Ok(m) => (m, None),
        Err(e) => (
            Metrics {
                fdp: f64::NAN,
                power: f64::NAN,
                c2st_acc: f64::NAN,
                c2st_pval: f64::NAN,
                n_selected: 0,
                null_positive: 0,
                null_negative: 0,
            },
            Some(e),
        ),
    };
    BenchmarkRow {
        run,
        method: spec.to_string(),
        cov: spec
            .cov
            .map(|c| c.short_name())
            .unwrap_or("none")
            .to_string(),
        w: config.kernel_width,
        n: config.n,
        p: config.p(),
        q: config.q,
        fdp: m.fdp,
        power: m.power,
        c2st_acc: m.c2st_acc,
        c2st_pval: m.c2st_pval,
        seed,
        wallclock_ms: elapsed,
        n_selected: m.n_selected,
        null_positive: m.null_positive,
        null_negative: m.null_negative,
        error,
    }
}

/// All methods on the run with seed `seed`.
pub fn run_single(
    config: &SimulationConfig,
    specs: &[MethodSpec],
    options: &BenchmarkOptions,
    run: usize,
    seed: u64,
) -> Vec<BenchmarkRow> {
    let oracle = if specs
        .iter()
        .any(|s| s.cov == Some(CovarianceMethod::Oracle))
    {
        design_covariance(config).ok()
    } else {
        None
    };
    let data = simulate_run(config, seed);
    specs
        .iter()
        .map(|&spec| {
            let start = Instant::now();
            let metrics = match &data {
                Ok(d) => evaluate(d, spec, config, oracle.as_ref(), options, seed)
                    .map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            };
            row(
                config,
                run,
                spec,
                seed,
                metrics,
                start.elapsed().as_millis(),
            )
        })
        .collect()
}

/// `config.runs` independent runs of every method.
pub fn run_benchmark(
    config: &SimulationConfig,
    specs: &[MethodSpec],
    options: &BenchmarkOptions,
) -> Result<BenchmarkTable> {
    config.validate()?;
    crate::error::ensure!(config.runs >= 1, "runs must be >= 1");
    crate::error::ensure!(!specs.is_empty(), "no methods given");
    let per_run: Vec<Vec<BenchmarkRow>> = (0..config.runs)
        .into_par_iter()
        .map(|r| run_single(config, specs, options, r, run_seed(config, r)))
        .collect();
    let rows: Vec<BenchmarkRow> = per_run.into_iter().flatten().collect();
    let errors = rows
        .iter()
        .filter_map(|r| {
            r.error.as_ref().map(|e| BenchmarkError {
                run: r.run,
                method: r.method.clone(),
                message: e.clone(),
            })
        })
        .collect();
    Ok(BenchmarkTable { rows, errors })
}

/// Per-method means of a table, ignoring failed rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub w: f64,
    pub runs: usize,
    pub failed: usize,
    pub mean_fdp: f64,
    pub mean_power: f64,
    pub mean_c2st_acc: f64,
    /// Positive fraction among nonzero null statistics, pooled over runs.
    pub null_positive_fraction: f64,
    pub mean_wallclock_ms: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn summarize(table: &BenchmarkTable) -> Vec<MethodSummary> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in &table.rows {
        if !keys.iter().any(|(m, w)| *m == r.method && *w == r.w) {
            keys.push((r.method.clone(), r.w));
        }
    }
    keys.into_iter()
        .map(|(method, w)| {
            let all: Vec<&BenchmarkRow> = table
                .rows
                .iter()
                .filter(|r| r.method == method && r.w == w)
                .collect();
            let ok: Vec<&BenchmarkRow> =
                all.iter().copied().filter(|r| r.error.is_none()).collect();
            let pos: usize = ok.iter().map(|r| r.null_positive).sum();
            let neg: usize = ok.iter().map(|r| r.null_negative).sum();
            MethodSummary {
                runs: all.len(),
                failed: all.len() - ok.len(),
                mean_fdp: mean(ok.iter().map(|r| r.fdp)),
                mean_power: mean(ok.iter().map(|r| r.power)),
                mean_c2st_acc: mean(ok.iter().map(|r| r.c2st_acc)),
                null_positive_fraction: if pos + neg == 0 {
                    f64::NAN
                } else {
                    pos as f64 / (pos + neg) as f64
                },
                mean_wallclock_ms: mean(ok.iter().map(|r| r.wallclock_ms as f64)),
                method,
                w,
            }
        })
        .collect()
}
