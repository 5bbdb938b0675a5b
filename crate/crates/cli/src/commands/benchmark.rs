use std::fs;
use std::path::Path;
use std::time::Instant;

use knockforge::inference::LcdLambda;
use knockforge::nonparametric::{
    parallel_knockoffs, sequential_knockoffs, LambdaRule, LassoLearner, PermutationMode,
};
use knockforge::simulation::{
    run_benchmark, run_seed, simulate_run, summarize, BenchmarkError, BenchmarkOptions,
    BenchmarkRow, BenchmarkTable, MethodSpec, MethodSummary, SimulationConfig, CSV_HEADER,
};
use serde::{Deserialize, Serialize};

use super::Context;
use crate::args::{BenchmarkArgs, C2stOptions, FeatureMapArg};
use crate::commands::diagnose::c2st_config;
use crate::error::{CliError, CliResult};
use crate::io::{fmt_f64, write_json, write_text};
use crate::manifest::RunManifest;

/// Keys accepted in a benchmark TOML file.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkFile {
    pub n: Option<usize>,
    pub shape: Option<[usize; 3]>,
    pub kernel_width: Option<f64>,
    pub w_sweep: Option<Vec<f64>>,
    pub sparsity: Option<f64>,
    pub snr: Option<f64>,
    pub q: Option<f64>,
    pub runs: Option<usize>,
    pub methods: Option<Vec<String>>,
    pub standardize: Option<bool>,
    pub skip_c2st: Option<bool>,
    pub timing: Option<bool>,
    pub c2st_folds: Option<usize>,
    pub l2_penalty: Option<f64>,
    pub feature_map: Option<String>,
    pub components: Option<usize>,
    pub lcd_lambda_fraction: Option<f64>,
    pub learner_lambda_fraction: Option<f64>,
    pub glasso_multipliers: Option<Vec<f64>>,
    pub glasso_folds: Option<usize>,
    pub crossfit_folds: Option<usize>,
}

pub const DEFAULT_METHODS: [&str; 2] = ["gaussian-glasso", "parallel"];

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub n: usize,
    pub p: usize,
    pub workers: usize,
    pub sequential_ms: f64,
    pub parallel_ms: f64,
    pub speedup: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkSummary {
    pub seed: u64,
    pub w_sweep: Vec<f64>,
    pub methods: Vec<String>,
    pub runs: usize,
    pub summaries: Vec<MethodSummary>,
    pub errors: Vec<BenchmarkError>,
    pub timing: Option<Timing>,
}

fn read_file(path: &Path) -> CliResult<BenchmarkFile> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn parse_methods(names: &[String]) -> CliResult<Vec<MethodSpec>> {
    let mut specs = Vec::new();
    for name in names {
        let spec = MethodSpec::parse(name.trim()).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown method {name:?}; valid methods: {}",
                MethodSpec::valid_names().join(", ")
            ))
        })?;
        if !specs.contains(&spec) {
            specs.push(spec);
        }
    }
    if specs.is_empty() {
        return Err(CliError::Usage("no methods given".into()));
    }
    Ok(specs)
}

fn feature_map(name: &str) -> CliResult<FeatureMapArg> {
    match name {
        "linear" => Ok(FeatureMapArg::Linear),
        "squares" => Ok(FeatureMapArg::Squares),
        "quadratic" => Ok(FeatureMapArg::Quadratic),
        other => Err(CliError::Usage(format!(
            "unknown feature_map {other:?}; use linear, squares or quadratic"
        ))),
    }
}

/// Everything a benchmark needs, after merging file and flags.
pub struct Plan {
    pub config: SimulationConfig,
    pub sweep: Vec<f64>,
    pub specs: Vec<MethodSpec>,
    pub options: BenchmarkOptions,
    pub timing: bool,
}

pub fn plan(args: &BenchmarkArgs, file: &BenchmarkFile, ctx: Context) -> CliResult<Plan> {
    let base = SimulationConfig::default();
    let config = SimulationConfig {
        n: args.n.or(file.n).unwrap_or(base.n),
        shape: args.shape.or(file.shape).unwrap_or(base.shape),
        kernel_width: args
            .kernel_width
            .or(file.kernel_width)
            .unwrap_or(base.kernel_width),
        sparsity: args.sparsity.or(file.sparsity).unwrap_or(base.sparsity),
        snr: args.snr.or(file.snr).unwrap_or(base.snr),
        q: args.q.or(file.q).unwrap_or(base.q),
        runs: args.runs.or(file.runs).unwrap_or(base.runs),
        standardize: args.standardize || file.standardize.unwrap_or(false),
        seed: ctx.seed,
    };
    let sweep = args
        .w_sweep
        .clone()
        .or_else(|| {
            if args.kernel_width.is_some() {
                None
            } else {
                file.w_sweep.clone()
            }
        })
        .unwrap_or_else(|| vec![config.kernel_width]);
    if sweep.is_empty() {
        return Err(CliError::Usage("empty kernel-width sweep".into()));
    }
    for &w in &sweep {
        SimulationConfig {
            kernel_width: w,
            ..config.clone()
        }
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if config.runs == 0 {
        return Err(CliError::Usage("runs must be >= 1".into()));
    }
    let names: Vec<String> = args
        .methods
        .clone()
        .or_else(|| file.methods.clone())
        .unwrap_or_else(|| DEFAULT_METHODS.iter().map(|s| s.to_string()).collect());
    let specs = parse_methods(&names)?;

    let mut options = BenchmarkOptions {
        workers: ctx.workers,
        skip_c2st: args.skip_c2st || file.skip_c2st.unwrap_or(false),
        ..Default::default()
    };
    let c2 = C2stOptions {
        l2_penalty: file.l2_penalty.unwrap_or(1.0),
        feature_map: feature_map(file.feature_map.as_deref().unwrap_or("quadratic"))?,
        components: file.components.unwrap_or(10),
        alpha: 0.01,
    };
    options.c2st = c2st_config(&c2)?;
    if let Some(f) = file.c2st_folds {
        options.c2st_folds = f;
    }
    if let Some(f) = file.lcd_lambda_fraction {
        options.lcd_lambda = LcdLambda::MaxFraction(f);
    }
    if let Some(f) = file.learner_lambda_fraction {
        options.learner = LassoLearner::new(LambdaRule::MaxFraction(f));
    }
    if let Some(m) = &file.glasso_multipliers {
        options.glasso_multipliers = m.clone();
    }
    if let Some(f) = file.glasso_folds {
        options.glasso_folds = f;
    }
    if let Some(f) = file.crossfit_folds {
        options.crossfit_folds = f;
    }
    Ok(Plan {
        config,
        sweep,
        specs,
        options,
        timing: args.timing || file.timing.unwrap_or(false),
    })
}

/// Sequential against parallel generation on the first run's design.
pub fn time_generation(config: &SimulationConfig, options: &BenchmarkOptions) -> CliResult<Timing> {
    let seed = run_seed(config, 0);
    let data = simulate_run(config, seed)?;
    let start = Instant::now();
    sequential_knockoffs(&data.x, &options.learner, seed)?;
    let sequential_ms = start.elapsed().as_secs_f64() * 1e3;
    let start = Instant::now();
    parallel_knockoffs(
        &data.x,
        &options.learner,
        seed,
        options.workers,
        PermutationMode::Independent,
    )?;
    let parallel_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(Timing {
        n: data.x.nrows(),
        p: data.x.ncols(),
        workers: options.workers,
        sequential_ms,
        parallel_ms,
        speedup: sequential_ms / parallel_ms,
    })
}

pub fn sweep_csv(summaries: &[MethodSummary]) -> String {
    let mut out = String::from("w,method,runs,failed,mean_fdp,mean_power,mean_c2st_acc,null_positive_fraction,mean_wallclock_ms\n");
    for s in summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            fmt_f64(s.w),
            s.method,
            s.runs,
            s.failed,
            fmt_f64(s.mean_fdp),
            fmt_f64(s.mean_power),
            fmt_f64(s.mean_c2st_acc),
            fmt_f64(s.null_positive_fraction),
            fmt_f64(s.mean_wallclock_ms)
        ));
    }
    out
}

pub fn run(args: &BenchmarkArgs, ctx: Context) -> CliResult<()> {
    let mut manifest = RunManifest::new(ctx.seed, ctx.workers);
    let file = match &args.config {
        Some(path) => {
            let f = read_file(path)?;
            manifest.input(path)?;
            f
        }
        None => BenchmarkFile::default(),
    };
    let plan = plan(args, &file, ctx)?;
    let mut rows: Vec<BenchmarkRow> = Vec::new();
    let mut errors = Vec::new();
    for &w in &plan.sweep {
        let config = SimulationConfig {
            kernel_width: w,
            ..plan.config.clone()
        };
        log::info!(
            "kernel width {w}: {} runs of {} methods",
            config.runs,
            plan.specs.len()
        );
        let table = run_benchmark(&config, &plan.specs, &plan.options)?;
        rows.extend(table.rows);
        errors.extend(table.errors);
    }
    for e in &errors {
        log::warn!("run {} {}: {}", e.run, e.method, e.message);
    }
    let table = BenchmarkTable { rows, errors };
    let summaries = summarize(&table);
    let timing = if plan.timing {
        let config = SimulationConfig {
            kernel_width: plan.sweep[0],
            ..plan.config.clone()
        };
        Some(time_generation(&config, &plan.options)?)
    } else {
        None
    };

    let dir = &args.out_dir;
    let csv_path = dir.join("benchmark.csv");
    write_text(&csv_path, &table.to_csv())?;
    let sweep_path = dir.join("sweep.csv");
    write_text(&sweep_path, &sweep_csv(&summaries))?;
    let summary_path = dir.join("summary.json");
    write_json(
        &summary_path,
        &BenchmarkSummary {
            seed: ctx.seed,
            w_sweep: plan.sweep.clone(),
            methods: plan.specs.iter().map(|s| s.to_string()).collect(),
            runs: plan.config.runs,
            summaries,
            errors: table.errors.clone(),
            timing,
        },
    )?;
    for p in [&csv_path, &sweep_path, &summary_path] {
        manifest.output(p);
    }
    manifest.write(&dir.join("manifest.json"))?;
    debug_assert!(table.to_csv().starts_with(CSV_HEADER));
    Ok(())
}
