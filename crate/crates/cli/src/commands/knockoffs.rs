use knockforge::covariance::{CovarianceEstimate, CovarianceMethod};
use knockforge::gaussian::gaussian_knockoffs;
use knockforge::nonparametric::{
    crossfit_knockoffs, parallel_knockoffs, sequential_knockoffs, LambdaRule, LassoLearner,
    PermutationMode,
};
use knockforge::rng::derive_seed;
use knockforge::simulation::{estimate_covariance, BenchmarkOptions};
use knockforge::{KnockoffPair, Matrix};
use serde_json::json;

use super::Context;
use crate::args::{CovArg, KnockoffsArgs, MethodArg, PermutationArg};
use crate::error::{CliError, CliResult};
use crate::io::{json_f64, matrix_csv, read_matrix, sidecar, write_json, write_text};
use crate::manifest::RunManifest;

const TAG_COVARIANCE: u64 = 6;

fn cov_method(c: CovArg) -> CovarianceMethod {
    match c {
        CovArg::Empirical => CovarianceMethod::Empirical,
        CovArg::Lw => CovarianceMethod::LedoitWolf,
        CovArg::Glasso => CovarianceMethod::GraphicalLasso,
        CovArg::Oracle => CovarianceMethod::Oracle,
    }
}

fn covariance_json(est: &CovarianceEstimate) -> serde_json::Value {
    json!({
        "method": est.method.short_name(),
        "shrinkage_or_penalty": json_f64(est.shrinkage_or_penalty),
        "min_eigenvalue": json_f64(est.min_eigenvalue),
        "converged": est.converged,
    })
}

pub fn run(args: &KnockoffsArgs, ctx: Context) -> CliResult<()> {
    if !(args.lambda_fraction >= 0.0 && args.lambda_fraction.is_finite()) {
        return Err(CliError::Usage(format!(
            "--lambda-fraction must be >= 0, got {}",
            args.lambda_fraction
        )));
    }
    let mut manifest = RunManifest::new(ctx.seed, ctx.workers);
    let x = read_matrix(&args.x)?;
    manifest.input(&args.x)?;
    let learner = LassoLearner::new(LambdaRule::MaxFraction(args.lambda_fraction));
    let mut covariance = serde_json::Value::Null;

    let pair: KnockoffPair = match args.method {
        MethodArg::Gaussian => {
            let method = cov_method(args.cov);
            let oracle: Option<Matrix> = match (&args.oracle_sigma, method) {
                (Some(path), CovarianceMethod::Oracle) => {
                    let s = read_matrix(path)?;
                    manifest.input(path)?;
                    if s.nrows() != x.ncols() || s.ncols() != x.ncols() {
                        return Err(CliError::Data(format!(
                            "{} is {}x{} but {} has {} columns",
                            path.display(),
                            s.nrows(),
                            s.ncols(),
                            args.x.display(),
                            x.ncols()
                        )));
                    }
                    Some(s)
                }
                (None, CovarianceMethod::Oracle) => {
                    return Err(CliError::Usage("--cov oracle needs --oracle-sigma".into()));
                }
                (Some(_), _) => {
                    return Err(CliError::Usage(
                        "--oracle-sigma is only used with --cov oracle".into(),
                    ))
                }
                (None, _) => None,
            };
            let mut options = BenchmarkOptions::default();
            if let Some(m) = &args.glasso_multipliers {
                options.glasso_multipliers = m.clone();
            }
            options.glasso_folds = args.glasso_folds;
            let est = estimate_covariance(
                &x,
                method,
                oracle.as_ref(),
                &options,
                derive_seed(ctx.seed, &[TAG_COVARIANCE]),
            )
            .map_err(|e| CliError::from(e).context(&args.x.display().to_string()))?;
            covariance = covariance_json(&est);
            gaussian_knockoffs(&x, &est, ctx.seed)?
        }
        MethodArg::Sequential => sequential_knockoffs(&x, &learner, ctx.seed)?,
        MethodArg::Parallel => {
            let mode = match args.permutation {
                PermutationArg::Independent => PermutationMode::Independent,
                PermutationArg::Shared => PermutationMode::Shared,
            };
            parallel_knockoffs(&x, &learner, ctx.seed, ctx.workers, mode)?
        }
        MethodArg::Crossfit => crossfit_knockoffs(&x, &learner, args.crossfit_folds, ctx.seed)?,
    };
    for w in &pair.warnings {
        log::warn!("{w}");
    }

    write_text(&args.out, &matrix_csv(&pair.x_tilde))?;
    manifest.output(&args.out);
    let log_path = sidecar(&args.out, "log.json");
    write_json(
        &log_path,
        &json!({
            "method": pair.method,
            "seed": pair.seed,
            "n": x.nrows(),
            "p": x.ncols(),
            "covariance": covariance,
            "generation_log": pair.generation_log,
            "warnings": pair.warnings,
        }),
    )?;
    manifest.output(&log_path);
    manifest.write(&sidecar(&args.out, "manifest.json"))?;
    Ok(())
}
