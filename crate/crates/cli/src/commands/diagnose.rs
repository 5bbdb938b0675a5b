use knockforge::diagnostics::{c2st, pairing_check, C2stConfig, FeatureMap, PairingConfig};
use knockforge::rng::derive_seed;
use knockforge::simulation::shuffle_pairings;
use knockforge::Matrix;
use serde_json::json;

use super::{check_aligned, one_based, Context};
use crate::args::{C2stArgs, C2stOptions, FeatureMapArg, PairArgs, PairingArgs};
use crate::error::{CliError, CliResult};
use crate::io::{emit_json, json_f64, read_matrix, sidecar};
use crate::manifest::RunManifest;

const TAG_SHUFFLE: u64 = 1;
const TAG_SUBSAMPLE: u64 = 2;

pub fn c2st_config(o: &C2stOptions) -> CliResult<C2stConfig> {
    if !(o.l2_penalty > 0.0 && o.l2_penalty.is_finite()) {
        return Err(CliError::Usage(format!(
            "--l2-penalty must be > 0, got {}",
            o.l2_penalty
        )));
    }
    if !(o.alpha > 0.0 && o.alpha < 1.0) {
        return Err(CliError::Usage(format!(
            "--alpha must lie in (0, 1), got {}",
            o.alpha
        )));
    }
    let feature_map = match o.feature_map {
        FeatureMapArg::Linear => FeatureMap::Linear,
        FeatureMapArg::Squares => FeatureMap::Squares,
        FeatureMapArg::Quadratic if o.components == 0 => {
            return Err(CliError::Usage("--components must be >= 1".into()));
        }
        FeatureMapArg::Quadratic => FeatureMap::Quadratic {
            components: o.components,
        },
    };
    Ok(C2stConfig {
        l2_penalty: o.l2_penalty,
        feature_map,
        alpha: o.alpha,
    })
}

fn load(pair: &PairArgs, manifest: &mut RunManifest) -> CliResult<(Matrix, Matrix)> {
    let x = read_matrix(&pair.x)?;
    let xt = read_matrix(&pair.x_tilde)?;
    manifest.input(&pair.x)?;
    manifest.input(&pair.x_tilde)?;
    check_aligned(&x, &pair.x, &xt, &pair.x_tilde)?;
    Ok((x, xt))
}

fn finish(pair: &PairArgs, report: &serde_json::Value, mut manifest: RunManifest) -> CliResult<()> {
    emit_json(pair.out.as_deref(), report)?;
    if let Some(out) = &pair.out {
        manifest.output(out);
        manifest.write(&sidecar(out, "manifest.json"))?;
    }
    Ok(())
}

pub fn run_c2st(args: &C2stArgs, ctx: Context) -> CliResult<()> {
    let config = c2st_config(&args.options)?;
    if args.folds < 2 {
        return Err(CliError::Usage(format!(
            "--folds must be >= 2, got {}",
            args.folds
        )));
    }
    let mut manifest = RunManifest::new(ctx.seed, ctx.workers);
    let (x, xt) = load(&args.pair, &mut manifest)?;
    let rep = c2st(&x, &xt, args.folds, &config, ctx.seed)?;
    let report = json!({
        "fold_accuracies": rep.fold_accuracies,
        "mean_accuracy": json_f64(rep.mean_accuracy),
        "n_test_total": rep.n_test_total,
        "correct_total": rep.correct_total,
        "p_value": json_f64(rep.p_value),
        "verdict": rep.verdict,
        "resplits": rep.resplits,
        "folds": args.folds,
        "feature_map": config.feature_map,
        "l2_penalty": config.l2_penalty,
        "alpha": config.alpha,
    });
    finish(&args.pair, &report, manifest)
}

pub fn run_pairing(args: &PairingArgs, ctx: Context) -> CliResult<()> {
    if !(args.threshold > 0.0 && args.threshold <= 1.0) {
        return Err(CliError::Usage(format!(
            "--threshold must lie in (0, 1], got {}",
            args.threshold
        )));
    }
    if args.max_rows < 1 {
        return Err(CliError::Usage("--max-rows must be >= 1".into()));
    }
    let mut manifest = RunManifest::new(ctx.seed, ctx.workers);
    let (x, mut xt) = load(&args.pair, &mut manifest)?;
    if let Some(f) = args.shuffle_pairings {
        if !(0.0..=1.0).contains(&f) {
            return Err(CliError::Usage(format!(
                "--shuffle-pairings must lie in [0, 1], got {f}"
            )));
        }
        xt = shuffle_pairings(&xt, f, derive_seed(ctx.seed, &[TAG_SHUFFLE]))?;
    }
    let config = PairingConfig {
        threshold: args.threshold,
        max_rows: args.max_rows,
        subsample: args.subsample,
        seed: derive_seed(ctx.seed, &[TAG_SUBSAMPLE]),
    };
    let rep = pairing_check(&x, &xt, &config)?;
    let report = json!({
        "identity_fraction": json_f64(rep.identity_fraction),
        "total_cost": json_f64(rep.total_cost),
        "verdict": rep.verdict,
        "threshold": args.threshold,
        "shuffled_fraction": args.shuffle_pairings.unwrap_or(0.0),
        "assignment": one_based(&rep.assignment),
        "rows": rep.rows.as_deref().map(one_based),
    });
    finish(&args.pair, &report, manifest)
}
