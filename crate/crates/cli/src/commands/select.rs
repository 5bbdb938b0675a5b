use knockforge::inference::{bh_select, knockoff_select, lcd_statistics, pi_statistics, LcdLambda};
use serde_json::json;

use super::{check_aligned, one_based, Context};
use crate::args::SelectArgs;
use crate::error::{CliError, CliResult};
use crate::io::{emit_json, json_f64, read_matrix, read_vector, sidecar};
use crate::manifest::RunManifest;

pub fn run(args: &SelectArgs, ctx: Context) -> CliResult<()> {
    if !(args.q > 0.0 && args.q < 1.0) {
        return Err(CliError::Usage(format!(
            "--q must lie in (0, 1), got {}",
            args.q
        )));
    }
    let lambda = match args.lambda {
        Some(l) if l >= 0.0 && l.is_finite() => LcdLambda::Fixed(l),
        Some(l) => return Err(CliError::Usage(format!("--lambda must be >= 0, got {l}"))),
        None if args.lambda_fraction >= 0.0 && args.lambda_fraction.is_finite() => {
            LcdLambda::MaxFraction(args.lambda_fraction)
        }
        None => {
            return Err(CliError::Usage(format!(
                "--lambda-fraction must be >= 0, got {}",
                args.lambda_fraction
            )))
        }
    };
    let mut manifest = RunManifest::new(ctx.seed, ctx.workers);
    let x = read_matrix(&args.x)?;
    let xt = read_matrix(&args.x_tilde)?;
    let y = read_vector(&args.y)?;
    for p in [&args.x, &args.x_tilde, &args.y] {
        manifest.input(p)?;
    }
    check_aligned(&x, &args.x, &xt, &args.x_tilde)?;
    if y.len() != x.nrows() {
        return Err(CliError::Data(format!(
            "{} has {} rows but {} has {}",
            args.y.display(),
            y.len(),
            args.x.display(),
            x.nrows()
        )));
    }
    let stats = lcd_statistics(&x, &xt, &y, lambda)?;
    if !stats.fit_converged {
        log::warn!("the statistic lasso did not converge");
    }
    let report = if args.emit_pi_only {
        let pi = pi_statistics(&stats.w);
        let selected = bh_select(&pi, args.q)?;
        json!({
            "q": args.q,
            "pi": pi,
            "selected": one_based(&selected),
            "lambda": json_f64(stats.lambda),
            "converged": stats.fit_converged,
        })
    } else {
        let sel = knockoff_select(&stats.w, args.q)?;
        json!({
            "w": stats.w,
            "threshold": json_f64(sel.threshold),
            "q": sel.q,
            "selected": one_based(&sel.selected),
            "pi": sel.pi,
            "lambda": json_f64(stats.lambda),
            "converged": stats.fit_converged,
        })
    };
    emit_json(args.out.as_deref(), &report)?;
    if let Some(out) = &args.out {
        manifest.output(out);
        manifest.write(&sidecar(out, "manifest.json"))?;
    }
    Ok(())
}
