use knockforge::simulation::{default_rho_grid, parallel_gap_sweep, GAP_CSV_HEADER};

use super::Context;
use crate::args::GapSweepArgs;
use crate::error::{CliError, CliResult};
use crate::io::{sidecar, write_text};
use crate::manifest::RunManifest;

pub fn run(args: &GapSweepArgs, ctx: Context) -> CliResult<()> {
    let rhos = args.rho.clone().unwrap_or_else(default_rho_grid);
    if let Some(r) = rhos.iter().find(|r| !(r.abs() < 1.0)) {
        return Err(CliError::Usage(format!(
            "correlations must lie in (-1, 1), got {r}"
        )));
    }
    if args.n < 10 {
        return Err(CliError::Usage(format!(
            "--n must be >= 10, got {}",
            args.n
        )));
    }
    let points = parallel_gap_sweep(&rhos, args.n, ctx.seed)?;
    let mut csv = format!("{GAP_CSV_HEADER}\n");
    for p in &points {
        csv.push_str(&p.csv_line());
        csv.push('\n');
    }
    write_text(&args.out, &csv)?;
    let mut manifest = RunManifest::new(ctx.seed, ctx.workers);
    manifest.output(&args.out);
    manifest.write(&sidecar(&args.out, "manifest.json"))?;
    Ok(())
}
