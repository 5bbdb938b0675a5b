use knockforge::simulation::{design_covariance, simulate_run, SimulationConfig};
use serde_json::json;

use super::{one_based, Context};
use crate::args::SimulateArgs;
use crate::error::{CliError, CliResult};
use crate::io::{json_f64, matrix_csv, vector_csv, write_json, write_text};
use crate::manifest::RunManifest;

pub fn config_from(args: &SimulateArgs, seed: u64) -> SimulationConfig {
    SimulationConfig {
        n: args.n,
        shape: args.shape,
        kernel_width: args.kernel_width,
        sparsity: args.sparsity,
        snr: args.snr,
        seed,
        runs: 1,
        standardize: args.standardize,
        ..SimulationConfig::default()
    }
}

pub fn run(args: &SimulateArgs, ctx: Context) -> CliResult<()> {
    let config = config_from(args, ctx.seed);
    config
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let data = simulate_run(&config, ctx.seed)?;
    let dir = &args.out_dir;
    let mut manifest = RunManifest::new(ctx.seed, ctx.workers);

    let design = dir.join("design.csv");
    write_text(&design, &matrix_csv(&data.x))?;
    let response = dir.join("response.csv");
    write_text(&response, &vector_csv(&data.y, "y"))?;
    let beta = dir.join("beta.csv");
    write_text(&beta, &vector_csv(&data.truth.beta_star, "beta"))?;
    let truth = dir.join("truth.json");
    write_json(
        &truth,
        &json!({
            "n": config.n,
            "p": config.p(),
            "shape": config.shape,
            "kernel_width": config.kernel_width,
            "sparsity": config.sparsity,
            "snr": config.snr,
            "standardize": config.standardize,
            "seed": ctx.seed,
            "support": one_based(&data.truth.h1),
            "sigma_noise": json_f64(data.truth.sigma_noise),
        }),
    )?;
    for p in [&design, &response, &beta, &truth] {
        manifest.output(p);
    }
    if args.write_oracle {
        let sigma = dir.join("sigma.csv");
        write_text(&sigma, &matrix_csv(&design_covariance(&config)?))?;
        manifest.output(&sigma);
    }
    manifest.write(&dir.join("manifest.json"))?;
    Ok(())
}
