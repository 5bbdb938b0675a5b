mod args;
mod commands;
mod error;
mod io;
mod manifest;

use clap::Parser;
use knockforge::rng::resolve_seed;

use args::{Cli, Command, DiagnoseCommand};
use commands::Context;
use error::{CliError, CliResult};

fn run(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    if g.workers == 0 {
        return Err(CliError::Usage("--workers must be >= 1".into()));
    }
    let seed = resolve_seed(g.seed, g.strict)
        .map_err(|_| CliError::Usage("--strict requires --seed".into()))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(g.workers)
        .build_global()
        .map_err(|e| CliError::Numerical(format!("cannot start worker pool: {e}")))?;
    let ctx = Context {
        seed,
        workers: g.workers,
    };
    match &cli.command {
        Command::Simulate(a) => commands::simulate::run(a, ctx),
        Command::Knockoffs(a) => commands::knockoffs::run(a, ctx),
        Command::Select(a) => commands::select::run(a, ctx),
        Command::Diagnose(DiagnoseCommand::C2st(a)) => commands::diagnose::run_c2st(a, ctx),
        Command::Diagnose(DiagnoseCommand::Pairing(a)) => commands::diagnose::run_pairing(a, ctx),
        Command::Benchmark(a) => commands::benchmark::run(a, ctx),
        Command::GapSweep(a) => commands::gap::run(a, ctx),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    if let Err(e) = run(cli) {
        eprintln!("knockforge: {e}");
        std::process::exit(e.exit_code());
    }
}
