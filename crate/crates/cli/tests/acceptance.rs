//! End-to-end acceptance checks, one line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are still run and reported as FAIL when
//! they fail; only other failures make the target exit nonzero.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use knockforge::covariance::{CovarianceEstimate, CovarianceMethod};
use knockforge::diagnostics::{c2st, pairing_check, C2stConfig, PairingConfig, PairingVerdict};
use knockforge::gaussian::{equicorrelated_s, gaussian_knockoffs};
use knockforge::inference::{bh_select, joint_design, knockoff_threshold, pi_statistics, select};
use knockforge::nonparametric::{
    parallel_knockoffs, sequential_knockoffs, ColumnContext, ColumnLearner, LassoLearner,
    PermutationMode,
};
use knockforge::regression::{
    kkt_violation, lambda_max, lasso_fit, soft_threshold, FittedRegressor, LASSO_MAX_ITER,
    LASSO_TOL,
};
use knockforge::rng::derive_seed;
use knockforge::simulation::*;
use knockforge::{KnockoffMethod, Matrix, Result, Vector};

const KNOWN_FAILURES: &[usize] = &[4, 5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn uniform(seed: u64, tags: &[u64]) -> f64 {
    (derive_seed(seed, tags) >> 11) as f64 / (1u64 << 53) as f64
}

/// `n` rows of iid standard normals in `p` columns.
fn normals(n: usize, p: usize, seed: u64) -> Matrix {
    let config = SimulationConfig {
        n,
        shape: [p, 1, 1],
        sparsity: 1.0,
        ..Default::default()
    };
    generate_design(&config, seed).unwrap()
}

fn sample_cov(x: &Matrix) -> Matrix {
    let n = x.nrows() as f64;
    let means: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    xc.tr_mul(&xc) / (n - 1.0)
}

fn ar1(p: usize, rho: f64) -> Matrix {
    Matrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

fn correlated(n: usize, sigma: &Matrix, seed: u64) -> Matrix {
    let l = sigma.clone().cholesky().unwrap().unpack();
    normals(n, sigma.nrows(), seed) * l.transpose()
}

fn criterion_1() -> Result<Outcome> {
    let sigma = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    let est = CovarianceEstimate::oracle(sigma.clone())?;
    let s = equicorrelated_s(&est)?;
    let x = correlated(100_000, &sigma, 1);
    let pair = gaussian_knockoffs(&x, &est, 2)?;
    let mut joint = Matrix::zeros(x.nrows(), 4);
    joint.columns_mut(0, 2).copy_from(&pair.x);
    joint.columns_mut(2, 2).copy_from(&pair.x_tilde);
    let emp = sample_cov(&joint);
    let g = Matrix::from_fn(4, 4, |i, j| {
        let v = sigma[(i % 2, j % 2)];
        if i / 2 != j / 2 && i % 2 == j % 2 {
            v - s[i % 2]
        } else {
            v
        }
    });
    let err = (&emp - &g).amax();
    Ok(outcome(
        err <= 0.02,
        format!("s = {:.3}, max |Cov - G| = {err:.4}", s[0]),
    ))
}

fn criterion_2(dir: &Path) -> Result<Outcome> {
    let point = parallel_gap_point(0.5, 200_000, 1)?;
    let ind_ok = (point.cov_independent - 0.125).abs() <= 0.01;
    let shared_ok = (point.cov_shared + 0.25).abs() <= 0.01;
    let sweep = parallel_gap_sweep(&default_rho_grid(), 200_000, 2)?;
    let mut csv = format!("{GAP_CSV_HEADER}\n");
    for p in &sweep {
        csv.push_str(&p.csv_line());
        csv.push('\n');
    }
    std::fs::write(dir.join("gap_sweep.csv"), csv).unwrap();
    let errors: Vec<f64> = sweep.iter().map(|p| p.error_independent).collect();
    let (first, last) = (errors[0], errors[errors.len() - 1]);
    let (argmax, peak) =
        errors.iter().enumerate().fold(
            (0, f64::MIN),
            |best, (k, &e)| if e > best.1 { (k, e) } else { best },
        );
    let shape_ok =
        first < 0.02 && last < 0.05 && argmax > 0 && argmax + 1 < errors.len() && peak > 0.3;
    Ok(outcome(
        ind_ok && shared_ok && shape_ok,
        format!(
            "independent {:.4} (0.125), shared {:.4} (-0.25); sweep error {first:.3} at rho=0, peak {peak:.3} at rho={:.2}, {last:.3} at rho=0.99",
            point.cov_independent, point.cov_shared, sweep[argmax].rho
        ),
    ))
}

fn benchmark_at(w: f64, specs: &[MethodSpec], skip_c2st: bool) -> Result<Vec<MethodSummary>> {
    let config = SimulationConfig {
        kernel_width: w,
        runs: 30,
        seed: 1,
        ..Default::default()
    };
    let options = BenchmarkOptions {
        skip_c2st,
        ..Default::default()
    };
    let table = run_benchmark(&config, specs, &options)?;
    Ok(summarize(&table))
}

fn criterion_3() -> Result<(Outcome, Vec<MethodSummary>)> {
    let spec = [MethodSpec::gaussian(CovarianceMethod::Oracle)];
    let mut all = Vec::new();
    for w in [0.0, 0.5] {
        all.extend(benchmark_at(w, &spec, true)?);
    }
    let pass = all.iter().all(|s| s.failed == 0 && s.mean_fdp <= 0.15);
    let detail = all
        .iter()
        .map(|s| {
            format!(
                "w={}: fdp {:.3} power {:.3} failed {}",
                s.w, s.mean_fdp, s.mean_power, s.failed
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok((outcome(pass, detail), all))
}

fn criterion_4() -> Result<(Outcome, Vec<MethodSummary>)> {
    let specs = [
        MethodSpec::gaussian(CovarianceMethod::GraphicalLasso),
        MethodSpec::nonparametric(KnockoffMethod::Parallel),
    ];
    let mut all = Vec::new();
    for w in [0.0, 0.5, 1.0, 1.25] {
        all.extend(benchmark_at(w, &specs, false)?);
    }
    let glasso_end = all
        .iter()
        .find(|s| s.method == "gaussian-glasso" && s.w == 1.25)
        .unwrap();
    let glasso_ok =
        glasso_end.failed == 0 && glasso_end.mean_fdp > 0.1 && glasso_end.mean_c2st_acc > 0.55;
    let parallel_ok = all
        .iter()
        .filter(|s| s.method == "parallel")
        .all(|s| s.failed == 0 && s.mean_fdp <= 0.15 && (0.45..=0.55).contains(&s.mean_c2st_acc));
    let detail = all
        .iter()
        .map(|s| {
            format!(
                "{} w={}: fdp {:.3} c2st {:.3}",
                s.method, s.w, s.mean_fdp, s.mean_c2st_acc
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok((outcome(glasso_ok && parallel_ok, detail), all))
}

fn criterion_5(oracle: &[MethodSummary], sweep: &[MethodSummary]) -> Outcome {
    let oracle_ok = oracle
        .iter()
        .all(|s| (0.45..=0.55).contains(&s.null_positive_fraction));
    let glasso = sweep
        .iter()
        .find(|s| s.method == "gaussian-glasso" && s.w == 1.25)
        .unwrap();
    let skew_ok = glasso.null_positive_fraction > 0.55;
    let mut detail: Vec<String> = oracle
        .iter()
        .map(|s| format!("oracle w={}: {:.3}", s.w, s.null_positive_fraction))
        .collect();
    detail.push(format!(
        "glasso w=1.25: {:.3}",
        glasso.null_positive_fraction
    ));
    outcome(
        oracle_ok && skew_ok,
        format!("null positive fraction {}", detail.join(", ")),
    )
}

fn criterion_6() -> Result<Outcome> {
    let mut mismatches = 0;
    let mut selections = 0;
    for k in 0..1000u64 {
        let p = 1 + (uniform(6, &[k, 0]) * 50.0) as usize;
        let w: Vec<f64> = (0..p as u64)
            .map(|j| {
                let u = uniform(6, &[k, 1, j]);
                let sign = if uniform(6, &[k, 2, j]) < 0.7 {
                    1.0
                } else {
                    -1.0
                };
                // coarse grid so ties and zeros occur
                if u < 0.1 {
                    0.0
                } else {
                    sign * (u * 20.0).ceil() / 4.0
                }
            })
            .collect();
        for q in [0.05, 0.1, 0.2, 0.5] {
            let knock = select(&w, knockoff_threshold(&w, q)?);
            let bh = bh_select(&pi_statistics(&w), q)?;
            if knock != bh {
                mismatches += 1;
            }
            selections += knock.len();
        }
    }
    Ok(outcome(
        mismatches == 0,
        format!("{mismatches} mismatches over 4000 (W, q) pairs, {selections} selections"),
    ))
}

fn criterion_7() -> Result<Outcome> {
    let sigma = ar1(50, 0.9);
    let est = CovarianceEstimate::oracle(sigma.clone())?;
    let config = PairingConfig::default();
    let (mut paired, mut detected) = (0, 0);
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let x = correlated(200, &sigma, derive_seed(7, &[seed, 0]));
        let pair = gaussian_knockoffs(&x, &est, derive_seed(7, &[seed, 1]))?;
        let clean = pairing_check(&pair.x, &pair.x_tilde, &config)?;
        if clean.verdict == PairingVerdict::Paired {
            paired += 1;
        }
        let shuffled = shuffle_pairings(&pair.x_tilde, 0.5, derive_seed(7, &[seed, 2]))?;
        let rep = pairing_check(&pair.x, &shuffled, &config)?;
        worst = worst.max(rep.identity_fraction);
        if rep.verdict == PairingVerdict::MispairingDetected && rep.identity_fraction <= 0.6 {
            detected += 1;
        }
    }
    Ok(outcome(
        paired == 20 && detected >= 19,
        format!("clean pairs identified {paired}/20, shuffled detected {detected}/20, max identity {worst:.3}"),
    ))
}

fn criterion_8() -> Result<Outcome> {
    let config = C2stConfig::default();
    let (mut calibrated, mut min_shift) = (0, f64::MAX);
    let mut accs = Vec::new();
    for seed in 0..20u64 {
        let x = normals(2000, 10, derive_seed(8, &[seed, 0]));
        let mut y = normals(2000, 10, derive_seed(8, &[seed, 1]));
        let null = c2st(&x, &y, 5, &config, derive_seed(8, &[seed, 2]))?;
        accs.push(null.mean_accuracy);
        if (0.45..=0.55).contains(&null.mean_accuracy) && null.p_value > 0.01 {
            calibrated += 1;
        }
        y.column_mut(0).add_scalar_mut(3.0);
        let shifted = c2st(&x, &y, 5, &config, derive_seed(8, &[seed, 3]))?;
        min_shift = min_shift.min(shifted.mean_accuracy);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    Ok(outcome(
        calibrated >= 19 && min_shift >= 0.9,
        format!("null calibrated {calibrated}/20 (mean accuracy {mean:.3}), 3-sd shift min accuracy {min_shift:.3}"),
    ))
}

/// Column lasso that records the KKT violation of every fit it makes.
struct CheckedLasso {
    inner: LassoLearner,
    worst: std::sync::Mutex<(f64, usize)>,
}

impl ColumnLearner for CheckedLasso {
    fn fit(
        &self,
        features: &Matrix,
        target: &Vector,
        _ctx: &ColumnContext,
    ) -> Result<Box<dyn FittedRegressor>> {
        let lambda = self.inner.rule.lambda(features, target)?;
        let fit = lasso_fit(
            features,
            target,
            lambda,
            self.inner.tol,
            self.inner.max_iter,
        )?;
        let v = kkt_violation(features, target, &fit);
        let mut w = self.worst.lock().unwrap();
        w.0 = w.0.max(v);
        w.1 += 1;
        Ok(Box::new(fit))
    }
}

fn criterion_9() -> Result<Outcome> {
    let mut worst = 0.0f64;
    let mut fits = 0;
    let mut check = |x: &Matrix, y: &Vector, lambda: f64| -> Result<()> {
        let fit = lasso_fit(x, y, lambda, LASSO_TOL, LASSO_MAX_ITER)?;
        worst = worst.max(kkt_violation(x, y, &fit));
        fits += 1;
        Ok(())
    };
    // random problems, wide and tall, independent and smoothed columns
    for (k, &(n, shape, w)) in [
        (50, [20, 1, 1], 0.0),
        (40, [10, 10, 1], 0.0),
        (200, [10, 10, 2], 1.0),
        (100, [5, 5, 2], 0.5),
    ]
    .iter()
    .enumerate()
    {
        let config = SimulationConfig {
            n,
            shape,
            kernel_width: w,
            ..Default::default()
        };
        let data = simulate_run(&config, derive_seed(9, &[k as u64]))?;
        let lmax = lambda_max(&data.x, &data.y)?;
        for frac in [0.5, 0.1, 0.01, 0.001] {
            check(&data.x, &data.y, frac * lmax)?;
        }
        // joint fits of the knockoff statistic
        let est = CovarianceEstimate::oracle(design_covariance(&config)?)?;
        let pair = gaussian_knockoffs(&data.x, &est, 1)?;
        let joint = joint_design(&pair.x, &pair.x_tilde)?;
        let mut yc = data.y.clone();
        yc.add_scalar_mut(-data.y.mean());
        check(&joint, &yc, 0.01 * lambda_max(&joint, &yc)?)?;
    }
    // column fits inside nonparametric generation
    let learner = CheckedLasso {
        inner: LassoLearner::default(),
        worst: Default::default(),
    };
    let config = SimulationConfig {
        n: 100,
        shape: [5, 5, 2],
        kernel_width: 0.5,
        ..Default::default()
    };
    let x = generate_design(&config, 91)?;
    sequential_knockoffs(&x, &learner, 1)?;
    parallel_knockoffs(&x, &learner, 1, 1, PermutationMode::Independent)?;
    let (column_worst, column_fits) = *learner.worst.lock().unwrap();

    // zero above λmax
    let data = simulate_run(
        &SimulationConfig {
            n: 80,
            shape: [4, 4, 2],
            ..Default::default()
        },
        92,
    )?;
    let lmax = lambda_max(&data.x, &data.y)?;
    let zero_ok = [1.0, 1.5, 10.0].iter().all(|&m| {
        lasso_fit(&data.x, &data.y, m * lmax, LASSO_TOL, LASSO_MAX_ITER)
            .map(|f| f.coefficients.iter().all(|&b| b == 0.0))
            .unwrap_or(false)
    });

    // univariate closed form on a unit-variance centered column
    let mut univariate_err = 0.0f64;
    for k in 0..20u64 {
        let x = normals(60, 1, derive_seed(93, &[k]));
        let y = Vector::from_fn(60, |i, _| {
            0.7 * x[(i, 0)] + uniform(93, &[k, i as u64]) - 0.5
        });
        let (n, mean) = (60.0, x.column(0).mean());
        let xc = x.column(0).map(|v| v - mean);
        let sd = (xc.norm_squared() / n).sqrt();
        let xs = Matrix::from_column_slice(60, 1, (xc / sd).as_slice());
        let ybar = y.mean();
        let z = xs
            .column(0)
            .iter()
            .zip(y.iter())
            .map(|(a, b)| a * (b - ybar))
            .sum::<f64>()
            / n;
        for frac in [0.0, 0.2, 0.6, 1.2] {
            let lambda = frac * z.abs();
            let fit = lasso_fit(&xs, &y, lambda, LASSO_TOL, LASSO_MAX_ITER)?;
            univariate_err =
                univariate_err.max((fit.coefficients[0] - soft_threshold(z, lambda)).abs());
        }
    }

    let pass = worst <= 1e-6 && column_worst <= 1e-6 && zero_ok && univariate_err <= 1e-8;
    Ok(outcome(
        pass,
        format!(
            "max KKT {worst:.1e} over {fits} fits, {column_worst:.1e} over {column_fits} column fits; zero above lambda_max {zero_ok}; univariate error {univariate_err:.1e}"
        ),
    ))
}

fn run_cli(args: &[&str], dir: &Path) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_knockforge"))
        .args(args)
        .current_dir(dir)
        .env_remove("KNOCKFORGE_WORKERS")
        .output()
        .expect("cannot start knockforge");
    assert!(
        out.status.success(),
        "knockforge {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn criterion_10(dir: &Path) -> Result<Outcome> {
    run_cli(
        &[
            "simulate",
            "--seed",
            "10",
            "--kernel-width",
            "0.5",
            "--out-dir",
            "sim",
        ],
        dir,
    );
    let mut outputs = Vec::new();
    for workers in ["1", "4", "8"] {
        let name = format!("parallel_{workers}.csv");
        run_cli(
            &[
                "knockoffs",
                "--seed",
                "3",
                "--workers",
                workers,
                "--x",
                "sim/design.csv",
                "--method",
                "parallel",
                "--out",
                &name,
            ],
            dir,
        );
        outputs.push(std::fs::read(dir.join(&name)).unwrap());
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);

    let config = SimulationConfig {
        kernel_width: 0.5,
        ..Default::default()
    };
    let x = generate_design(&config, 10)?;
    let learner = LassoLearner::default();
    let start = Instant::now();
    sequential_knockoffs(&x, &learner, 3)?;
    let sequential = start.elapsed().as_secs_f64();
    let start = Instant::now();
    parallel_knockoffs(&x, &learner, 3, 4, PermutationMode::Independent)?;
    let parallel = start.elapsed().as_secs_f64();
    Ok(outcome(
        identical && parallel <= sequential,
        format!(
            "workers 1/4/8 byte-identical {identical}; p=200 sequential {sequential:.2}s, parallel (4 workers) {parallel:.2}s, speedup {:.1}x on {} cpu(s)",
            sequential / parallel,
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        ),
    ))
}

fn report(n: usize, result: Result<Outcome>, seconds: f64, unexpected: &mut Vec<usize>) {
    let o = result.unwrap_or_else(|e| outcome(false, format!("error: {e}")));
    let status = match (o.pass, KNOWN_FAILURES.contains(&n)) {
        (true, _) => "PASS",
        (false, true) => "FAIL (known, documented)",
        (false, false) => {
            unexpected.push(n);
            "FAIL"
        }
    };
    println!("criterion {n}: {status} | {} | {seconds:.1}s", o.detail);
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64())
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let mut unexpected = Vec::new();

    let (r, t) = timed(criterion_1);
    report(1, r, t, &mut unexpected);
    let (r, t) = timed(|| criterion_2(dir.path()));
    report(2, r, t, &mut unexpected);

    let ((r3, oracle), t) = timed(|| match criterion_3() {
        Ok((o, s)) => (Ok(o), s),
        Err(e) => (Err(e), Vec::new()),
    });
    report(3, r3, t, &mut unexpected);
    let ((r4, sweep), t) = timed(|| match criterion_4() {
        Ok((o, s)) => (Ok(o), s),
        Err(e) => (Err(e), Vec::new()),
    });
    report(4, r4, t, &mut unexpected);
    let r5 = if oracle.is_empty() || sweep.is_empty() {
        Ok(outcome(false, "inputs from criteria 3 and 4 unavailable"))
    } else {
        Ok(criterion_5(&oracle, &sweep))
    };
    report(5, r5, 0.0, &mut unexpected);

    let (r, t) = timed(criterion_6);
    report(6, r, t, &mut unexpected);
    let (r, t) = timed(criterion_7);
    report(7, r, t, &mut unexpected);
    let (r, t) = timed(criterion_8);
    report(8, r, t, &mut unexpected);
    let (r, t) = timed(criterion_9);
    report(9, r, t, &mut unexpected);
    let (r, t) = timed(|| criterion_10(dir.path()));
    report(10, r, t, &mut unexpected);

    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
