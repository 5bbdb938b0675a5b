use super::*;
use crate::linalg::Matrix;
use crate::rng::rng_from_seed;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(n: usize, p: usize, seed: u64) -> Matrix {
    let mut rng = rng_from_seed(seed);
    Matrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for perm in permutations(n - 1) {
        for pos in 0..=perm.len() {
            let mut p = perm.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out
}

fn brute_force_min(cost: &Matrix) -> f64 {
    permutations(cost.nrows())
        .iter()
        .map(|p| assignment_cost(cost, p))
        .fold(f64::INFINITY, f64::min)
}

fn is_permutation(a: &[usize]) -> bool {
    let mut seen = vec![false; a.len()];
    a.iter()
        .all(|&j| j < a.len() && !std::mem::replace(&mut seen[j], true))
}

#[test]
fn dataset_stacks_with_labels() {
    let x = Matrix::from_fn(3, 2, |i, j| (i + j) as f64);
    let xt = Matrix::from_fn(3, 2, |i, j| 10.0 + (i * j) as f64);
    let (z, labels) = build_c2st_dataset(&x, &xt).unwrap();
    assert_eq!(z.nrows(), 6);
    assert_eq!(labels, vec![0, 0, 0, 1, 1, 1]);
    let mut rows: Vec<Vec<f64>> = z.row_iter().map(|r| r.iter().copied().collect()).collect();
    let mut expected: Vec<Vec<f64>> = x
        .row_iter()
        .chain(xt.row_iter())
        .map(|r| r.iter().copied().collect())
        .collect();
    rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
    expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(rows, expected);
    let (z, labels) = build_c2st_dataset(&x, &x).unwrap();
    for i in 0..3 {
        assert_eq!(z.row(i), z.row(i + 3));
        assert_ne!(labels[i], labels[i + 3]);
    }
    assert!(build_c2st_dataset(&x, &Matrix::zeros(2, 2)).is_err());
}

fn binomial(n: u32, k: u32) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

#[test]
fn pvalue_matches_exact_tail_sums() {
    assert!((c2st_pvalue(8, 10).unwrap() - 56.0 / 1024.0).abs() < 1e-15);
    for n in 0..=60u32 {
        for correct in 0..=n {
            let tail: u128 = (correct..=n).map(|k| binomial(n, k)).sum();
            let exact = tail as f64 / 2f64.powi(n as i32);
            let got = c2st_pvalue(correct as usize, n as usize).unwrap();
            assert!(
                (got - exact).abs() <= 1e-12 * exact.max(1e-300) + 1e-15,
                "n={n} k={correct}: {got} vs {exact}"
            );
        }
    }
    assert!((c2st_pvalue(40, 40).unwrap() / 2f64.powi(-40) - 1.0).abs() < 1e-12);
    assert!(c2st_pvalue(1000, 2000).unwrap() >= 0.5);
    assert!(c2st_pvalue(5000, 5000).unwrap() > 0.0 || 5000.0 * std::f64::consts::LN_2 > 745.0);
    assert!(c2st_pvalue(3, 2).is_err());
}

#[test]
fn hungarian_matches_brute_force() {
    let mut rng = rng_from_seed(1);
    for trial in 0..300 {
        let n = 1 + trial % 7;
        let cost = Matrix::from_fn(n, n, |_, _| {
            if rng.random_bool(0.3) {
                rng.random_range(0..4) as f64
            } else {
                rng.random_range(-5.0..10.0)
            }
        });
        let a = hungarian(&cost).unwrap();
        assert!(is_permutation(&a));
        assert!(
            (assignment_cost(&cost, &a) - brute_force_min(&cost)).abs() < 1e-9,
            "{cost}"
        );
    }
    let known = Matrix::from_row_slice(3, 3, &[4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0]);
    assert_eq!(hungarian(&known).unwrap(), vec![1, 0, 2]);
}

#[test]
fn hungarian_trivial_cases() {
    let diag = Matrix::from_fn(6, 6, |i, j| if i == j { 0.5 } else { 3.0 + (i * j) as f64 });
    assert_eq!(hungarian(&diag).unwrap(), (0..6).collect::<Vec<_>>());
    assert!(hungarian(&Matrix::zeros(0, 0)).unwrap().is_empty());
    assert!(hungarian(&Matrix::zeros(2, 3)).is_err());
    let mut bad = Matrix::zeros(2, 2);
    bad[(0, 1)] = f64::NAN;
    assert!(hungarian(&bad).is_err());
}

proptest! {
    #[test]
    fn hungarian_shift_invariant_and_beats_identity(
        vals in proptest::collection::vec(-10.0f64..10.0, 36),
        shift in -100.0f64..100.0,
    ) {
        let cost = Matrix::from_row_slice(6, 6, &vals);
        let a = hungarian(&cost).unwrap();
        let b = hungarian(&cost.add_scalar(shift)).unwrap();
        prop_assert!((assignment_cost(&cost, &a) - assignment_cost(&cost, &b)).abs() < 1e-9);
        let identity: Vec<usize> = (0..6).collect();
        prop_assert!(assignment_cost(&cost, &a) <= assignment_cost(&cost, &identity) + 1e-12);
    }
}

#[test]
fn pairing_cost_is_consistent() {
    let x = gaussian(30, 4, 2);
    let xt = gaussian(30, 4, 3);
    let c = pairing_cost(&x, &xt).unwrap();
    let rep = pairing_check(&x, &xt, &PairingConfig::default()).unwrap();
    assert!(is_permutation(&rep.assignment));
    let recomputed: f64 = rep
        .assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| c[(i, j)])
        .sum();
    assert!((rep.total_cost - recomputed).abs() < 1e-8);
    // direct distance on pooled standardized columns
    let mut pooled = Matrix::zeros(60, 4);
    pooled.rows_mut(0, 30).copy_from(&x);
    pooled.rows_mut(30, 30).copy_from(&xt);
    let z = crate::linalg::standardize_columns(&pooled);
    let d: f64 = (0..4).map(|k| (z[(5, k)] - z[(30 + 7, k)]).powi(2)).sum();
    assert!((c[(5, 7)] - d).abs() < 1e-10);
}

#[test]
fn well_paired_rows_give_identity() {
    let x = gaussian(50, 3, 4);
    let xt = &x + gaussian(50, 3, 5) * 1e-6;
    let rep = pairing_check(&x, &xt, &PairingConfig::default()).unwrap();
    assert_eq!(rep.assignment, (0..50).collect::<Vec<_>>());
    assert_eq!(rep.identity_fraction, 1.0);
    assert_eq!(rep.verdict, PairingVerdict::Paired);
}

#[test]
fn reversed_rows_are_detected() {
    let x = gaussian(41, 3, 6);
    let rev: Vec<usize> = (0..41).rev().collect();
    let rep = pairing_check(&x, &x.select_rows(&rev), &PairingConfig::default()).unwrap();
    assert_eq!(rep.assignment, rev);
    assert!(rep.identity_fraction <= 1.0 / 41.0 + 1e-12);
    assert_eq!(rep.verdict, PairingVerdict::MispairingDetected);
}

/// Two-dimensional Gaussian knockoffs for correlation `rho`.
fn knockoffs_2d(n: usize, rho: f64, seed: u64) -> (Matrix, Matrix) {
    let sigma = Matrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
    let est = crate::covariance::CovarianceEstimate::oracle(sigma.clone()).unwrap();
    let l = sigma.cholesky().unwrap().l();
    let x = gaussian(n, 2, seed) * l.transpose();
    let pair = crate::gaussian::gaussian_knockoffs(&x, &est, seed + 1).unwrap();
    (x, pair.x_tilde)
}

#[test]
fn shuffled_small_pairs_match_brute_force() {
    for seed in 0..20 {
        let (x, xt) = knockoffs_2d(8, 0.95, seed);
        let shuffled = crate::simulation::shuffle_pairings(&xt, 0.5, seed).unwrap();
        let rep = pairing_check(&x, &shuffled, &PairingConfig::default()).unwrap();
        let cost = pairing_cost(&x, &shuffled).unwrap();
        assert!((rep.total_cost - brute_force_min(&cost)).abs() < 1e-9);
    }
}

#[test]
fn half_shuffle_flags_mispairing() {
    // strongly correlated pairs make the true partner the nearest row
    let mut flagged = 0;
    for seed in 0..10 {
        let (x, xt) = knockoffs_2d(200, 0.995, 100 + seed);
        let shuffled = crate::simulation::shuffle_pairings(&xt, 0.5, seed).unwrap();
        let rep = pairing_check(&x, &shuffled, &PairingConfig::default()).unwrap();
        if rep.identity_fraction <= 0.6 && rep.verdict == PairingVerdict::MispairingDetected {
            flagged += 1;
        }
    }
    assert!(flagged >= 9, "{flagged}");
}

#[test]
fn row_cap_requires_subsampling() {
    let x = gaussian(30, 2, 7);
    let xt = &x + gaussian(30, 2, 8) * 1e-6;
    let cfg = PairingConfig {
        max_rows: 10,
        ..PairingConfig::default()
    };
    let err = pairing_check(&x, &xt, &cfg).unwrap_err();
    assert!(err.to_string().contains("subsampl"));
    let rep = pairing_check(
        &x,
        &xt,
        &PairingConfig {
            subsample: true,
            seed: 3,
            ..cfg
        },
    )
    .unwrap();
    let rows = rep.rows.unwrap();
    assert_eq!(rows.len(), 10);
    assert!(rows.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(rep.identity_fraction, 1.0);
    assert!(pairing_check(&x, &Matrix::zeros(29, 2), &PairingConfig::default()).is_err());
}

#[test]
fn c2st_on_identical_distributions_is_near_chance() {
    let x = gaussian(2000, 5, 10);
    let xt = gaussian(2000, 5, 11);
    let rep = c2st(&x, &xt, 5, &C2stConfig::default(), 1).unwrap();
    assert!(
        (0.45..=0.55).contains(&rep.mean_accuracy),
        "{}",
        rep.mean_accuracy
    );
    assert_eq!(rep.n_test_total, 4000);
    assert_eq!(rep.fold_accuracies.len(), 5);
    let mean = rep.fold_accuracies.iter().sum::<f64>() / 5.0;
    assert!((rep.mean_accuracy - mean).abs() < 1e-12);
    assert_eq!(
        rep.p_value,
        c2st_pvalue(rep.correct_total, rep.n_test_total).unwrap()
    );
}

#[test]
fn c2st_detects_mean_shift() {
    let x = gaussian(500, 3, 12);
    let xt = gaussian(500, 3, 13).add_scalar(5.0);
    for map in [
        FeatureMap::Linear,
        FeatureMap::Squares,
        C2stConfig::default().feature_map,
    ] {
        let cfg = C2stConfig {
            feature_map: map,
            ..C2stConfig::default()
        };
        let rep = c2st(&x, &xt, 5, &cfg, 2).unwrap();
        assert!(rep.mean_accuracy >= 0.95, "{map:?}: {}", rep.mean_accuracy);
        assert_eq!(rep.verdict, C2stVerdict::ViolationDetected);
    }
}

#[test]
fn c2st_detects_a_variance_change() {
    let x = gaussian(1000, 4, 14);
    let xt = gaussian(1000, 4, 15) * 2.0;
    let lin = c2st(
        &x,
        &xt,
        5,
        &C2stConfig {
            feature_map: FeatureMap::Linear,
            ..C2stConfig::default()
        },
        3,
    )
    .unwrap();
    let quad = c2st(&x, &xt, 5, &C2stConfig::default(), 3).unwrap();
    assert!(lin.mean_accuracy < 0.56);
    assert!(quad.mean_accuracy > 0.7, "{}", quad.mean_accuracy);
}

#[test]
fn c2st_is_deterministic_and_pairing_invariant() {
    let x = gaussian(120, 3, 16);
    let xt = gaussian(120, 3, 17);
    let cfg = C2stConfig::default();
    let a = c2st(&x, &xt, 5, &cfg, 9).unwrap();
    assert_eq!(a, c2st(&x, &xt, 5, &cfg, 9).unwrap());
    let mut perm: Vec<usize> = (0..120).collect();
    perm.shuffle(&mut rng_from_seed(4));
    assert_eq!(
        a,
        c2st(&x.select_rows(&perm), &xt.select_rows(&perm), 5, &cfg, 9).unwrap()
    );
}

#[test]
fn c2st_guards() {
    let x = gaussian(4, 2, 1);
    assert!(c2st(&x, &x, 1, &C2stConfig::default(), 1).is_err());
    assert!(c2st(&x, &x, 5, &C2stConfig::default(), 1).is_err());
    assert!(c2st(&x, &gaussian(5, 2, 1), 2, &C2stConfig::default(), 1).is_err());
    let rep = c2st(&x, &x, 4, &C2stConfig::default(), 1).unwrap();
    assert_eq!(rep.n_test_total, 8);
    assert_eq!(rep.resplits, 0);
}

#[test]
fn c2st_is_calibrated_under_resampling() {
    // knockoff rows drawn from the empirical distribution of X
    let mut passed = 0;
    let runs = 20;
    for seed in 0..runs {
        let x = gaussian(2000, 4, 200 + seed);
        let mut rng = rng_from_seed(300 + seed);
        let idx: Vec<usize> = (0..2000).map(|_| rng.random_range(0..2000)).collect();
        let rep = c2st(&x, &x.select_rows(&idx), 5, &C2stConfig::default(), seed).unwrap();
        if rep.p_value > 0.01 {
            passed += 1;
        }
    }
    assert!(passed as f64 >= 0.95 * runs as f64, "{passed}/{runs}");
}
