//! The knockoff filter: lasso-coefficient-difference statistics, the
//! knockoff+ threshold, π-statistics with Benjamini-Hochberg, and error
//! metrics. Variable indices are 0-based.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, KnockoffError, Result};
use crate::linalg::{standardize_columns, Matrix, Vector};
use crate::regression::{lambda_max, lasso_fit, LASSO_MAX_ITER, LASSO_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnockoffStatistics {
    pub w: Vec<f64>,
    pub lambda: f64,
    pub fit_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: Vec<usize>,
    /// `+∞` when no threshold satisfies the ratio.
    pub threshold: f64,
    pub q: f64,
    pub pi: Vec<f64>,
}

/// Penalty for the joint fit on `[X, X̃]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LcdLambda {
    /// `fraction · λmax` of the standardized joint design.
    MaxFraction(f64),
    Fixed(f64),
}

impl Default for LcdLambda {
    fn default() -> Self {
        LcdLambda::MaxFraction(0.01)
    }
}

/// `[X, X̃]` with every column standardized.
pub fn joint_design(x: &Matrix, x_tilde: &Matrix) -> Result<Matrix> {
    ensure!(
        x.shape() == x_tilde.shape(),
        "originals are {}x{} but knockoffs are {}x{}",
        x.nrows(),
        x.ncols(),
        x_tilde.nrows(),
        x_tilde.ncols()
    );
    let (n, p) = x.shape();
    let mut joint = Matrix::zeros(n, 2 * p);
    joint.columns_mut(0, p).copy_from(x);
    joint.columns_mut(p, p).copy_from(x_tilde);
    Ok(standardize_columns(&joint))
}

/// `W_j = |β̂_j| − |β̂_{j+p}|` from a lasso on the standardized `[X, X̃]`
/// against the centered response.
pub fn lcd_statistics(
    x: &Matrix,
    x_tilde: &Matrix,
    y: &Vector,
    lambda: LcdLambda,
) -> Result<KnockoffStatistics> {
    let joint = joint_design(x, x_tilde)?;
    ensure!(
        y.len() == x.nrows(),
        "response has {} entries but design has {} rows",
        y.len(),
        x.nrows()
    );
    let mut yc = y.clone();
    yc.add_scalar_mut(-y.mean());
    let lambda = match lambda {
        LcdLambda::MaxFraction(f) => {
            ensure!(
                f >= 0.0 && f.is_finite(),
                "lambda fraction must be >= 0, got {f}"
            );
            f * lambda_max(&joint, &yc)?
        }
        LcdLambda::Fixed(l) => l,
    };
    let fit = lasso_fit(&joint, &yc, lambda, LASSO_TOL, LASSO_MAX_ITER)?;
    let p = x.ncols();
    let w = (0..p)
        .map(|j| fit.coefficients[j].abs() - fit.coefficients[j + p].abs())
        .collect();
    Ok(KnockoffStatistics {
        w,
        lambda,
        fit_converged: fit.converged,
    })
}

fn check_q(q: f64) -> Result<()> {
    ensure!(q > 0.0 && q < 1.0, "q must lie in (0, 1), got {q}");
    Ok(())
}

/// Knockoff+ threshold `min{t : (1 + #{W ≤ −t}) / #{W ≥ t} ≤ q}` over
/// `t ∈ {|w_j| : w_j ≠ 0}`; `+∞` if no candidate qualifies.
pub fn knockoff_threshold(w: &[f64], q: f64) -> Result<f64> {
    check_q(q)?;
    ensure!(w.iter().all(|v| v.is_finite()), "statistics must be finite");
    let mut candidates: Vec<f64> = w.iter().filter(|&&v| v != 0.0).map(|v| v.abs()).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    for t in candidates {
        let neg = w.iter().filter(|&&v| v <= -t).count();
        let pos = w.iter().filter(|&&v| v >= t).count();
        if pos > 0 && (1 + neg) as f64 / pos as f64 <= q {
            return Ok(t);
        }
    }
    Ok(f64::INFINITY)
}

/// `{j : w_j ≥ threshold}`.
pub fn select(w: &[f64], threshold: f64) -> Vec<usize> {
    (0..w.len()).filter(|&j| w[j] >= threshold).collect()
}

/// `π_j = (1 + #{k : w_k ≤ −w_j}) / p` for `w_j > 0`, else 1.
pub fn pi_statistics(w: &[f64]) -> Vec<f64> {
    let p = w.len() as f64;
    w.iter()
        .map(|&wj| {
            if wj > 0.0 {
                (1 + w.iter().filter(|&&wk| wk <= -wj).count()) as f64 / p
            } else {
                1.0
            }
        })
        .collect()
}

/// Benjamini-Hochberg step-up: with `k* = max{k : p_(k) ≤ qk/p}`, reject
/// every index whose value is at most `p_(k*)` (ties are never split).
pub fn bh_select(pvalues: &[f64], q: f64) -> Result<Vec<usize>> {
    check_q(q)?;
    ensure!(
        pvalues.iter().all(|v| (0.0..=1.0).contains(v)),
        "p-values must lie in [0, 1]"
    );
    let m = pvalues.len();
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cut = (1..=m)
        .rev()
        .find(|&k| sorted[k - 1] <= q * k as f64 / m as f64);
    Ok(match cut {
        Some(k) => (0..m).filter(|&j| pvalues[j] <= sorted[k - 1]).collect(),
        None => Vec::new(),
    })
}

/// Threshold, selected set and π-statistics at level `q`.
pub fn knockoff_select(w: &[f64], q: f64) -> Result<SelectionResult> {
    let threshold = knockoff_threshold(w, q)?;
    Ok(SelectionResult {
        selected: select(w, threshold),
        threshold,
        q,
        pi: pi_statistics(w),
    })
}

/// `|S ∩ H₀| / max(|S|, 1)`.
pub fn fdp(selected: &[usize], h0: &[usize]) -> f64 {
    let hits = selected.iter().filter(|j| h0.contains(j)).count();
    hits as f64 / selected.len().max(1) as f64
}

/// `|S ∩ H₁| / |H₁|`.
pub fn power(selected: &[usize], h1: &[usize]) -> Result<f64> {
    if h1.is_empty() {
        return Err(KnockoffError::Contract(
            "power is undefined for an empty support".into(),
        ));
    }
    Ok(selected.iter().filter(|j| h1.contains(j)).count() as f64 / h1.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    const W: [f64; 5] = [3.0, 2.0, -1.0, 1.5, -0.5];

    /// Ratio at every candidate, evaluated independently of the scan order.
    fn threshold_by_enumeration(w: &[f64], q: f64) -> f64 {
        let mut best = f64::INFINITY;
        for &c in w {
            let t = c.abs();
            if t == 0.0 {
                continue;
            }
            let mut neg = 0;
            let mut pos = 0;
            for &v in w {
                if v <= -t {
                    neg += 1;
                }
                if v >= t {
                    pos += 1;
                }
            }
            if pos > 0 && (1.0 + neg as f64) / pos as f64 <= q && t < best {
                best = t;
            }
        }
        best
    }

    #[test]
    fn worked_threshold_example() {
        assert_eq!(threshold_by_enumeration(&W, 0.5), 1.5);
        let t = knockoff_threshold(&W, 0.5).unwrap();
        assert_eq!(t, 1.5);
        assert_eq!(select(&W, t), vec![0, 1, 3]);
    }

    #[test]
    fn threshold_edge_cases() {
        let pos = [0.4, 1.0, 2.0, 0.7];
        let t = knockoff_threshold(&pos, 0.25).unwrap();
        assert_eq!(t, 0.4);
        assert_eq!(select(&pos, t).len(), 4);
        assert_eq!(
            knockoff_threshold(&[-1.0, -2.0], 0.5).unwrap(),
            f64::INFINITY
        );
        assert_eq!(knockoff_threshold(&[0.0; 4], 0.5).unwrap(), f64::INFINITY);
        assert!(select(&[0.0; 4], f64::INFINITY).is_empty());
        assert!(knockoff_threshold(&W, 1.0).is_err());
        assert!(knockoff_threshold(&W, 0.0).is_err());
    }

    #[test]
    fn pi_examples() {
        assert_eq!(pi_statistics(&W), vec![0.2, 0.2, 1.0, 0.2, 1.0]);
        assert_eq!(pi_statistics(&[2.0; 4]), vec![0.25; 4]);
        assert_eq!(pi_statistics(&[0.0, -1.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn bh_examples() {
        assert!(bh_select(&[1.0; 5], 0.1).unwrap().is_empty());
        assert_eq!(bh_select(&pi_statistics(&W), 0.5).unwrap(), vec![0, 1, 3]);
        assert_eq!(bh_select(&[0.01, 0.9, 0.8, 0.7], 0.1).unwrap(), vec![0]);
    }

    #[test]
    fn fdp_and_power() {
        assert_eq!(fdp(&[], &[1, 2]), 0.0);
        assert!((fdp(&[1, 2, 3], &[3, 4, 5]) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(power(&[1, 2], &[1, 2]).unwrap(), 1.0);
        assert_eq!(power(&[3], &[1, 2]).unwrap(), 0.0);
        assert!(power(&[1], &[]).is_err());
        let mut rng = rng_from_seed(5);
        for _ in 0..200 {
            let s: Vec<usize> = (0..20).filter(|_| rng.random_bool(0.3)).collect();
            let h: Vec<usize> = (0..20).filter(|_| rng.random_bool(0.5)).collect();
            let mut inter = 0;
            for a in &s {
                for b in &h {
                    if a == b {
                        inter += 1;
                    }
                }
            }
            assert_eq!(fdp(&s, &h), inter as f64 / s.len().max(1) as f64);
            if !h.is_empty() {
                assert_eq!(power(&s, &h).unwrap(), inter as f64 / h.len() as f64);
            }
        }
    }

    fn random_w(rng: &mut crate::rng::Rng) -> Vec<f64> {
        let p = rng.random_range(1..=50);
        (0..p)
            .map(|_| match rng.random_range(0..10) {
                0 => 0.0,
                // coarse values to create ties
                1..=3 => rng.random_range(-4i32..=6) as f64 * 0.5,
                _ => rng.random_range(-2.0..4.0),
            })
            .collect()
    }

    #[test]
    fn threshold_equals_bh_on_pi() {
        let mut rng = rng_from_seed(11);
        for _ in 0..1000 {
            let w = random_w(&mut rng);
            for q in [0.05, 0.1, 0.2, 0.5] {
                let t = knockoff_threshold(&w, q).unwrap();
                assert_eq!(t, threshold_by_enumeration(&w, q));
                assert_eq!(
                    select(&w, t),
                    bh_select(&pi_statistics(&w), q).unwrap(),
                    "{w:?} q={q}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn equivalence_property(w in proptest::collection::vec(prop_oneof![Just(0.0), -5.0f64..5.0, (-6i32..6).prop_map(|v| v as f64)], 1..50), q in 0.01f64..0.99) {
            let t = knockoff_threshold(&w, q).unwrap();
            prop_assert_eq!(select(&w, t), bh_select(&pi_statistics(&w), q).unwrap());
        }

        #[test]
        fn selection_is_monotone_in_q(w in proptest::collection::vec(-5.0f64..5.0, 1..50), q1 in 0.01f64..0.99, q2 in 0.01f64..0.99) {
            let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            let a = select(&w, knockoff_threshold(&w, lo).unwrap());
            let b = select(&w, knockoff_threshold(&w, hi).unwrap());
            prop_assert!(a.iter().all(|j| b.contains(j)));
        }

        #[test]
        fn pi_range(w in proptest::collection::vec(-5.0f64..5.0, 1..50)) {
            let p = w.len() as f64;
            for (pi, wj) in pi_statistics(&w).iter().zip(&w) {
                prop_assert!(*pi >= 1.0 / p && *pi <= 1.0);
                if *wj <= 0.0 { prop_assert_eq!(*pi, 1.0); }
            }
        }
    }

    fn gaussian(n: usize, p: usize, seed: u64) -> Matrix {
        let mut rng = rng_from_seed(seed);
        Matrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn saturated_penalty_gives_zero_statistics() {
        let x = gaussian(50, 4, 1);
        let xt = gaussian(50, 4, 2);
        let y = Vector::from_iterator(50, gaussian(50, 1, 3).iter().copied());
        let s = lcd_statistics(&x, &xt, &y, LcdLambda::MaxFraction(1.0)).unwrap();
        assert_eq!(s.w, vec![0.0; 4]);
        assert!(s.fit_converged);
    }

    #[test]
    fn identical_knockoffs_credit_the_original_column() {
        // duplicated columns: the earlier column in the cyclic order absorbs
        // the coefficient, so W_j = |β̂_j| ≥ 0 and the knockoff gets zero
        let x = gaussian(60, 3, 4);
        let y = Vector::from_fn(60, |i, _| 2.0 * x[(i, 0)] - x[(i, 2)]);
        let s = lcd_statistics(&x, &x, &y, LcdLambda::default()).unwrap();
        let joint = joint_design(&x, &x).unwrap();
        let mut yc = y.clone();
        yc.add_scalar_mut(-y.mean());
        let fit = lasso_fit(&joint, &yc, s.lambda, LASSO_TOL, LASSO_MAX_ITER).unwrap();
        for j in 0..3 {
            assert_eq!(fit.coefficients[j + 3], 0.0);
            assert_eq!(s.w[j], fit.coefficients[j].abs());
        }
        assert!(s.w[0] > 0.0 && s.w[2] > 0.0);
        assert_eq!(s, lcd_statistics(&x, &x, &y, LcdLambda::default()).unwrap());
    }

    #[test]
    fn orthogonal_design_single_signal() {
        // columns of a Hadamard-type design are orthogonal after centering
        let n = 8;
        let h = |i: usize, j: usize| {
            if (i & j).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        };
        let x = Matrix::from_fn(n, 3, |i, j| h(i, j + 1));
        let xt = Matrix::from_fn(n, 3, |i, j| h(i, j + 4));
        let y = Vector::from_fn(n, |i, _| 3.0 * x[(i, 1)]);
        let lambda = 0.5;
        let s = lcd_statistics(&x, &xt, &y, LcdLambda::Fixed(lambda)).unwrap();
        // unit-variance orthogonal columns: β̂ = soft(X_jᵀy/n, λ)
        assert!((s.w[1] - (3.0 - lambda)).abs() < 1e-8);
        assert!(s.w[0].abs() < 1e-8 && s.w[2].abs() < 1e-8);
    }

    #[test]
    fn swapping_a_pair_negates_its_statistic() {
        let x = gaussian(80, 5, 6);
        let xt = gaussian(80, 5, 7);
        let y = Vector::from_fn(80, |i, _| x[(i, 0)] + 0.5 * xt[(i, 2)] + 0.3 * x[(i, 3)]);
        let lam = LcdLambda::Fixed(0.05);
        let base = lcd_statistics(&x, &xt, &y, lam).unwrap();
        let mut xs = x.clone();
        let mut xts = xt.clone();
        xs.set_column(2, &xt.column(2));
        xts.set_column(2, &x.column(2));
        let swapped = lcd_statistics(&xs, &xts, &y, lam).unwrap();
        for j in 0..5 {
            let expected = if j == 2 { -base.w[j] } else { base.w[j] };
            assert!(
                (swapped.w[j] - expected).abs() < 1e-6,
                "{j}: {} vs {expected}",
                swapped.w[j]
            );
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let y = Vector::zeros(10);
        assert!(lcd_statistics(
            &Matrix::zeros(10, 3),
            &Matrix::zeros(10, 2),
            &y,
            LcdLambda::default()
        )
        .is_err());
    }
}
