//! Finite-sample thresholds and the two calibrated two-sample tests.
//!
//! The analytic test compares the statistic against a concentration
//! threshold that depends only on the sample sizes, the projected dimension,
//! and the kernel bound B; it is distribution-free and conservative. The
//! permutation test recomputes the statistic over random relabelings of the
//! pooled sample and is the practical calibration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kernel::{kernel_bound, KernelParams, SampleSet};
use crate::rng::{derive_seed, Stream};
use crate::solver::{kpw_distance, SolverConfig};
use crate::{Error, Result};

const PERM_TAG: u64 = 0x5045_524d;

/// Calibration method of a test outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMethod {
    Analytic,
    Permutation,
}

/// Decision record of one two-sample test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub threshold: f64,
    pub reject_null: bool,
    pub method: TestMethod,
    pub alpha: f64,
    /// Add-one permutation p-value; absent for the analytic test.
    pub p_value: Option<f64>,
    /// Markov bound on the type-II error, when a population estimate exists.
    pub type2_bound: Option<f64>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 0.5), got {alpha}"
        )));
    }
    Ok(())
}

/// The epsilon-net expression minimized inside [`zeta_factor`].
fn zeta_bracket(eps: f64, n: usize, d: usize, b: f64) -> f64 {
    let q = 4.0 * b.sqrt() / eps;
    let covering = 2.0 * q.ceil() + 1.0;
    let ball = (1.0 + q).powi(d as i32) * std::f64::consts::LN_2;
    4.0 * eps + 6.0 * (2.0 * b / n as f64).sqrt() * (covering + ball).sqrt()
}

/// Covering-number factor of the finite-sample threshold:
/// the infimum over eps > 0 of
/// 4 eps + 6 sqrt(2B/N) sqrt((2 ceil(4 sqrt(B)/eps) + 1) + (1 + 4 sqrt(B)/eps)^d ln 2).
///
/// Minimized numerically on a log-spaced coarse grid over
/// [1e-6 sqrt(B), 10 sqrt(B)] followed by golden-section refinement of the
/// bracketing interval; the ceiling's jump points inside the bracket are
/// probed explicitly as well.
pub fn zeta_factor(n: usize, d: usize, b: f64) -> f64 {
    assert!(n >= 1 && d >= 1, "zeta_factor needs n, d >= 1");
    assert!(b > 0.0, "zeta_factor needs B > 0");
    let sqrt_b = b.sqrt();
    let lo = 1e-6 * sqrt_b;
    let hi = 10.0 * sqrt_b;
    let coarse = 200usize;
    let ratio = (hi / lo).ln();
    let grid = |i: usize| lo * (ratio * i as f64 / (coarse - 1) as f64).exp();

    let mut best_val = f64::INFINITY;
    let mut best_idx = 0usize;
    for i in 0..coarse {
        let h = zeta_bracket(grid(i), n, d, b);
        if h < best_val {
            best_val = h;
            best_idx = i;
        }
    }

    // refinement window around the coarse minimizer; wide enough that a
    // neighboring ceiling dip cannot hide outside it
    let left = grid(best_idx.saturating_sub(3));
    let right = grid((best_idx + 3).min(coarse - 1));
    if left >= right {
        return best_val;
    }

    // fine scan of the window
    let fine = 2_000usize;
    let fratio = (right / left).ln();
    let mut fine_best = best_val;
    let mut fine_arg = (left * right).sqrt();
    for i in 0..=fine {
        let eps = left * (fratio * i as f64 / fine as f64).exp();
        let h = zeta_bracket(eps, n, d, b);
        if h < fine_best {
            fine_best = h;
            fine_arg = eps;
        }
    }
    best_val = fine_best;

    // the ceiling makes the objective piecewise; its jump points are local
    // dips, so probe every one inside the window exactly
    let q_hi = (4.0 * sqrt_b / left).floor() as u64;
    let q_lo = (4.0 * sqrt_b / right).ceil() as u64;
    if q_hi >= q_lo && q_hi - q_lo <= 500_000 {
        for k in q_lo..=q_hi {
            if k == 0 {
                continue;
            }
            let eps = 4.0 * sqrt_b / k as f64;
            if eps >= left && eps <= right {
                best_val = best_val.min(zeta_bracket(eps, n, d, b));
            }
        }
    }

    // golden-section polish inside one fine cell around the scan minimizer
    // (smooth there), keeping the best value ever evaluated
    let delta = fine_arg * (fratio / fine as f64).exp_m1().abs().max(1e-12);
    let mut gl = (fine_arg - delta).max(left);
    let mut gr = (fine_arg + delta).min(right);
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = gr - phi * (gr - gl);
    let mut e = gl + phi * (gr - gl);
    let mut fc = zeta_bracket(c, n, d, b);
    let mut fe = zeta_bracket(e, n, d, b);
    for _ in 0..120 {
        best_val = best_val.min(fc.min(fe));
        if fc < fe {
            gr = e;
            e = c;
            fe = fc;
            c = gr - phi * (gr - gl);
            fc = zeta_bracket(c, n, d, b);
        } else {
            gl = c;
            c = e;
            fc = fe;
            e = gl + phi * (gr - gl);
            fe = zeta_bracket(e, n, d, b);
        }
        if (gr - gl).abs() < 1e-15 * sqrt_b {
            break;
        }
    }
    best_val.min(fc).min(fe)
}

/// Level-alpha acceptance threshold for the empirical statistic.
///
/// Uses the sharper equal-size expression when n = m:
/// sqrt(4B/n log(2/alpha)) + 2 sqrt(2dB)/sqrt(n) + zeta(n, d),
/// and otherwise the general form with both tail and both covering terms.
pub fn gamma_threshold(n: usize, m: usize, alpha: f64, d: usize, b: f64) -> Result<f64> {
    if n == 0 || m == 0 || d == 0 {
        return Err(Error::InvalidParameter(
            "gamma_threshold needs n, m, d >= 1".into(),
        ));
    }
    if !(b > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "kernel bound must be positive, got {b}"
        )));
    }
    check_alpha(alpha)?;
    let log_term = (2.0 / alpha).ln();
    let (nf, mf, df) = (n as f64, m as f64, d as f64);
    let value = if n == m {
        (4.0 * b / nf * log_term).sqrt()
            + 2.0 * (2.0 * df * b).sqrt() / nf.sqrt()
            + zeta_factor(n, d, b)
    } else {
        (2.0 * b * (mf + nf) / (mf * nf) * log_term).sqrt()
            + 2.0 * (2.0 * df * b).sqrt() / nf.sqrt()
            + 2.0 * (2.0 * df * b).sqrt() / mf.sqrt()
            + zeta_factor(n, d, b)
            + zeta_factor(m, d, b)
    };
    Ok(value)
}

/// The acceptance region is closed: equality keeps the null.
fn reject_analytic(statistic: f64, threshold: f64) -> bool {
    statistic > threshold
}

/// Distribution-free test: reject when the statistic exceeds the
/// concentration threshold. Conservative by construction.
pub fn analytic_test(
    xs: &SampleSet,
    ys: &SampleSet,
    params: &KernelParams,
    config: &SolverConfig,
    alpha: f64,
) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let result = kpw_distance(xs, ys, params, config)?;
    let b = kernel_bound(params);
    let threshold = gamma_threshold(xs.len(), ys.len(), alpha, params.d, b)?;
    Ok(TestOutcome {
        statistic: result.statistic,
        threshold,
        reject_null: reject_analytic(result.statistic, threshold),
        method: TestMethod::Analytic,
        alpha,
        p_value: None,
        type2_bound: None,
    })
}

/// Permutation calibration: pool the samples, re-split `num_perms` times,
/// and report the add-one p-value (1 + #{permuted >= observed}) /
/// (num_perms + 1). Rejects when p < alpha.
///
/// Splits are drawn from the pooled sample in a canonical (sorted) order, so
/// the permutation distribution does not depend on which sample carries
/// which label. Every permutation solves with the same solver seed.
pub fn permutation_test(
    xs: &SampleSet,
    ys: &SampleSet,
    params: &KernelParams,
    config: &SolverConfig,
    num_perms: usize,
    alpha: f64,
    seed: u64,
) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    if num_perms < 19 {
        return Err(Error::InvalidParameter(format!(
            "need at least 19 permutations for a meaningful p-value, got {num_perms}"
        )));
    }
    if xs.dim() != ys.dim() {
        return Err(Error::DimensionMismatch {
            left: xs.dim(),
            right: ys.dim(),
        });
    }
    let observed = kpw_distance(xs, ys, params, config)?.statistic;

    let (n, dim) = (xs.len(), xs.dim());
    let pooled = SampleSet::concat(xs, ys)?;
    let total = pooled.len();
    // canonical order: permutation splits are label-free
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| {
        for c in 0..dim {
            match pooled.points()[[a, c]].total_cmp(&pooled.points()[[b, c]]) {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        std::cmp::Ordering::Equal
    });
    let canonical: Vec<usize> = order;

    let perm_stats: Vec<Result<f64>> = (0..num_perms)
        .into_par_iter()
        .map(|k| {
            let mut stream = Stream::new(derive_seed(seed, &[PERM_TAG, k as u64]));
            let mut idx = canonical.clone();
            stream.shuffle(&mut idx);
            let xs_perm = pooled.select(&idx[..n]);
            let ys_perm = pooled.select(&idx[n..]);
            Ok(kpw_distance(&xs_perm, &ys_perm, params, config)?.statistic)
        })
        .collect();
    let mut stats = Vec::with_capacity(num_perms);
    for s in perm_stats {
        stats.push(s?);
    }

    let exceed = stats.iter().filter(|&&s| s >= observed).count();
    let p_value = (1.0 + exceed as f64) / (num_perms as f64 + 1.0);

    // informational threshold: the k-th largest permuted statistic with
    // k = floor(alpha (num_perms + 1))
    let mut sorted = stats.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite statistics"));
    let k = ((alpha * (num_perms as f64 + 1.0)).floor() as usize).clamp(1, num_perms);
    let threshold = sorted[k - 1];

    Ok(TestOutcome {
        statistic: observed,
        threshold,
        reject_null: p_value < alpha,
        method: TestMethod::Permutation,
        alpha,
        p_value: Some(p_value),
        type2_bound: None,
    })
}

/// Markov bound on the type-II error: MSE / (KPW - gamma)^2.
///
/// Only meaningful when the population distance clears the threshold; the
/// caller clamps to 1 for reporting since it bounds a probability.
pub fn type2_bound(kpw_population: f64, gamma: f64, mse: f64) -> Result<f64> {
    if mse < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "mse must be nonnegative, got {mse}"
        )));
    }
    if !(kpw_population > gamma) {
        return Err(Error::VacuousBound {
            kpw: kpw_population,
            gamma,
        });
    }
    Ok(mse / (kpw_population - gamma).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use ndarray::Array2 as A2;

    /// Independent dense-grid minimizer of the same bracket expression,
    /// written from the formula without reusing the implementation's search.
    /// The ceiling's jump points next to the grid minimizer are evaluated
    /// exactly; pure sampling misses those dips by more than the agreement
    /// tolerance.
    fn zeta_dense_oracle(n: usize, d: usize, b: f64, points: usize) -> f64 {
        let sqrt_b = b.sqrt();
        let lo = 1e-6 * sqrt_b;
        let hi = 10.0 * sqrt_b;
        let h = |eps: f64| {
            let q = 4.0 * sqrt_b / eps;
            4.0 * eps
                + 6.0
                    * (2.0 * b / n as f64).sqrt()
                    * ((2.0 * q.ceil() + 1.0) + (1.0 + q).powi(d as i32) * 2.0f64.ln()).sqrt()
        };
        let mut best = f64::INFINITY;
        let mut best_eps = lo;
        for i in 0..points {
            let t = i as f64 / (points - 1) as f64;
            let eps = lo * (hi / lo).powf(t);
            let val = h(eps);
            if val < best {
                best = val;
                best_eps = eps;
            }
        }
        let window = (hi / lo).powf(10.0 / (points - 1) as f64);
        let (wl, wr) = (best_eps / window, best_eps * window);
        let k_hi = (4.0 * sqrt_b / wl).floor() as u64;
        let k_lo = ((4.0 * sqrt_b / wr).ceil() as u64).max(1);
        for k in k_lo..=k_hi {
            let eps = 4.0 * sqrt_b / k as f64;
            if eps >= wl && eps <= wr {
                best = best.min(h(eps));
            }
        }
        best
    }

    fn random_set(n: usize, dim: usize, seed: u64, shift: f64) -> SampleSet {
        let mut stream = Stream::new(seed);
        SampleSet::new(A2::from_shape_fn((n, dim), |_| {
            stream.next_normal() + shift
        }))
        .unwrap()
    }

    fn quick_config() -> SolverConfig {
        SolverConfig {
            eta: 0.05,
            max_iters: 40,
            seed: 1,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn zeta_positive_and_decreasing_in_n() {
        let z10 = zeta_factor(10, 2, 1.0);
        let z100 = zeta_factor(100, 2, 1.0);
        let z1000 = zeta_factor(1000, 2, 1.0);
        assert!(z10 > 0.0);
        assert!(z10 > z100);
        assert!(z100 > z1000);
    }

    #[test]
    fn zeta_matches_dense_grid() {
        let got = zeta_factor(100, 1, 1.0);
        let want = zeta_dense_oracle(100, 1, 1.0, 1_000_000);
        assert!(
            (got - want).abs() / want <= 1e-6,
            "zeta {got} vs dense oracle {want}"
        );
    }

    #[test]
    fn gamma_reference_composition() {
        let n = 100;
        let got = gamma_threshold(n, n, 0.05, 1, 1.0).unwrap();
        let want = (4.0 / 100.0 * (2.0 / 0.05f64).ln()).sqrt()
            + 2.0 * 2.0f64.sqrt() / 10.0
            + zeta_factor(100, 1, 1.0);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn gamma_monotonicity() {
        // tighter alpha raises the threshold
        let loose = gamma_threshold(50, 50, 0.2, 2, 1.5).unwrap();
        let tight = gamma_threshold(50, 50, 0.01, 2, 1.5).unwrap();
        assert!(tight > loose);
        // larger n lowers it
        let small = gamma_threshold(20, 20, 0.05, 2, 1.5).unwrap();
        let big = gamma_threshold(200, 200, 0.05, 2, 1.5).unwrap();
        assert!(big < small);
        // equal-size form drops terms relative to the general one
        let equal = gamma_threshold(64, 64, 0.05, 2, 1.5).unwrap();
        let general = (2.0 * 1.5 * 128.0 / 4096.0 * (2.0 / 0.05f64).ln()).sqrt()
            + 4.0 * (2.0 * 2.0 * 1.5f64).sqrt() / 8.0
            + 2.0 * zeta_factor(64, 2, 1.5);
        assert!(equal <= general);
        assert!(gamma_threshold(10, 10, 0.6, 1, 1.0).is_err());
    }

    #[test]
    fn boundary_statistic_keeps_null() {
        assert!(!reject_analytic(1.0, 1.0));
        assert!(reject_analytic(1.0 + 1e-12, 1.0));
    }

    #[test]
    fn analytic_test_accepts_identical_samples() {
        let xs = random_set(12, 2, 5, 0.0);
        let params = KernelParams::new(1.0, 0.5, 1).unwrap();
        let outcome = analytic_test(&xs, &xs, &params, &quick_config(), 0.05).unwrap();
        assert!(!outcome.reject_null);
        assert!(outcome.threshold > 0.0);
        assert!(outcome.p_value.is_none());
    }

    #[test]
    fn permutation_p_value_bounds_and_floor() {
        let xs = random_set(8, 2, 3, 0.0);
        let ys = random_set(8, 2, 4, 6.0); // far apart: observed beats all splits
        let params = KernelParams::new(2.0, 0.5, 1).unwrap();
        let outcome = permutation_test(&xs, &ys, &params, &quick_config(), 19, 0.05, 7).unwrap();
        let p = outcome.p_value.unwrap();
        assert!((p - 1.0 / 20.0).abs() < 1e-12, "p = {p}");
        assert!(outcome.reject_null == (p < 0.05));
        // needs 19 permutations minimum
        assert!(permutation_test(&xs, &ys, &params, &quick_config(), 10, 0.05, 7).is_err());
    }

    #[test]
    fn permutation_p_value_invariant_under_relabeling() {
        let xs = random_set(6, 2, 11, 0.0);
        let ys = random_set(6, 2, 12, 2.0);
        let params = KernelParams::new(1.0, 0.5, 1).unwrap();
        let config = quick_config();
        let ab = permutation_test(&xs, &ys, &params, &config, 19, 0.05, 21).unwrap();
        let ba = permutation_test(&ys, &xs, &params, &config, 19, 0.05, 21).unwrap();
        // splits are drawn from the canonical pooled order, so the permuted
        // statistics (and hence the empirical threshold) match bitwise
        assert_eq!(ab.threshold.to_bits(), ba.threshold.to_bits());
        assert_eq!(ab.p_value, ba.p_value);
    }

    #[test]
    fn analytic_decision_invariant_under_row_permutation() {
        let xs = random_set(10, 2, 31, 0.0);
        let ys = random_set(10, 2, 32, 0.5);
        let params = KernelParams::new(1.0, 0.5, 1).unwrap();
        let config = quick_config();
        let base = analytic_test(&xs, &ys, &params, &config, 0.05).unwrap();
        let mut idx: Vec<usize> = (0..10).collect();
        idx.reverse();
        let xs_shuffled = xs.select(&idx);
        let shuffled = analytic_test(&xs_shuffled, &ys, &params, &config, 0.05).unwrap();
        assert_eq!(base.reject_null, shuffled.reject_null);
        assert_eq!(base.threshold, shuffled.threshold);
    }

    #[test]
    fn type2_bound_values() {
        assert_eq!(type2_bound(0.5, 0.3, 0.0).unwrap(), 0.0);
        // KPW = gamma + sqrt(MSE) makes the bound exactly 1
        let b = type2_bound(0.3 + 0.1, 0.3, 0.01).unwrap();
        assert!((b - 1.0).abs() < 1e-12);
        let c = type2_bound(0.5, 0.3, 0.01).unwrap();
        assert!((c - 0.25).abs() < 1e-12);
        assert!(matches!(
            type2_bound(0.2, 0.3, 0.1),
            Err(Error::VacuousBound { .. })
        ));
    }

    #[test]
    fn outcome_serializes_with_all_keys() {
        let o = TestOutcome {
            statistic: 0.2,
            threshold: 0.5,
            reject_null: false,
            method: TestMethod::Analytic,
            alpha: 0.05,
            p_value: None,
            type2_bound: None,
        };
        let json = serde_json::to_value(&o).unwrap();
        let obj = json.as_object().unwrap();
        for key in [
            "statistic",
            "threshold",
            "reject_null",
            "method",
            "alpha",
            "p_value",
            "type2_bound",
        ] {
            assert!(obj.contains_key(key), "missing {key}");
        }
        assert_eq!(obj["method"], "analytic");
    }
}
