//! Wilcoxon signed-rank and rank-sum tests, two-sided.
//!
//! Small samples get the exact permutation null (sign flips resp. rank
//! splits); larger ones the normal approximation with continuity and tie
//! corrections. Mid-ranks everywhere; zero differences are dropped
//! (Wilcoxon's rule).

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest n for the exact signed-rank null (2^25 sign patterns via DP).
const EXACT_SIGNED_MAX_N: usize = 25;
/// Largest n·m for the exact rank-sum null.
const EXACT_RANKSUM_MAX_NM: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TestResult {
    /// W+ (signed-rank) or Mann–Whitney U of the first sample (rank-sum).
    pub statistic: f64,
    pub p_value: f64,
    pub method: Method,
    /// Pairs with nonzero difference, or size of the first sample.
    pub n: usize,
    /// Size of the second sample (rank-sum only).
    pub m: Option<usize>,
}

/// Mid-ranks (1-based) of `values`, plus the tie-run lengths.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut tie_runs = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mid = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mid;
        }
        if j > i {
            tie_runs.push(j - i + 1);
        }
        i = j + 1;
    }
    (ranks, tie_runs)
}

fn two_sided_normal(deviation: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0; // degenerate null: no evidence either way
    }
    // continuity correction shrinks the deviation toward the mean
    let z = (deviation.abs() - 0.5).max(0.0) / sigma;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}

fn two_sided_exact(counts: &[f64], total_patterns: f64, observed: u64) -> f64 {
    let lo: f64 = counts[..=observed as usize].iter().sum();
    let hi: f64 = counts[observed as usize..].iter().sum();
    (2.0 * lo.min(hi) / total_patterns).min(1.0)
}

/// Two-sided Wilcoxon signed-rank test on paired observations.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<TestResult> {
    wilcoxon_signed_rank_method(pairs, None)
}

/// Signed-rank test with an explicit method choice; `None` picks
/// exact for n ≤ 25. Exposed so the two paths can be compared.
pub fn wilcoxon_signed_rank_method(
    pairs: &[(f64, f64)],
    method: Option<Method>,
) -> Result<TestResult> {
    let diffs: Vec<f64> = pairs
        .iter()
        .map(|&(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Err(Error::AllDifferencesZero);
    }
    signed_rank_from_diffs(&diffs, method)
}

/// `force` overrides the method choice (tests compare the two paths).
fn signed_rank_from_diffs(diffs: &[f64], force: Option<Method>) -> Result<TestResult> {
    let n = diffs.len();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, tie_runs) = midranks(&abs);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();

    let method = force.unwrap_or(if n <= EXACT_SIGNED_MAX_N {
        Method::Exact
    } else {
        Method::NormalApprox
    });
    let p_value = match method {
        Method::Exact => {
            // doubled mid-ranks are integers; DP over sign subsets
            let doubled: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
            let total: u64 = doubled.iter().sum();
            let mut dp = vec![0.0f64; total as usize + 1];
            dp[0] = 1.0;
            for &d in &doubled {
                for s in (d..=total).rev() {
                    dp[s as usize] += dp[(s - d) as usize];
                }
            }
            two_sided_exact(&dp, (n as f64).exp2(), (2.0 * w_plus).round() as u64)
        }
        Method::NormalApprox => {
            let nf = n as f64;
            let mean = nf * (nf + 1.0) / 4.0;
            let tie_term: f64 = tie_runs
                .iter()
                .map(|&t| {
                    let t = t as f64;
                    t * t * t - t
                })
                .sum::<f64>()
                / 48.0;
            let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
            two_sided_normal(w_plus - mean, var.max(0.0).sqrt())
        }
    };
    Ok(TestResult {
        statistic: w_plus,
        p_value,
        method,
        n,
        m: None,
    })
}

/// Two-sided Wilcoxon rank-sum (Mann–Whitney) test on independent samples.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<TestResult> {
    wilcoxon_rank_sum_method(a, b, None)
}

/// Rank-sum test with an explicit method choice; `None` picks exact for
/// tie-free samples with n·m ≤ 400. Exposed so the two paths can be
/// compared.
pub fn wilcoxon_rank_sum_method(
    a: &[f64],
    b: &[f64],
    method: Option<Method>,
) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    rank_sum_with(a, b, method)
}

fn rank_sum_with(a: &[f64], b: &[f64], force: Option<Method>) -> Result<TestResult> {
    let (n, m) = (a.len(), b.len());
    let combined: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, tie_runs) = midranks(&combined);
    let r_a: f64 = ranks[..n].iter().sum();
    let u = r_a - (n * (n + 1)) as f64 / 2.0;

    let has_ties = !tie_runs.is_empty();
    let method = force.unwrap_or(if n * m <= EXACT_RANKSUM_MAX_NM && !has_ties {
        Method::Exact
    } else {
        Method::NormalApprox
    });
    let p_value = match method {
        Method::Exact => {
            // count size-n subsets of ranks 1..=n+m by rank sum
            let total_ranks = n + m;
            let max_sum: usize = (total_ranks - n + 1..=total_ranks).sum();
            let mut dp = vec![vec![0.0f64; max_sum + 1]; n + 1];
            dp[0][0] = 1.0;
            for r in 1..=total_ranks {
                for k in (1..=n.min(r)).rev() {
                    for s in (r..=max_sum).rev() {
                        let add = dp[k - 1][s - r];
                        if add != 0.0 {
                            dp[k][s] += add;
                        }
                    }
                }
            }
            let counts = &dp[n];
            let observed = r_a.round() as u64;
            let total: f64 = counts.iter().sum(); // C(n+m, n)
            two_sided_exact(counts, total, observed)
        }
        Method::NormalApprox => {
            let (nf, mf) = (n as f64, m as f64);
            let big_n = nf + mf;
            let tie_term: f64 = tie_runs
                .iter()
                .map(|&t| {
                    let t = t as f64;
                    t * t * t - t
                })
                .sum();
            let var = nf * mf / 12.0 * ((big_n + 1.0) - tie_term / (big_n * (big_n - 1.0)));
            two_sided_normal(u - nf * mf / 2.0, var.max(0.0).sqrt())
        }
    };
    Ok(TestResult {
        statistic: u,
        p_value,
        method,
        n,
        m: Some(m),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal as GaussDist};

    #[test]
    fn all_positive_differences_small_n() {
        let pairs: Vec<(f64, f64)> = (1..=5).map(|i| (i as f64 + 10.0, i as f64)).collect();
        let r = wilcoxon_signed_rank(&pairs).unwrap();
        assert_eq!(r.method, Method::Exact);
        assert_eq!(r.statistic, 15.0);
        assert!((r.p_value - 0.0625).abs() < 1e-12, "p {}", r.p_value);
    }

    #[test]
    fn equal_pairs_are_an_error() {
        let pairs = vec![(1.0, 1.0), (2.0, 2.0)];
        assert!(matches!(
            wilcoxon_signed_rank(&pairs),
            Err(Error::AllDifferencesZero)
        ));
    }

    #[test]
    fn zero_differences_dropped_not_counted() {
        let pairs = vec![(5.0, 5.0), (3.0, 1.0), (4.0, 1.0), (6.0, 2.0), (9.0, 4.0), (8.0, 2.0)];
        let r = wilcoxon_signed_rank(&pairs).unwrap();
        assert_eq!(r.n, 5);
        assert!((r.p_value - 0.0625).abs() < 1e-12);
    }

    #[test]
    fn midranks_average_tied_positions() {
        let (ranks, runs) = midranks(&[1.0, 1.0, 2.0]);
        assert_eq!(ranks, vec![1.5, 1.5, 3.0]);
        assert_eq!(runs, vec![2]);
    }

    #[test]
    fn exact_and_normal_paths_agree_at_n20() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let diffs: Vec<f64> = (0..20).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let exact = signed_rank_from_diffs(&diffs, Some(Method::Exact)).unwrap();
            let approx = signed_rank_from_diffs(&diffs, Some(Method::NormalApprox)).unwrap();
            assert!(
                (exact.p_value - approx.p_value).abs() <= 0.02,
                "exact {} approx {}",
                exact.p_value,
                approx.p_value
            );
        }
    }

    #[test]
    fn rank_sum_tiny_exact_case() {
        let r = wilcoxon_rank_sum(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.method, Method::Exact);
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0 / 3.0).abs() < 1e-12, "p {}", r.p_value);
    }

    #[test]
    fn identical_samples_give_p_one() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let r = wilcoxon_rank_sum(&a, &a).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn rank_sum_is_symmetric_in_its_arguments() {
        let a = [3.1, 0.2, 5.5, 2.2, 4.0];
        let b = [1.0, 6.3, 2.5, 0.9];
        let ab = wilcoxon_rank_sum(&a, &b).unwrap();
        let ba = wilcoxon_rank_sum(&b, &a).unwrap();
        assert!((ab.p_value - ba.p_value).abs() < 1e-12);
    }

    #[test]
    fn rank_sum_invariant_under_monotone_transform() {
        let a = [3.1, 0.2, 5.5, 2.2, 4.0, 1.7];
        let b = [1.0, 6.3, 2.5, 0.9, 7.7];
        let raw = wilcoxon_rank_sum(&a, &b).unwrap();
        let ea: Vec<f64> = a.iter().map(|v| v.exp()).collect();
        let eb: Vec<f64> = b.iter().map(|v| v.exp()).collect();
        let exp = wilcoxon_rank_sum(&ea, &eb).unwrap();
        assert_eq!(raw.p_value, exp.p_value);
        assert_eq!(raw.statistic, exp.statistic);
    }

    #[test]
    fn rank_sum_exact_vs_normal_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..10.0)).collect();
            let b: Vec<f64> = (0..14).map(|_| rng.gen_range(2.0..12.0)).collect();
            let exact = rank_sum_with(&a, &b, Some(Method::Exact)).unwrap();
            let approx = rank_sum_with(&a, &b, Some(Method::NormalApprox)).unwrap();
            assert!(
                (exact.p_value - approx.p_value).abs() <= 0.02,
                "exact {} approx {}",
                exact.p_value,
                approx.p_value
            );
        }
    }

    #[test]
    fn separated_cohorts_are_significant() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let stump = GaussDist::new(-19.2, 3.8).unwrap();
        let regular = GaussDist::new(-13.8, 2.5).unwrap();
        let a: Vec<f64> = (0..150).map(|_| stump.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..150).map(|_| regular.sample(&mut rng)).collect();
        let r = wilcoxon_rank_sum(&a, &b).unwrap();
        assert_eq!(r.method, Method::NormalApprox);
        assert!(r.p_value < 0.01, "p {}", r.p_value);
    }

    #[test]
    fn empty_sample_is_an_error() {
        assert!(matches!(
            wilcoxon_rank_sum(&[], &[1.0]),
            Err(Error::EmptySample)
        ));
    }
}
