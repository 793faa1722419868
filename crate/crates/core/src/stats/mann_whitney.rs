use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::StatsError;

/// Largest pooled sample size for which the exact null distribution is used
/// (when the data has no ties).
pub const EXACT_MAX_TOTAL: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UTestResult {
    /// U statistic of the first sample: pairs where it is larger, ties count half.
    pub u: f64,
    /// Tie-corrected, continuity-corrected normal deviate of `u`.
    pub z: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub method: TestMethod,
}

impl UTestResult {
    /// True when the first sample tends to be smaller than the second.
    pub fn first_is_lower(&self, n1: usize, n2: usize) -> bool {
        self.u < (n1 * n2) as f64 / 2.0
    }
}

/// Two-sided Mann-Whitney U test of `a` against `b`.
///
/// Tie-free samples with `n1 + n2 <= 16` use the exact permutation
/// distribution; everything else uses the normal approximation with tie
/// correction and continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<UTestResult, StatsError> {
    run(a, b, false)
}

/// Same test, always using the normal approximation.
pub fn mann_whitney_u_normal(a: &[f64], b: &[f64]) -> Result<UTestResult, StatsError> {
    run(a, b, true)
}

fn run(a: &[f64], b: &[f64], force_normal: bool) -> Result<UTestResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (n1, n2) = (a.len(), b.len());
    let ranked = rank(a, b);
    let u = ranked.rank_sum_first - (n1 * (n1 + 1)) as f64 / 2.0;
    let (z, p_normal) = normal_approx(u, n1, n2, &ranked.tie_sizes);

    let tie_free = ranked.tie_sizes.is_empty();
    if !force_normal && tie_free && n1 + n2 <= EXACT_MAX_TOTAL {
        let p = exact_p(u.round() as usize, n1, n2);
        return Ok(UTestResult {
            u,
            z,
            p,
            method: TestMethod::Exact,
        });
    }
    Ok(UTestResult {
        u,
        z,
        p: p_normal,
        method: TestMethod::NormalApprox,
    })
}

struct Ranked {
    rank_sum_first: f64,
    /// Sizes of tie groups with more than one member.
    tie_sizes: Vec<usize>,
}

/// Midranks of the pooled sample.
fn rank(a: &[f64], b: &[f64]) -> Ranked {
    let n1 = a.len();
    let mut pooled: Vec<(f64, bool)> = a
        .iter()
        .map(|&v| (v, true))
        .chain(b.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut rank_sum_first = 0.0;
    let mut tie_sizes = Vec::new();
    let mut start = 0;
    while start < pooled.len() {
        let mut end = start + 1;
        while end < pooled.len() && pooled[end].0 == pooled[start].0 {
            end += 1;
        }
        // ranks start+1 ..= end share their average
        let midrank = (start + 1 + end) as f64 / 2.0;
        let firsts = pooled[start..end]
            .iter()
            .filter(|(_, first)| *first)
            .count();
        rank_sum_first += midrank * firsts as f64;
        if end - start > 1 {
            tie_sizes.push(end - start);
        }
        start = end;
    }
    debug_assert!(rank_sum_first >= (n1 * (n1 + 1)) as f64 / 2.0 - 1e-9);
    Ranked {
        rank_sum_first,
        tie_sizes,
    }
}

fn normal_approx(u: f64, n1: usize, n2: usize, tie_sizes: &[usize]) -> (f64, f64) {
    let (f1, f2) = (n1 as f64, n2 as f64);
    let n = f1 + f2;
    let tie_term: f64 = tie_sizes
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let variance = f1 * f2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if variance <= 1e-12 {
        return (0.0, 1.0);
    }
    // A tie group of even size puts midranks on half-integers, so U moves in
    // steps of 1/2 and the continuity correction is half of that step.
    let step = if tie_sizes.iter().any(|t| t % 2 == 0) {
        0.5
    } else {
        1.0
    };
    let diff = u - f1 * f2 / 2.0;
    let corrected = (diff.abs() - step / 2.0).max(0.0);
    let z = corrected.copysign(diff) / variance.sqrt();
    let p = erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0);
    (z, p)
}

/// Number of arrangements of `n1` first-sample and `n2` second-sample values
/// (all distinct) for each U in `0..=n1*n2`.
fn null_counts(n1: usize, n2: usize) -> Vec<u64> {
    // table[m][n] holds the distribution for sizes (m, n). The largest pooled
    // value either belongs to the first sample (adding n to U) or not.
    let mut table: Vec<Vec<Vec<u64>>> = vec![vec![Vec::new(); n2 + 1]; n1 + 1];
    for m in 0..=n1 {
        for n in 0..=n2 {
            let mut dist = vec![0u64; m * n + 1];
            if m == 0 || n == 0 {
                dist[0] = 1;
            } else {
                for (k, slot) in dist.iter_mut().enumerate() {
                    let from_first = if k >= n {
                        table[m - 1][n].get(k - n).copied().unwrap_or(0)
                    } else {
                        0
                    };
                    let from_second = table[m][n - 1].get(k).copied().unwrap_or(0);
                    *slot = from_first + from_second;
                }
            }
            table[m][n] = dist;
        }
    }
    std::mem::take(&mut table[n1][n2])
}

fn exact_p(u: usize, n1: usize, n2: usize) -> f64 {
    let counts = null_counts(n1, n2);
    let total: u64 = counts.iter().sum();
    let lower: u64 = counts[..=u].iter().sum();
    let upper: u64 = counts[u..].iter().sum();
    (2.0 * lower.min(upper) as f64 / total as f64).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force oracle: enumerate every split of the pooled sample into
    /// groups of the original sizes and count U values at least as extreme.
    fn enumerate_p(a: &[f64], b: &[f64]) -> f64 {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let n = pooled.len();
        let n1 = a.len();
        let u_of = |mask: u32| -> f64 {
            let mut u = 0.0;
            for i in 0..n {
                if mask & (1 << i) == 0 {
                    continue;
                }
                for j in 0..n {
                    if mask & (1 << j) != 0 {
                        continue;
                    }
                    if pooled[i] > pooled[j] {
                        u += 1.0;
                    } else if pooled[i] == pooled[j] {
                        u += 0.5;
                    }
                }
            }
            u
        };
        let observed = u_of((1u32 << n1) - 1);
        let (mut le, mut ge, mut total) = (0u64, 0u64, 0u64);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != n1 {
                continue;
            }
            let u = u_of(mask);
            total += 1;
            if u <= observed + 1e-9 {
                le += 1;
            }
            if u >= observed - 1e-9 {
                ge += 1;
            }
        }
        (2.0 * le.min(ge) as f64 / total as f64).min(1.0)
    }

    #[test]
    fn fully_separated_triples() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert_eq!(r.method, TestMethod::Exact);
        // 1 of 20 splits is this extreme on each side
        assert!((r.p - 0.1).abs() < 1e-15);
    }

    #[test]
    fn identical_tied_samples() {
        let r = mann_whitney_u(&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(r.p, 1.0);
        assert_eq!(r.z, 0.0);
        assert_eq!(r.method, TestMethod::NormalApprox);
    }

    #[test]
    fn empty_and_nan_are_errors() {
        assert_eq!(mann_whitney_u(&[], &[1.0]), Err(StatsError::EmptySample));
        assert_eq!(
            mann_whitney_u(&[f64::NAN], &[1.0]),
            Err(StatsError::NonFinite)
        );
    }

    #[test]
    fn null_counts_match_binomial_total() {
        let counts = null_counts(8, 8);
        assert_eq!(counts.iter().sum::<u64>(), 12_870);
        assert_eq!(counts.len(), 65);
        assert_eq!(counts.first(), Some(&1));
        assert_eq!(counts.last(), Some(&1));
    }

    #[test]
    fn large_samples_use_normal_approximation() {
        let a: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..30).map(|i| i as f64 + 0.5).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(r.method, TestMethod::NormalApprox);
        assert!(r.p > 0.5);
    }

    fn distinct_pair(max_total: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1..max_total).prop_flat_map(move |n1| {
            (Just(n1), 1..=(max_total - n1)).prop_flat_map(|(n1, n2)| {
                proptest::sample::subsequence((0..200).collect::<Vec<i32>>(), n1 + n2)
                    .prop_shuffle()
                    .prop_map(move |vals| {
                        let v: Vec<f64> = vals.into_iter().map(|x| x as f64 / 7.0).collect();
                        (v[..n1].to_vec(), v[n1..].to_vec())
                    })
            })
        })
    }

    proptest! {
        #[test]
        fn exact_matches_enumeration((a, b) in distinct_pair(12)) {
            let r = mann_whitney_u(&a, &b).unwrap();
            prop_assert_eq!(r.method, TestMethod::Exact);
            prop_assert!((r.p - enumerate_p(&a, &b)).abs() <= 1e-12);
        }

        #[test]
        fn u_statistics_are_complementary(
            a in proptest::collection::vec(0u8..20, 1..25),
            b in proptest::collection::vec(0u8..20, 1..25),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let ab = mann_whitney_u(&a, &b).unwrap();
            let ba = mann_whitney_u(&b, &a).unwrap();
            prop_assert!((ab.u + ba.u - (a.len() * b.len()) as f64).abs() < 1e-9);
            prop_assert!((ab.p - ba.p).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab.p));
            prop_assert!(ab.u >= 0.0 && ab.u <= (a.len() * b.len()) as f64);
        }

        #[test]
        fn p_is_invariant_under_monotone_transform(
            a in proptest::collection::vec(0.0f64..5.0, 1..20),
            b in proptest::collection::vec(0.0f64..5.0, 1..20),
        ) {
            let raw = mann_whitney_u(&a, &b).unwrap();
            let f = |x: &f64| (x * 3.0).exp() + 2.0;
            let ta: Vec<f64> = a.iter().map(f).collect();
            let tb: Vec<f64> = b.iter().map(f).collect();
            let transformed = mann_whitney_u(&ta, &tb).unwrap();
            prop_assert_eq!(raw.u, transformed.u);
            prop_assert_eq!(raw.p, transformed.p);
        }
    }
}
