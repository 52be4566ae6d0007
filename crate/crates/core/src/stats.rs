//! Nonparametric two-sample statistics: tied ranks, the Wilcoxon rank-sum
//! (Mann-Whitney) test, and the A12 effect size.
//!
//! All routines are generic over the scalar type of the observations; the
//! p-value machinery runs in `f64` internally.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::Scalar;

/// Alternative hypothesis of a two-sample comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    TwoSided,
    /// First sample tends to be lower.
    Less,
    /// First sample tends to be higher.
    Greater,
}

/// P-value computation strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Exact when the pooled sample is small (at most 20) and tie-free,
    /// the normal approximation otherwise.
    Auto,
    Exact,
    NormalApprox,
}

/// Strategy actually used for a test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UsedMethod {
    Exact,
    NormalApprox,
}

/// Outcome of one Wilcoxon rank-sum comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult<S> {
    /// Mann-Whitney U of the first sample: pairs where it wins, ties half.
    pub u_statistic: S,
    /// Pooled-rank sum of the first sample.
    pub rank_sum: S,
    pub p_value: S,
    pub alternative: Alternative,
    pub method: UsedMethod,
    pub n1: usize,
    pub n2: usize,
}

/// Effect magnitude bands for the A12 statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectMagnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl std::fmt::Display for EffectMagnitude {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EffectMagnitude::Negligible => "negligible",
            EffectMagnitude::Small => "small",
            EffectMagnitude::Medium => "medium",
            EffectMagnitude::Large => "large",
        };
        f.write_str(s)
    }
}

/// An A12 value together with its magnitude band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectSize<S> {
    pub a12: S,
    pub magnitude: EffectMagnitude,
}

impl<S: Scalar> EffectSize<S> {
    pub fn from_samples(a: &[S], b: &[S]) -> Result<Self> {
        let value = a12(a, b)?;
        Ok(EffectSize {
            a12: value,
            magnitude: classify_effect(value)?,
        })
    }
}

/// Largest pooled size the exact method accepts; beyond this the split
/// counts overflow 128-bit integers.
const EXACT_LIMIT: usize = 128;

/// Pooled size up to which `Method::Auto` selects the exact test.
const AUTO_EXACT_LIMIT: usize = 20;

fn ensure_finite<S: Scalar>(values: &[S]) -> Result<()> {
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite(i));
        }
    }
    Ok(())
}

/// Midranks of `values`: tied observations receive the mean of the ranks
/// they span, so the ranks always sum to n(n+1)/2.
pub fn ranks_with_ties<S: Scalar>(values: &[S]) -> Result<Vec<S>> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    ensure_finite(values)?;

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());

    let mut ranks = vec![S::zero(); values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Sorted positions start..end hold 1-based ranks start+1..=end.
        let midrank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = S::from_f64(midrank).unwrap();
        }
        start = end;
    }
    Ok(ranks)
}

/// Pooled midranks split back into the two samples.
fn pooled_ranks<S: Scalar>(a: &[S], b: &[S]) -> Result<(Vec<f64>, Vec<f64>, Vec<usize>)> {
    let mut pooled: Vec<S> = Vec::with_capacity(a.len() + b.len());
    pooled.extend_from_slice(a);
    pooled.extend_from_slice(b);
    let ranks = ranks_with_ties(&pooled)?;
    let ranks: Vec<f64> = ranks.iter().map(|r| r.to_f64().unwrap()).collect();

    // Tie-group sizes, for the variance correction.
    let mut sorted: Vec<S> = pooled.clone();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut tie_sizes = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && sorted[end] == sorted[start] {
            end += 1;
        }
        tie_sizes.push(end - start);
        start = end;
    }

    let (ra, rb) = ranks.split_at(a.len());
    Ok((ra.to_vec(), rb.to_vec(), tie_sizes))
}

/// Number of k-subsets of {1..n} per rank-sum value, indexed by sum.
fn rank_sum_distribution(n: usize, k: usize) -> Vec<u128> {
    let max_sum = n * (n + 1) / 2;
    let mut dp = vec![vec![0u128; max_sum + 1]; k + 1];
    dp[0][0] = 1;
    for item in 1..=n {
        for chosen in (1..=k.min(item)).rev() {
            for sum in (item..=max_sum).rev() {
                let add = dp[chosen - 1][sum - item];
                if add != 0 {
                    dp[chosen][sum] += add;
                }
            }
        }
    }
    dp.pop().unwrap()
}

fn ln_choose(n: usize, k: usize) -> f64 {
    (1..=k)
        .map(|i| (((n - k + i) as f64) / (i as f64)).ln())
        .sum()
}

/// Smallest p-value the exact null distribution can produce; used to keep
/// approximate p-values away from zero.
fn min_attainable_p(n1: usize, n2: usize, alternative: Alternative) -> f64 {
    let extreme_splits = match alternative {
        Alternative::TwoSided => 2.0f64,
        _ => 1.0,
    };
    let p = (extreme_splits.ln() - ln_choose(n1 + n2, n1)).exp();
    if p > 0.0 {
        p
    } else {
        f64::MIN_POSITIVE
    }
}

/// Unpaired Wilcoxon rank-sum (Mann-Whitney) test.
///
/// `Alternative::Greater` rejects when the first sample tends to exceed the
/// second. The exact p-value is the proportion of all C(n1+n2, n1) rank
/// splits whose statistic is at least as extreme as the observed one; the
/// normal approximation applies the tie-corrected variance and a continuity
/// correction of 0.5. P-values are floored at the smallest exactly
/// attainable value, so they are never zero.
pub fn wilcoxon_rank_sum<S: Scalar>(
    a: &[S],
    b: &[S],
    alternative: Alternative,
    method: Method,
) -> Result<TestResult<S>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    ensure_finite(a)?;
    ensure_finite(b)?;

    let n1 = a.len();
    let n2 = b.len();
    let n = n1 + n2;
    let (ranks_a, _, tie_sizes) = pooled_ranks(a, b)?;
    let has_ties = tie_sizes.iter().any(|&t| t > 1);

    let rank_sum: f64 = ranks_a.iter().sum();
    let u1 = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;

    let used = match method {
        Method::Exact => {
            if has_ties {
                return Err(Error::ExactRequiresNoTies);
            }
            if n > EXACT_LIMIT {
                return Err(Error::ExactTooLarge(n));
            }
            UsedMethod::Exact
        }
        Method::NormalApprox => UsedMethod::NormalApprox,
        Method::Auto => {
            if !has_ties && n <= AUTO_EXACT_LIMIT {
                UsedMethod::Exact
            } else {
                UsedMethod::NormalApprox
            }
        }
    };

    let p = match used {
        UsedMethod::Exact => {
            // Tie-free, so the observed rank sum and U are integers.
            let u_obs = u1.round() as u64;
            let offset = (n1 * (n1 + 1) / 2) as u64;
            let distribution = rank_sum_distribution(n, n1);
            let full = (n1 * n2) as u64;
            let mut tally: u128 = 0;
            let mut total: u128 = 0;
            for (sum, &ways) in distribution.iter().enumerate() {
                if ways == 0 {
                    continue;
                }
                total += ways;
                let u = sum as u64 - offset;
                let extreme = match alternative {
                    Alternative::Greater => u >= u_obs,
                    Alternative::Less => u <= u_obs,
                    // Distance from the centre n1*n2/2, in doubled units to
                    // stay in integers.
                    Alternative::TwoSided => (2 * u).abs_diff(full) >= (2 * u_obs).abs_diff(full),
                };
                if extreme {
                    tally += ways;
                }
            }
            tally as f64 / total as f64
        }
        UsedMethod::NormalApprox => {
            let nf = n as f64;
            let n1f = n1 as f64;
            let n2f = n2 as f64;
            let mean = n1f * n2f / 2.0;
            let tie_term: f64 = tie_sizes
                .iter()
                .map(|&t| {
                    let t = t as f64;
                    t * t * t - t
                })
                .sum();
            let variance = n1f * n2f / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
            if variance <= 0.0 {
                // Every pooled value identical: no evidence either way.
                1.0
            } else {
                let sd = variance.sqrt();
                let normal = Normal::standard();
                let raw = match alternative {
                    Alternative::Greater => 1.0 - normal.cdf((u1 - mean - 0.5) / sd),
                    Alternative::Less => normal.cdf((u1 - mean + 0.5) / sd),
                    Alternative::TwoSided => {
                        2.0 * (1.0 - normal.cdf(((u1 - mean).abs() - 0.5) / sd))
                    }
                };
                raw.max(min_attainable_p(n1, n2, alternative)).min(1.0)
            }
        }
    };

    Ok(TestResult {
        u_statistic: S::from_f64(u1).unwrap(),
        rank_sum: S::from_f64(rank_sum).unwrap(),
        p_value: S::from_f64(p).unwrap(),
        alternative,
        method: used,
        n1,
        n2,
    })
}

/// Vargha-Delaney A12, oriented so that larger values mean the first sample
/// is stochastically lower: the probability that a random observation from
/// `a` is below one from `b`, counting ties half.
///
/// With energy readings, `a12(a, b) = 0.8` reads as "`a` consumes less than
/// `b` 80% of the time".
pub fn a12<S: Scalar>(a: &[S], b: &[S]) -> Result<S> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let (ranks_a, _, _) = pooled_ranks(a, b)?;
    let n1 = a.len() as f64;
    let n2 = b.len() as f64;
    let rank_sum: f64 = ranks_a.iter().sum();
    // U1 counts pairs where a exceeds b (ties half); invert for "a lower".
    let u1 = rank_sum - n1 * (n1 + 1.0) / 2.0;
    let wins_for_lower = n1 * n2 - u1;
    Ok(S::from_f64(wins_for_lower / (n1 * n2)).unwrap())
}

/// Magnitude band of an A12 value, symmetric around 0.5.
///
/// With d = max(a12, 1 - a12): negligible iff d = 0.5, small iff d <= 0.56,
/// medium iff d <= 0.71, large beyond that.
pub fn classify_effect<S: Scalar>(value: S) -> Result<EffectMagnitude> {
    if !(S::zero()..=S::one()).contains(&value) {
        return Err(Error::EffectSizeOutOfRange(
            value.to_f64().unwrap_or(f64::NAN),
        ));
    }
    let d = value.max(S::one() - value);
    let small = S::from_f64(0.56).unwrap();
    let medium = S::from_f64(0.71).unwrap();
    Ok(if d == S::from_f64(0.5).unwrap() {
        EffectMagnitude::Negligible
    } else if d <= small {
        EffectMagnitude::Small
    } else if d <= medium {
        EffectMagnitude::Medium
    } else {
        EffectMagnitude::Large
    })
}
