//! Independent oracles shared by the integration suites. Everything here
//! computes by direct enumeration or resampling, deliberately avoiding the
//! code paths under test.

use r3val::stats::Alternative;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// A12 by brute force over all n1*n2 pairs: wins for "a lower", ties half.
pub fn a12_pairwise(a: &[f64], b: &[f64]) -> f64 {
    let mut wins = 0u64; // a strictly lower, in half-units
    for &x in a {
        for &y in b {
            if x < y {
                wins += 2;
            } else if x == y {
                wins += 1;
            }
        }
    }
    (wins as f64 / 2.0) / (a.len() * b.len()) as f64
}

fn u_of_rank_subset(subset: &[usize], n1: usize) -> u64 {
    let rank_sum: usize = subset.iter().map(|&r| r + 1).sum();
    (rank_sum - n1 * (n1 + 1) / 2) as u64
}

fn is_extreme(u: u64, u_obs: u64, full: u64, alternative: Alternative) -> bool {
    match alternative {
        Alternative::Greater => u >= u_obs,
        Alternative::Less => u <= u_obs,
        Alternative::TwoSided => (2 * u).abs_diff(full) >= (2 * u_obs).abs_diff(full),
    }
}

/// Exact rank-sum p-value by enumerating every C(n1+n2, n1) assignment of
/// pooled ranks to the first sample. Tie-free data only.
pub fn exact_wilcoxon_enumeration(a: &[f64], b: &[f64], alternative: Alternative) -> f64 {
    let n1 = a.len();
    let n = n1 + b.len();
    let full = (n1 * b.len()) as u64;

    // Observed U from the pooled ranking.
    let mut pooled: Vec<(f64, bool)> = a
        .iter()
        .map(|&x| (x, true))
        .chain(b.iter().map(|&y| (y, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let rank_sum: usize = pooled
        .iter()
        .enumerate()
        .filter(|(_, (_, from_a))| *from_a)
        .map(|(i, _)| i + 1)
        .sum();
    let u_obs = (rank_sum - n1 * (n1 + 1) / 2) as u64;

    let mut extreme = 0u64;
    let mut total = 0u64;
    let mut subset: Vec<usize> = Vec::with_capacity(n1);
    enumerate_subsets(n, n1, 0, &mut subset, &mut |chosen| {
        total += 1;
        if is_extreme(u_of_rank_subset(chosen, n1), u_obs, full, alternative) {
            extreme += 1;
        }
    });
    extreme as f64 / total as f64
}

/// Visits every k-subset of {0..n-1} in lexicographic order.
pub fn enumerate_subsets(
    n: usize,
    k: usize,
    start: usize,
    current: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    if current.len() == k {
        visit(current);
        return;
    }
    let remaining = k - current.len();
    for item in start..=(n - remaining) {
        current.push(item);
        enumerate_subsets(n, k, item + 1, current, visit);
        current.pop();
    }
}

/// Monte Carlo permutation estimate of the rank-sum p-value, using the same
/// "at least as extreme" tail definition as the exact enumeration.
#[allow(dead_code)] // each integration target compiles its own copy
pub fn monte_carlo_wilcoxon(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
    resamples: usize,
    seed: u64,
) -> f64 {
    let n1 = a.len();
    let full = (n1 * b.len()) as u64;
    let mut pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();

    let u_statistic = |values: &[f64], split: usize| -> u64 {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
        let rank_sum: usize = order
            .iter()
            .enumerate()
            .filter(|(_, &original)| original < split)
            .map(|(rank, _)| rank + 1)
            .sum();
        (rank_sum - split * (split + 1) / 2) as u64
    };

    let u_obs = u_statistic(&pooled, n1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme = 0usize;
    for _ in 0..resamples {
        pooled.shuffle(&mut rng);
        if is_extreme(u_statistic(&pooled, n1), u_obs, full, alternative) {
            extreme += 1;
        }
    }
    extreme as f64 / resamples as f64
}
