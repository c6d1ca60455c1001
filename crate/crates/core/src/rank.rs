//! Rank statistics: average ranks, Pearson, Spearman, Kendall tau-b and the
//! Canberra distance between ranked lists with a location parameter.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

fn cmp_f64(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Indices sorting `values` ascending; ties keep index order.
pub fn argsort(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| cmp_f64(values[i], values[j]).then(i.cmp(&j)));
    idx
}

/// 1-based ordinal ranks, ties broken by index.
pub fn ordinal_ranks(values: &[f64]) -> Vec<usize> {
    let mut ranks = vec![0; values.len()];
    for (r, i) in argsort(values).into_iter().enumerate() {
        ranks[i] = r + 1;
    }
    ranks
}

/// 1-based ranks with tied values sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let order = argsort(values);
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation; `None` for fewer than two points or zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "pearson: length mismatch");
    let n = a.len();
    if n < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if !(saa > 0.0 && sbb > 0.0) {
        return None;
    }
    Some((sab / libm::sqrt(saa * sbb)).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson on average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Pair counts from which tau-b is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct TauCounts {
    pairs: u64,
    ties_a: u64,
    ties_b: u64,
    /// concordant minus discordant
    score: i64,
}

impl TauCounts {
    fn tau_b(self) -> Option<f64> {
        let da = self.pairs - self.ties_a;
        let db = self.pairs - self.ties_b;
        if da == 0 || db == 0 {
            return None;
        }
        Some(self.score as f64 / libm::sqrt(da as f64 * db as f64))
    }
}

fn tied_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    if !sorted.is_empty() {
        total += run * (run - 1) / 2;
    }
    total
}

/// Kendall tau-b by direct enumeration of all pairs, O(n²).
pub fn kendall_tau_b_naive(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "kendall: length mismatch");
    let n = a.len();
    let mut c = TauCounts {
        pairs: (n as u64) * (n as u64).saturating_sub(1) / 2,
        ties_a: 0,
        ties_b: 0,
        score: 0,
    };
    for i in 0..n {
        for j in i + 1..n {
            let sa = cmp_f64(a[i], a[j]);
            let sb = cmp_f64(b[i], b[j]);
            if sa == Ordering::Equal {
                c.ties_a += 1;
            }
            if sb == Ordering::Equal {
                c.ties_b += 1;
            }
            if sa != Ordering::Equal && sb != Ordering::Equal {
                c.score += if sa == sb { 1 } else { -1 };
            }
        }
    }
    c.tau_b()
}

/// Kendall tau-b by Knight's merge-sort algorithm, O(n log n).
pub fn kendall_tau_b(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "kendall: length mismatch");
    let n = a.len();
    let pairs = (n as u64) * (n as u64).saturating_sub(1) / 2;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| cmp_f64(a[i], a[j]).then(cmp_f64(b[i], b[j])));

    // pairs tied in a, and tied in both
    let mut ties_a = 0u64;
    let mut ties_joint = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && a[idx[j]] == a[idx[i]] {
            j += 1;
        }
        let run = (j - i) as u64;
        ties_a += run * (run - 1) / 2;
        let mut k = i;
        while k < j {
            let mut m = k + 1;
            while m < j && b[idx[m]] == b[idx[k]] {
                m += 1;
            }
            let r = (m - k) as u64;
            ties_joint += r * (r - 1) / 2;
            k = m;
        }
        i = j;
    }

    let mut seq: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    let mut buf = seq.clone();
    let swaps = merge_count(&mut seq, &mut buf);
    let ties_b = tied_pairs(&seq);

    let score = pairs as i64 - ties_a as i64 - ties_b as i64 + ties_joint as i64 - 2 * swaps as i64;
    TauCounts {
        pairs,
        ties_a,
        ties_b,
        score,
    }
    .tau_b()
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..n].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Canberra distance between two rankings of the same items with location
/// parameter `l`: `Σ |min(r₁,l+1) − min(r₂,l+1)| / (min(r₁,l+1) + min(r₂,l+1))`
/// over the given items (1-based ranks), divided by `l`.
pub fn canberra_location(r1: &[usize], r2: &[usize], l: usize) -> f64 {
    assert_eq!(r1.len(), r2.len(), "canberra: length mismatch");
    assert!(l > 0, "canberra: location parameter must be positive");
    let cap = (l + 1) as f64;
    let sum: f64 = r1
        .iter()
        .zip(r2)
        .map(|(&x, &y)| {
            let (x, y) = ((x as f64).min(cap), (y as f64).min(cap));
            (x - y).abs() / (x + y)
        })
        .sum();
    sum / l as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
        assert_eq!(ordinal_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2, 4, 3, 1]);
    }

    #[test]
    fn pearson_basics() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&a, &[3.0, 6.0, 9.0, 12.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&a, &[1.0; 4]), None);
        assert_eq!(pearson(&[1.0], &[2.0]), None);
    }

    #[test]
    fn kendall_reversal_and_undefined() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(kendall_tau_b(&a, &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(kendall_tau_b_naive(&a, &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(kendall_tau_b(&a, &[5.0, 5.0, 5.0]), None);
        assert_eq!(kendall_tau_b_naive(&a, &[5.0, 5.0, 5.0]), None);
    }

    #[test]
    fn kendall_known_value_with_ties() {
        // scipy.stats.kendalltau([1,2,2,3],[1,3,2,2]) = 0.4 (tau-b)
        let t = kendall_tau_b(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 2.0]).unwrap();
        assert!((t - 0.4).abs() < 1e-15, "{t}");
    }

    #[test]
    fn kendall_merge_matches_naive_on_tied_permutations() {
        let mut rng = seed::rng(2024);
        for _ in 0..1000 {
            let n = rng.gen_range(0..40);
            let k = rng.gen_range(1..8);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0..k) as f64).collect();
            let mut b: Vec<f64> = (0..n).map(|i| (i / 2) as f64).collect();
            b.shuffle(&mut rng);
            let fast = kendall_tau_b(&a, &b).map(f64::to_bits);
            let slow = kendall_tau_b_naive(&a, &b).map(f64::to_bits);
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn canberra_identity_and_reversal() {
        let r: Vec<usize> = (1..=5).collect();
        assert_eq!(canberra_location(&r, &r, 5), 0.0);
        let rev: Vec<usize> = (1..=3).rev().collect();
        // |1-3|/4 + 0 + |3-1|/4 = 1, divided by l = 3
        assert!((canberra_location(&[1, 2, 3], &rev, 3) - 1.0 / 3.0).abs() < 1e-15);
        // ranks beyond l are capped at l+1
        assert_eq!(canberra_location(&[1], &[500], 2), canberra_location(&[1], &[3], 2));
    }

    proptest! {
        #[test]
        fn correlations_are_scale_invariant(
            xs in proptest::collection::vec(0.0f64..10.0, 3..30),
            alpha in 0.01f64..100.0,
            seed in 0u64..1000,
        ) {
            let mut rng = seed::rng(seed);
            let ys: Vec<f64> = xs.iter().map(|x| x + rng.gen_range(-1.0..1.0)).collect();
            let scaled: Vec<f64> = ys.iter().map(|y| y * alpha).collect();
            if let (Some(p), Some(q)) = (pearson(&xs, &ys), pearson(&xs, &scaled)) {
                prop_assert!((p - q).abs() < 1e-12);
            }
            prop_assert_eq!(spearman(&xs, &ys), spearman(&xs, &scaled));
            prop_assert_eq!(kendall_tau_b(&xs, &ys), kendall_tau_b(&xs, &scaled));
        }

        #[test]
        fn rank_correlations_are_bounded(
            xs in proptest::collection::vec(-5i32..5, 2..25),
            ys in proptest::collection::vec(-5i32..5, 2..25),
        ) {
            let n = xs.len().min(ys.len());
            let a: Vec<f64> = xs[..n].iter().map(|&v| v as f64).collect();
            let b: Vec<f64> = ys[..n].iter().map(|&v| v as f64).collect();
            for v in [pearson(&a, &b), spearman(&a, &b), kendall_tau_b(&a, &b)].into_iter().flatten() {
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn average_ranks_sum_is_triangular(xs in proptest::collection::vec(0u8..6, 0..40)) {
            let v: Vec<f64> = xs.iter().map(|&x| x as f64).collect();
            let n = v.len() as f64;
            prop_assert_eq!(average_ranks(&v).iter().sum::<f64>(), n * (n + 1.0) / 2.0);
        }
    }
}
