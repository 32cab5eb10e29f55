//! Brute-force reference answers. These never touch the block store and
//! define the semantics every indexed structure is tested against.

use std::collections::BTreeSet;

use crate::point::Point;

/// Points of `[x1, x2] x (-inf, y]`, sorted.
pub fn brute_threesided(points: &[Point], x1: u64, x2: u64, y: u64) -> Vec<Point> {
    let mut out: Vec<Point> = points
        .iter()
        .copied()
        .filter(|p| p.in_range(x1, x2, y))
        .collect();
    out.sort_unstable();
    out
}

/// `C_a ∪ ... ∪ C_b` with 1-based, inclusive indices; empty when `a > b`.
pub fn brute_colored(sets: &[Vec<u64>], a: usize, b: usize) -> BTreeSet<u64> {
    if a > b || a == 0 {
        return BTreeSet::new();
    }
    sets[a - 1..b.min(sets.len())]
        .iter()
        .flatten()
        .copied()
        .collect()
}

/// Flat points `(i', pred, color)` of the colored-range reduction, computed
/// by direct enumeration: `i'` counts occurrences in set order, `pred` is
/// the `i'` of the previous occurrence of the same color or 0.
pub fn brute_reduce(sets: &[Vec<u64>]) -> Vec<(u64, u64, u64)> {
    let flat: Vec<u64> = sets.iter().flatten().copied().collect();
    (0..flat.len())
        .map(|i| {
            let pred = (0..i)
                .rev()
                .find(|&j| flat[j] == flat[i])
                .map_or(0, |j| j as u64 + 1);
            (i as u64 + 1, pred, flat[i])
        })
        .collect()
}

/// Union of the color sets of all strings having `p` as a prefix.
pub fn brute_prefix(corpus: &[(Vec<u8>, Vec<u64>)], p: &[u8]) -> BTreeSet<u64> {
    corpus
        .iter()
        .filter(|(s, _)| s.starts_with(p))
        .flat_map(|(_, c)| c.iter().copied())
        .collect()
}

/// The `k` largest colors of [`brute_prefix`], ascending.
pub fn brute_topk(corpus: &[(Vec<u8>, Vec<u64>)], p: &[u8], k: usize) -> Vec<u64> {
    let all: Vec<u64> = brute_prefix(corpus, p).into_iter().collect();
    all[all.len().saturating_sub(k)..].to_vec()
}
