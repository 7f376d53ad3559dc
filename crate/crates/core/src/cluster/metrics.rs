//! Partition agreement and cluster quality.

use std::collections::BTreeMap;

use super::sq_dist;
use crate::exec::{map_indexed, Execution};

fn choose2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index of two labelings of the same items.
///
/// When both partitions are trivial (expected and maximum index coincide)
/// the result is 1 for identical partitions and 0 otherwise.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let n = a.len() as f64;
    let mut table: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, f64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&v| choose2(v)).sum();
    let sa: f64 = rows.values().map(|&v| choose2(v)).sum();
    let sb: f64 = cols.values().map(|&v| choose2(v)).sum();
    let expected = if n > 1.0 { sa * sb / choose2(n) } else { 0.0 };
    let max = 0.5 * (sa + sb);
    if (max - expected).abs() < 1e-12 {
        return if table.len() == rows.len() && table.len() == cols.len() {
            1.0
        } else {
            0.0
        };
    }
    (index - expected) / (max - expected)
}

/// Mean silhouette width with Euclidean distance; `None` unless
/// `2 <= k < n`. Points in singleton clusters score 0.
pub fn silhouette(points: &[Vec<f64>], assignments: &[usize], k: usize, exec: Execution) -> Option<f64> {
    let n = points.len();
    if k < 2 || n <= k {
        return None;
    }
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    let widths = map_indexed(exec, n, |i| {
        let own = assignments[i];
        if sizes[own] <= 1 {
            return 0.0;
        }
        let mut sums = vec![0.0; k];
        for (j, p) in points.iter().enumerate() {
            if j != i {
                sums[assignments[j]] += sq_dist(&points[i], p).sqrt();
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if !b.is_finite() {
            return 0.0;
        }
        let m = a.max(b);
        if m > 0.0 {
            (b - a) / m
        } else {
            0.0
        }
    });
    Some(widths.iter().sum::<f64>() / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ari_known_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        // Classic example: 0.24242...
        let a = [0, 0, 0, 1, 1, 1];
        let b = [0, 0, 1, 1, 2, 2];
        assert!((adjusted_rand_index(&a, &b) - 0.242_424_242_424_242_4).abs() < 1e-12);
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[0, 0, 0]), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 1, 2], &[0, 1, 2]), 1.0);
    }

    #[test]
    fn silhouette_separated() {
        let pts = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.1]];
        let s = silhouette(&pts, &[0, 0, 1, 1], 2, Execution::Serial).unwrap();
        assert!(s > 0.98);
        assert!(silhouette(&pts, &[0, 0, 0, 0], 1, Execution::Serial).is_none());
        // Hand value for point 0: a = 0.1, b = (10 + 10.1)/2.
        let s0 = (10.05 - 0.1) / 10.05;
        let s1 = (9.95 - 0.1) / 9.95;
        assert!((s - (s0 + s1) / 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn ari_permutation_invariant(labels in prop::collection::vec(0usize..4, 2..40), other in prop::collection::vec(0usize..3, 40)) {
            let b = &other[..labels.len()];
            let perm = [2usize, 0, 3, 1];
            let relabeled: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
            let x = adjusted_rand_index(&labels, b);
            prop_assert!((x - adjusted_rand_index(&relabeled, b)).abs() < 1e-12);
            prop_assert!((x - adjusted_rand_index(b, &labels)).abs() < 1e-12);
            prop_assert_eq!(adjusted_rand_index(&labels, &relabeled), 1.0);
            prop_assert!(x <= 1.0 + 1e-12);
        }
    }
}
