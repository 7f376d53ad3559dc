//! Agglomerative clustering with Ward linkage.
//!
//! Dissimilarities start as squared Euclidean distances and are updated with
//! the Lance–Williams recurrence
//! `d(k, i+j) = ((n_i+n_k) d(k,i) + (n_j+n_k) d(k,j) - n_k d(i,j)) / (n_i+n_j+n_k)`,
//! so a merge height equals twice the increase in within-cluster sum of squares.

use serde::{Deserialize, Serialize};

use super::{means, sq_dist, validate, within_ss, ClusterModel, Method};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Surviving cluster (the smaller representative index).
    pub a: usize,
    /// Absorbed cluster.
    pub b: usize,
    pub height: f64,
    /// Size of the merged cluster.
    pub size: usize,
}

/// Ward clustering cut at `k` clusters.
///
/// Clusters are identified by their smallest member index. Each step merges
/// the closest active pair; ties go to the lexicographically smallest pair.
/// Output clusters are numbered by their smallest member.
pub fn ward(points: &[Vec<f64>], k: usize) -> Result<ClusterModel> {
    validate(points, k)?;
    let n = points.len();
    // Upper triangle only: d[i][j - i - 1] for j > i.
    let mut d: Vec<Vec<f64>> = (0..n)
        .map(|i| (i + 1..n).map(|j| sq_dist(&points[i], &points[j])).collect())
        .collect();
    let get = |d: &Vec<Vec<f64>>, i: usize, j: usize| {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        d[a][b - a - 1]
    };
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    // nn[i]: closest active j > i (smallest j on ties).
    let mut nn = vec![usize::MAX; n];
    let mut nnd = vec![f64::INFINITY; n];
    let recompute = |d: &Vec<Vec<f64>>, active: &[bool], i: usize| {
        let mut best = (usize::MAX, f64::INFINITY);
        for j in i + 1..n {
            if active[j] {
                let v = d[i][j - i - 1];
                if v < best.1 {
                    best = (j, v);
                }
            }
        }
        best
    };
    for i in 0..n {
        (nn[i], nnd[i]) = recompute(&d, &active, i);
    }

    let mut merges = Vec::with_capacity(n - k);
    for _ in 0..n - k {
        let i = (0..n)
            .filter(|&i| active[i] && nn[i] != usize::MAX)
            .fold(
                usize::MAX,
                |b, i| if b == usize::MAX || nnd[i] < nnd[b] { i } else { b },
            );
        let j = nn[i];
        let dij = nnd[i];
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for m in 0..n {
            if !active[m] || m == i || m == j {
                continue;
            }
            let nm = size[m] as f64;
            let v = ((ni + nm) * get(&d, m, i) + (nj + nm) * get(&d, m, j) - nm * dij) / (ni + nj + nm);
            let (a, b) = if m < i { (m, i) } else { (i, m) };
            d[a][b - a - 1] = v;
        }
        active[j] = false;
        size[i] += size[j];
        merges.push(Merge {
            a: i,
            b: j,
            height: dij,
            size: size[i],
        });
        (nn[i], nnd[i]) = recompute(&d, &active, i);
        for m in 0..n {
            if !active[m] || m == i {
                continue;
            }
            if nn[m] == i || nn[m] == j {
                (nn[m], nnd[m]) = recompute(&d, &active, m);
            } else if m < i {
                let v = d[m][i - m - 1];
                if v < nnd[m] || (v == nnd[m] && i < nn[m]) {
                    nn[m] = i;
                    nnd[m] = v;
                }
            }
        }
    }

    // Union-find over the merge list to map points to surviving representatives.
    let mut parent: Vec<usize> = (0..n).collect();
    for m in &merges {
        parent[m.b] = m.a;
    }
    let root = |mut x: usize| {
        while parent[x] != x {
            x = parent[x];
        }
        x
    };
    let reps: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
    let assignments: Vec<usize> = (0..n)
        .map(|x| reps.binary_search(&root(x)).expect("root is active"))
        .collect();
    let centroids = means(points, &assignments, k);
    let wss = within_ss(points, &assignments, &centroids);
    let mut model = ClusterModel::new(Method::Ward, k, centroids, assignments, wss, 0);
    model.merges = merges;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook O(n^3) Ward: full pair scan each step over cluster member lists,
    /// heights from the closed form `2 n_a n_b / (n_a + n_b) |c_a - c_b|^2`.
    fn naive(points: &[Vec<f64>], k: usize) -> Vec<(usize, usize, f64)> {
        let mut clusters: Vec<Option<Vec<usize>>> = (0..points.len()).map(|i| Some(vec![i])).collect();
        let centroid = |m: &[usize]| {
            let d = points[0].len();
            (0..d)
                .map(|c| m.iter().map(|&i| points[i][c]).sum::<f64>() / m.len() as f64)
                .collect::<Vec<f64>>()
        };
        let mut trace = Vec::new();
        for _ in 0..points.len() - k {
            let mut best = (0, 0, f64::INFINITY);
            for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    if let (Some(x), Some(y)) = (&clusters[a], &clusters[b]) {
                        let (na, nb) = (x.len() as f64, y.len() as f64);
                        let h = 2.0 * na * nb / (na + nb) * sq_dist(&centroid(x), &centroid(y));
                        if h < best.2 - 1e-12 {
                            best = (a, b, h);
                        }
                    }
                }
            }
            let absorbed = clusters[best.1].take().unwrap();
            clusters[best.0].as_mut().unwrap().extend(absorbed);
            trace.push(best);
        }
        trace
    }

    #[test]
    fn k_equals_n_is_trivial() {
        let pts = vec![vec![0.0], vec![4.0], vec![1.0]];
        let m = ward(&pts, 3).unwrap();
        assert_eq!(m.assignments, vec![0, 1, 2]);
        assert!(m.merges.is_empty());
        assert_eq!(m.within_ss, 0.0);
    }

    #[test]
    fn close_pairs_merge_first() {
        let pts = vec![vec![0.0, 0.0], vec![20.0, 20.0], vec![0.5, 0.0], vec![20.0, 20.5]];
        let m = ward(&pts, 2).unwrap();
        assert_eq!((m.merges[0].a, m.merges[0].b), (0, 2));
        assert_eq!((m.merges[1].a, m.merges[1].b), (1, 3));
        assert_eq!(m.assignments, vec![0, 1, 0, 1]);
    }

    #[test]
    fn matches_naive_merge_trace() {
        for seed in 0..30 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vec<f64>> = (0..6)
                .map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
                .collect();
            let m = ward(&pts, 3).unwrap();
            let oracle = naive(&pts, 3);
            assert_eq!(m.merges.len(), oracle.len());
            for (got, want) in m.merges.iter().zip(&oracle) {
                assert_eq!((got.a, got.b), (want.0, want.1), "seed {seed}");
                assert!((got.height - want.2).abs() < 1e-9 * want.2.max(1.0));
            }
        }
    }

    #[test]
    fn height_is_twice_ss_increase() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![rng.random(), rng.random(), rng.random()])
            .collect();
        let m = ward(&pts, 1).unwrap();
        let total: f64 = m.merges.iter().map(|x| x.height).sum();
        assert!((0.5 * total - m.within_ss).abs() < 1e-9);
    }
}
