//! PAM (BUILD + SWAP) with squared Euclidean cost.

use rand::seq::index::sample;

use super::{sq_dist, validate, ClusterModel, Method};
use crate::error::Result;
use crate::exec::{map_indexed, Execution};
use crate::rng::substream;

/// Dense squared-distance matrix, row-major.
struct Dist {
    n: usize,
    d: Vec<f64>,
}

impl Dist {
    fn new(points: &[Vec<f64>], exec: Execution) -> Self {
        let n = points.len();
        let rows = map_indexed(exec, n, |i| {
            points.iter().map(|q| sq_dist(&points[i], q)).collect::<Vec<f64>>()
        });
        Dist {
            n,
            d: rows.into_iter().flatten().collect(),
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }
}

/// Nearest medoid slot, its distance, and the second-nearest distance.
fn nearest_two(dist: &Dist, medoids: &[usize]) -> Vec<(usize, f64, f64)> {
    (0..dist.n)
        .map(|j| {
            let mut best = (0usize, f64::INFINITY, f64::INFINITY);
            for (slot, &m) in medoids.iter().enumerate() {
                let d = dist.row(m)[j];
                if d < best.1 {
                    best = (slot, d, best.1);
                } else if d < best.2 {
                    best.2 = d;
                }
            }
            best
        })
        .collect()
}

fn build(dist: &Dist, k: usize) -> Vec<usize> {
    let n = dist.n;
    let totals: Vec<f64> = (0..n).map(|i| dist.row(i).iter().sum()).collect();
    let first = (0..n).fold(0, |b, i| if totals[i] < totals[b] { i } else { b });
    let mut medoids = vec![first];
    let mut dn = dist.row(first).to_vec();
    while medoids.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for h in 0..n {
            if medoids.contains(&h) {
                continue;
            }
            let gain: f64 = dn.iter().zip(dist.row(h)).map(|(&d, &e)| (d - e).max(0.0)).sum();
            if best.is_none_or(|b| gain > b.1) {
                best = Some((h, gain));
            }
        }
        let h = best.expect("k <= n leaves a candidate").0;
        for (d, &e) in dn.iter_mut().zip(dist.row(h)) {
            *d = d.min(e);
        }
        medoids.push(h);
    }
    medoids
}

/// SWAP phase: apply the best improving single swap until none is left.
fn swap(dist: &Dist, mut medoids: Vec<usize>) -> (Vec<usize>, f64) {
    let n = dist.n;
    let k = medoids.len();
    let mut delta = vec![0.0; k];
    loop {
        let near = nearest_two(dist, &medoids);
        let cost: f64 = near.iter().map(|x| x.1).sum();
        let mut best: Option<(usize, usize, f64)> = None;
        for h in 0..n {
            if medoids.contains(&h) {
                continue;
            }
            delta.iter_mut().for_each(|v| *v = 0.0);
            let mut shared = 0.0;
            for (&dh, &(slot, d1, d2)) in dist.row(h).iter().zip(&near) {
                // Gain if h joins while the current medoid of j stays...
                let stay = (dh - d1).min(0.0);
                shared += stay;
                // ...corrected for the slot that would be removed.
                delta[slot] += dh.min(d2) - d1 - stay;
            }
            let s = (0..k).fold(0, |b, s| if delta[s] < delta[b] { s } else { b });
            let total = shared + delta[s];
            if best.is_none_or(|b| total < b.2) {
                best = Some((s, h, total));
            }
        }
        match best {
            Some((slot, h, d)) if d < -1e-12 * cost.max(1e-300) => medoids[slot] = h,
            _ => return (medoids, cost),
        }
    }
}

/// Partitioning around medoids, best of `restarts` SWAP runs.
///
/// Restart 0 starts from the greedy BUILD medoids; restart `r > 0` starts
/// from `k` distinct points drawn with `substream(seed, r)`. The lowest cost
/// wins, ties to the lower restart.
pub fn kmedoids(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize, exec: Execution) -> Result<ClusterModel> {
    validate(points, k)?;
    let n = points.len();
    let dist = Dist::new(points, exec);
    let restarts = restarts.max(1);
    let runs = map_indexed(exec, restarts, |r| {
        let init = if r == 0 {
            build(&dist, k)
        } else {
            let mut rng = substream(seed, r as u64);
            sample(&mut rng, n, k).into_vec()
        };
        swap(&dist, init)
    });
    let (medoids, _) = runs
        .into_iter()
        .reduce(|best, run| if run.1 < best.1 { run } else { best })
        .unwrap();
    let near = nearest_two(&dist, &medoids);
    let assignments: Vec<usize> = near.iter().map(|x| x.0).collect();
    let cost = near.iter().map(|x| x.1).sum();
    let centroids = medoids.iter().map(|&m| points[m].clone()).collect();
    let mut model = ClusterModel::new(Method::KMedoids, k, centroids, assignments, cost, seed);
    model.medoids = medoids;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::DEFAULT_RESTARTS;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn k_equals_n() {
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        let m = kmedoids(&pts, 3, 0, 4, Execution::Serial).unwrap();
        assert_eq!(m.within_ss, 0.0);
        let mut med = m.medoids.clone();
        med.sort();
        assert_eq!(med, vec![0, 1, 2]);
    }

    #[test]
    fn separated_triples() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![0.0, 0.1],
            vec![9.0, 9.0],
            vec![9.1, 9.0],
            vec![9.0, 9.1],
        ];
        let m = kmedoids(&pts, 2, 0, 4, Execution::Serial).unwrap();
        let mut groups: Vec<bool> = m.medoids.iter().map(|&i| i < 3).collect();
        groups.sort();
        assert_eq!(groups, vec![false, true]);
        assert_eq!(m.assignments[0], m.assignments[2]);
        assert_ne!(m.assignments[0], m.assignments[3]);
    }

    #[test]
    fn matches_exhaustive_medoid_pairs() {
        for seed in 0..25 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vec<f64>> = (0..7)
                .map(|_| vec![rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)])
                .collect();
            let mut best = f64::INFINITY;
            for a in 0..7 {
                for b in a + 1..7 {
                    let c: f64 = pts.iter().map(|p| sq_dist(p, &pts[a]).min(sq_dist(p, &pts[b]))).sum();
                    best = best.min(c);
                }
            }
            let m = kmedoids(&pts, 2, seed, DEFAULT_RESTARTS, Execution::Serial).unwrap();
            assert!(
                (m.within_ss - best).abs() < 1e-9,
                "seed {seed}: {} vs {best}",
                m.within_ss
            );
        }
    }

    #[test]
    fn serial_equals_parallel() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random(), rng.random()]).collect();
        assert_eq!(
            kmedoids(&pts, 4, 1, 6, Execution::Serial).unwrap(),
            kmedoids(&pts, 4, 1, 6, Execution::Parallel).unwrap()
        );
    }
}
