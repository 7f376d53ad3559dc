//! k-means++ seeding plus Lloyd iterations, best of several restarts.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{means, sq_dist, validate, within_ss, ClusterModel, Method};
use crate::error::Result;
use crate::exec::{map_indexed, Execution};
use crate::rng::substream;

pub const MAX_LLOYD_ITER: usize = 300;
pub const DEFAULT_RESTARTS: usize = 10;

struct Run {
    centroids: Vec<Vec<f64>>,
    assignments: Vec<usize>,
    within_ss: f64,
    history: Vec<f64>,
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centre) in centroids.iter().enumerate() {
        let d = sq_dist(p, centre);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            // Guard against landing on a zero-weight point through rounding.
            if d2[idx] == 0.0 {
                idx = d2.iter().rposition(|&w| w > 0.0).unwrap_or(idx);
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].clone();
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], k: usize, mut centroids: Vec<Vec<f64>>) -> Run {
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut history = Vec::new();
    for _ in 0..MAX_LLOYD_ITER {
        let mut updated = means(points, &assignments, k);
        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed at the point farthest from its own centroid.
                let far = (0..points.len())
                    .map(|i| (i, sq_dist(&points[i], &updated[assignments[i]])))
                    .fold((0, -1.0), |best, x| if x.1 > best.1 { x } else { best })
                    .0;
                updated[c] = points[far].clone();
                counts[c] = 1;
                counts[assignments[far]] -= 1;
                assignments[far] = c;
            }
        }
        centroids = updated;
        history.push(within_ss(points, &assignments, &centroids));
        // On exact ties a point keeps its cluster, so re-seeded singletons survive.
        let next: Vec<usize> = points
            .iter()
            .zip(&assignments)
            .map(|(p, &a)| {
                let (c, d) = nearest(p, &centroids);
                if sq_dist(p, &centroids[a]) <= d {
                    a
                } else {
                    c
                }
            })
            .collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }
    let centroids = means(points, &assignments, k);
    let wss = within_ss(points, &assignments, &centroids);
    Run {
        centroids,
        assignments,
        within_ss: wss,
        history,
    }
}

/// Best of `restarts` k-means runs. Restart `r` draws from
/// `substream(seed, r)`; ties in within_ss go to the lower restart index.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize, exec: Execution) -> Result<ClusterModel> {
    validate(points, k)?;
    let restarts = restarts.max(1);
    let runs = map_indexed(exec, restarts, |r| {
        let mut rng = substream(seed, r as u64);
        let init = plus_plus(points, k, &mut rng);
        lloyd(points, k, init)
    });
    let best = runs
        .into_iter()
        .reduce(|best, run| if run.within_ss < best.within_ss { run } else { best })
        .unwrap();
    let mut model = ClusterModel::new(
        Method::KMeans,
        k,
        best.centroids,
        best.assignments,
        best.within_ss,
        seed,
    );
    model.history = best.history;
    Ok(model)
}
