//! Method × K robustness grid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{cluster, label_clusters, silhouette, ClusterModel, Method, Thresholds, DEFAULT_RESTARTS};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::fpca::LatentBasis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub ks: Vec<usize>,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub restarts: usize,
    pub thresholds: Thresholds,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            ks: (2..=6).collect(),
            methods: Method::ALL.to_vec(),
            seed: 0,
            restarts: DEFAULT_RESTARTS,
            thresholds: Thresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub method: Method,
    pub k: usize,
    pub within_ss: f64,
    pub silhouette: Option<f64>,
    /// Items per cluster label (empty when no basis was supplied).
    pub label_counts: BTreeMap<String, usize>,
    pub model: ClusterModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAgreement {
    pub k: usize,
    pub a: Method,
    pub b: Method,
    pub ari: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// Keyed `"method:K"`.
    pub cells: BTreeMap<String, SweepCell>,
    pub agreement: Vec<MethodAgreement>,
}

pub fn cell_key(method: Method, k: usize) -> String {
    format!("{method}:{k}")
}

impl SweepReport {
    pub fn cell(&self, method: Method, k: usize) -> Option<&SweepCell> {
        self.cells.get(&cell_key(method, k))
    }
}

/// Cluster `points` for every (method, K) in `opts`, with shared seed.
///
/// `scale` is recorded on each model (points already divided by it) so
/// labels are computed in raw score space. Without a basis no labels are
/// assigned.
pub fn robustness_sweep(
    points: &[Vec<f64>],
    scale: Option<&[f64]>,
    basis: Option<&LatentBasis>,
    opts: &SweepOptions,
    exec: Execution,
) -> Result<SweepReport> {
    if opts.ks.is_empty() || opts.methods.is_empty() {
        return Err(Error::Config("sweep needs at least one K and one method".into()));
    }
    let grid: Vec<(Method, usize)> = opts
        .methods
        .iter()
        .flat_map(|&m| opts.ks.iter().map(move |&k| (m, k)))
        .collect();
    let cells: Vec<Result<SweepCell>> = map_indexed(exec, grid.len(), |c| {
        let (method, k) = grid[c];
        let mut model = cluster(points, method, k, opts.seed, opts.restarts, exec)?;
        model.scale = scale.map(<[f64]>::to_vec);
        let mut label_counts = BTreeMap::new();
        if let Some(basis) = basis {
            model.labels = label_clusters(&model, basis, &opts.thresholds)?;
            for &a in &model.assignments {
                *label_counts.entry(model.labels[a].to_string()).or_insert(0) += 1;
            }
        }
        Ok(SweepCell {
            method,
            k,
            within_ss: model.within_ss,
            silhouette: silhouette(points, &model.assignments, k, exec),
            label_counts,
            model,
        })
    });
    let cells: Vec<SweepCell> = cells.into_iter().collect::<Result<_>>()?;

    let mut agreement = Vec::new();
    for &k in &opts.ks {
        for (i, &a) in opts.methods.iter().enumerate() {
            for &b in &opts.methods[i + 1..] {
                let ca = cells.iter().find(|c| c.method == a && c.k == k).unwrap();
                let cb = cells.iter().find(|c| c.method == b && c.k == k).unwrap();
                agreement.push(MethodAgreement {
                    k,
                    a,
                    b,
                    ari: super::adjusted_rand_index(&ca.model.assignments, &cb.model.assignments),
                });
            }
        }
    }
    Ok(SweepReport {
        cells: cells.into_iter().map(|c| (cell_key(c.method, c.k), c)).collect(),
        agreement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centres = [[0.0, 0.0], [8.0, 0.0], [0.0, 8.0], [8.0, 8.0]];
        (0..120)
            .map(|i| {
                let c = centres[i % 4];
                vec![c[0] + rng.random_range(-1.0..1.0), c[1] + rng.random_range(-1.0..1.0)]
            })
            .collect()
    }

    #[test]
    fn single_cell_equals_direct_call() {
        let pts = blobs(1);
        let opts = SweepOptions {
            ks: vec![2],
            methods: vec![Method::KMeans],
            seed: 7,
            ..Default::default()
        };
        let report = robustness_sweep(&pts, None, None, &opts, Execution::Serial).unwrap();
        assert_eq!(report.cells.len(), 1);
        let direct = cluster(&pts, Method::KMeans, 2, 7, DEFAULT_RESTARTS, Execution::Serial).unwrap();
        assert_eq!(report.cell(Method::KMeans, 2).unwrap().model, direct);
        assert!(report.agreement.is_empty());
    }

    #[test]
    fn full_grid_monotone_and_agreeing() {
        let pts = blobs(2);
        let report = robustness_sweep(&pts, None, None, &SweepOptions::default(), Execution::Parallel).unwrap();
        assert_eq!(report.cells.len(), 15);
        assert!(report.cells.contains_key("ward:6"));
        let wss: Vec<f64> = (2..=6)
            .map(|k| report.cell(Method::KMeans, k).unwrap().within_ss)
            .collect();
        for w in wss.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        for a in report.agreement.iter().filter(|a| a.k == 4) {
            assert!(a.ari > 0.99, "{a:?}");
        }
        let serial = robustness_sweep(&pts, None, None, &SweepOptions::default(), Execution::Serial).unwrap();
        assert_eq!(serial, report);
    }
}
