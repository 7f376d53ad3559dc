//! Re-clustering under alternative citation-count thresholds.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::model::ModelBody;
use super::run::{cluster_points, stage_fit, stage_fpca};
use crate::cluster::{adjusted_rand_index, cell_key, cluster, label_clusters, Method, ShapeLabel};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fpca::LatentBasis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityOptions {
    /// Minimum total counts; the first entry is the reference run.
    pub thresholds: Vec<u64>,
    pub ks: Vec<usize>,
    pub methods: Vec<Method>,
    /// Re-estimate the basis and scores on each filtered corpus instead of
    /// reusing the full-corpus scores.
    pub refit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCell {
    pub method: Method,
    pub k: usize,
    pub assignments: Vec<usize>,
    pub labels: Vec<ShapeLabel>,
    pub sizes: Vec<usize>,
    /// `exp(mu + sum_k c_k phi_k)` per centroid, on the grid.
    pub centroid_curves: Vec<Vec<f64>>,
    /// Items shared with the reference run.
    pub common_items: usize,
    /// Adjusted Rand index against the reference run on the shared items.
    pub ari_vs_reference: f64,
    /// Share of the reference run's evergreen items that are evergreen
    /// here too; `None` when the reference has no evergreen items in common.
    pub evergreen_persistence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRun {
    pub threshold: u64,
    /// Clustered items, aligned with every cell's `assignments`.
    pub ids: Vec<String>,
    /// Keyed `"method:K"`.
    pub cells: BTreeMap<String, SensitivityCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub options: SensitivityOptions,
    pub runs: Vec<ThresholdRun>,
}

impl SensitivityReport {
    pub fn cell(&self, threshold: u64, method: Method, k: usize) -> Option<&SensitivityCell> {
        self.runs
            .iter()
            .find(|r| r.threshold == threshold)
            .and_then(|r| r.cells.get(&cell_key(method, k)))
    }
}

fn curves(basis: &LatentBasis, centroids: &[Vec<f64>]) -> Vec<Vec<f64>> {
    centroids
        .iter()
        .map(|c| basis.eta(c).into_iter().map(f64::exp).collect())
        .collect()
}

/// Cluster every threshold subset of `body` for each (method, K).
///
/// `body` needs the fpca and fit stages. Without `refit` the subsets reuse
/// the stored scores, so threshold 0 reproduces the primary clustering.
pub fn sensitivity(body: &ModelBody, opts: &SensitivityOptions, exec: Execution) -> Result<SensitivityReport> {
    if opts.thresholds.is_empty() || opts.ks.is_empty() || opts.methods.is_empty() {
        return Err(Error::Config(
            "sensitivity needs thresholds, K values and methods".into(),
        ));
    }
    let s = &body.settings;
    let mut runs = Vec::with_capacity(opts.thresholds.len());
    for &threshold in &opts.thresholds {
        let refitted;
        let source = if opts.refit {
            let keep: Vec<usize> = (0..body.corpus.len())
                .filter(|&i| body.corpus.items()[i].total() >= threshold)
                .collect();
            let mut sub = ModelBody::new(s.clone(), body.corpus.select(&keep), Vec::new());
            stage_fpca(&mut sub)?;
            stage_fit(&mut sub, exec)?;
            refitted = sub;
            &refitted
        } else {
            body
        };
        let basis = source.basis()?;
        let totals: HashMap<&str, u64> = source
            .corpus
            .items()
            .iter()
            .map(|it| (it.id.as_str(), it.total()))
            .collect();
        let fits: Vec<_> = source
            .fit()?
            .fits
            .iter()
            .filter(|f| totals[f.id.as_str()] >= threshold)
            .collect();
        let ids: Vec<String> = fits.iter().map(|f| f.id.clone()).collect();
        let scores: Vec<Vec<f64>> = fits.iter().map(|f| f.scores.clone()).collect();
        let (points, scale) = cluster_points(&scores, basis, s.standardize)?;

        let mut cells = BTreeMap::new();
        for &method in &opts.methods {
            for &k in &opts.ks {
                let mut model = cluster(&points, method, k, s.seed, s.restarts, exec)?;
                model.scale = scale.clone();
                let labels = label_clusters(&model, basis, &s.thresholds)?;
                cells.insert(
                    cell_key(method, k),
                    SensitivityCell {
                        method,
                        k,
                        sizes: model.cluster_sizes(),
                        centroid_curves: curves(basis, &model.raw_centroids()),
                        assignments: model.assignments,
                        labels,
                        common_items: ids.len(),
                        ari_vs_reference: 1.0,
                        evergreen_persistence: None,
                    },
                );
            }
        }
        runs.push(ThresholdRun { threshold, ids, cells });
    }

    let reference = runs[0].clone();
    let ref_pos: HashMap<&str, usize> = reference
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    for run in runs.iter_mut() {
        let pairs: Vec<(usize, usize)> = run
            .ids
            .iter()
            .enumerate()
            .filter_map(|(i, id)| ref_pos.get(id.as_str()).map(|&r| (r, i)))
            .collect();
        for (key, cell) in run.cells.iter_mut() {
            let rc = &reference.cells[key];
            let a: Vec<usize> = pairs.iter().map(|&(r, _)| rc.assignments[r]).collect();
            let b: Vec<usize> = pairs.iter().map(|&(_, i)| cell.assignments[i]).collect();
            cell.common_items = pairs.len();
            cell.ari_vs_reference = if pairs.is_empty() {
                0.0
            } else {
                adjusted_rand_index(&a, &b)
            };
            let evergreen = |labels: &[ShapeLabel], c: usize| labels[c] == ShapeLabel::Evergreen;
            let ref_ever: HashSet<usize> = (0..pairs.len()).filter(|&p| evergreen(&rc.labels, a[p])).collect();
            cell.evergreen_persistence = if ref_ever.is_empty() {
                None
            } else {
                let kept = ref_ever.iter().filter(|&&p| evergreen(&cell.labels, b[p])).count();
                Some(kept as f64 / ref_ever.len() as f64)
            };
        }
    }
    Ok(SensitivityReport {
        options: opts.clone(),
        runs,
    })
}
