//! Clustering in score space.

mod kmeans;
mod kmedoids;
mod labels;
mod metrics;
mod sweep;
mod ward;

pub use kmeans::{kmeans, DEFAULT_RESTARTS, MAX_LLOYD_ITER};
pub use kmedoids::kmedoids;
pub use labels::{
    classify_curve, classify_item, is_evergreen, label_clusters, peak_year, ItemLabel, ShapeLabel, Thresholds,
};
pub use metrics::{adjusted_rand_index, silhouette};
pub use sweep::{cell_key, robustness_sweep, MethodAgreement, SweepCell, SweepOptions, SweepReport};
pub use ward::{ward, Merge};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    KMeans,
    KMedoids,
    Ward,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::KMeans, Method::KMedoids, Method::Ward];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::KMeans => "kmeans",
            Method::KMedoids => "kmedoids",
            Method::Ward => "ward",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kmeans" | "k-means" => Ok(Method::KMeans),
            "kmedoids" | "k-medoids" | "pam" => Ok(Method::KMedoids),
            "ward" => Ok(Method::Ward),
            other => Err(Error::Config(format!("unknown clustering method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub method: Method,
    pub k: usize,
    /// Cluster centres in the (possibly standardised) clustering space.
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Item ids aligned with `assignments`; empty when clustering bare points.
    pub ids: Vec<String>,
    pub within_ss: f64,
    pub seed: u64,
    pub labels: Vec<ShapeLabel>,
    /// Per-dimension divisors applied before clustering, if any.
    pub scale: Option<Vec<f64>>,
    /// k-means: within_ss after each Lloyd iteration of the winning restart.
    pub history: Vec<f64>,
    /// k-medoids: indices of the medoid points.
    pub medoids: Vec<usize>,
    /// Ward: the merges performed, in order.
    pub merges: Vec<Merge>,
}

impl ClusterModel {
    pub(crate) fn new(
        method: Method,
        k: usize,
        centroids: Vec<Vec<f64>>,
        assignments: Vec<usize>,
        within_ss: f64,
        seed: u64,
    ) -> Self {
        Self {
            method,
            k,
            centroids,
            assignments,
            ids: Vec::new(),
            within_ss,
            seed,
            labels: Vec::new(),
            scale: None,
            history: Vec::new(),
            medoids: Vec::new(),
            merges: Vec::new(),
        }
    }

    /// Centroids mapped back to raw score space.
    pub fn raw_centroids(&self) -> Vec<Vec<f64>> {
        match &self.scale {
            None => self.centroids.clone(),
            Some(s) => self
                .centroids
                .iter()
                .map(|c| c.iter().zip(s).map(|(v, d)| v * d).collect())
                .collect(),
        }
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn validate(points: &[Vec<f64>], k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::Config("number of clusters must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::TooFewItems {
            needed: k,
            have: points.len(),
        });
    }
    let d = points[0].len();
    if d == 0 {
        return Err(Error::ZeroDimensionalScores);
    }
    for (i, p) in points.iter().enumerate() {
        if p.len() != d {
            return Err(Error::InvalidInput(format!(
                "point {i} has dimension {} instead of {d}",
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("point {i} has a non-finite coordinate")));
        }
    }
    Ok(d)
}

/// Cluster means for a given assignment; empty clusters get a zero vector.
pub(crate) fn means(points: &[Vec<f64>], assignments: &[usize], k: usize) -> Vec<Vec<f64>> {
    let d = points[0].len();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    sums
}

pub(crate) fn within_ss(points: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum()
}

/// Divide dimension `k` by `sqrt(lambda_k)`; zero eigenvalues leave the
/// dimension unscaled.
pub fn standardize(points: &[Vec<f64>], eigenvalues: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let scale: Vec<f64> = eigenvalues
        .iter()
        .map(|&l| if l > 0.0 { l.sqrt() } else { 1.0 })
        .collect();
    let scaled = points
        .iter()
        .map(|p| p.iter().zip(&scale).map(|(v, s)| v / s).collect())
        .collect();
    (scaled, scale)
}

/// Run `method` on `points`. `restarts` is ignored by Ward.
pub fn cluster(
    points: &[Vec<f64>],
    method: Method,
    k: usize,
    seed: u64,
    restarts: usize,
    exec: Execution,
) -> Result<ClusterModel> {
    match method {
        Method::KMeans => kmeans(points, k, seed, restarts, exec),
        Method::KMedoids => kmedoids(points, k, seed, restarts, exec),
        Method::Ward => ward(points, k),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.as_str()));
        }
        assert!("gmm".parse::<Method>().is_err());
    }

    #[test]
    fn validation() {
        assert!(matches!(validate(&[vec![1.0]], 2), Err(Error::TooFewItems { .. })));
        assert!(matches!(
            validate(&[vec![], vec![]], 1),
            Err(Error::ZeroDimensionalScores)
        ));
        assert!(validate(&[vec![f64::NAN]], 1).is_err());
        assert!(validate(&[vec![1.0], vec![1.0, 2.0]], 1).is_err());
        assert_eq!(validate(&[vec![1.0, 2.0]], 1).unwrap(), 2);
    }

    #[test]
    fn standardize_scales_and_maps_back() {
        let (s, scale) = standardize(&[vec![4.0, 1.0]], &[4.0, 0.0]);
        assert_eq!(s[0], vec![2.0, 1.0]);
        let mut m = ClusterModel::new(Method::KMeans, 1, s.clone(), vec![0], 0.0, 0);
        m.scale = Some(scale);
        assert_eq!(m.raw_centroids()[0], vec![4.0, 1.0]);
    }
}
