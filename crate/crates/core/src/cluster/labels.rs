//! Shape labels for cluster centroids and individual fitted curves.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::ClusterModel;
use crate::error::{Error, Result};
use crate::fpca::LatentBasis;
use crate::poisson::PaperFit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeLabel {
    Evergreen,
    Delayed,
    NormalLow,
    NormalHigh,
}

impl ShapeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ShapeLabel::Evergreen => "evergreen",
            ShapeLabel::Delayed => "delayed",
            ShapeLabel::NormalLow => "normal-low",
            ShapeLabel::NormalHigh => "normal-high",
        }
    }
}

impl fmt::Display for ShapeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ItemLabel {
    Evergreen,
    FlashInThePan,
    NormalDocument,
    DelayedDocument,
}

impl ItemLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ItemLabel::Evergreen => "evergreen",
            ItemLabel::FlashInThePan => "flash-in-the-pan",
            ItemLabel::NormalDocument => "normal-document",
            ItemLabel::DelayedDocument => "delayed-document",
        }
    }
}

impl fmt::Display for ItemLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Allowed year-on-year drop for evergreen, as a fraction of the curve max.
    pub evergreen_tolerance: f64,
    /// Delayed when the peak year exceeds this fraction of T.
    pub delayed_fraction: f64,
    /// Flash-in-the-pan needs the peak year at or before this fraction of T...
    pub flash_peak_fraction: f64,
    /// ...and the final value below this fraction of the peak.
    pub flash_tail_ratio: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            evergreen_tolerance: 0.05,
            delayed_fraction: 0.5,
            flash_peak_fraction: 1.0 / 6.0,
            flash_tail_ratio: 0.2,
        }
    }
}

/// No year-on-year drop larger than `tolerance * max`.
pub fn is_evergreen(curve: &[f64], tolerance: f64) -> bool {
    let max = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let eps = tolerance * max;
    curve.windows(2).all(|w| w[1] >= w[0] - eps)
}

/// 1-based year of the maximum (first one on ties).
pub fn peak_year(curve: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in curve.iter().enumerate() {
        if v > curve[best] {
            best = j;
        }
    }
    best + 1
}

fn intensity(basis: &LatentBasis, scores: &[f64]) -> Vec<f64> {
    basis.eta(scores).into_iter().map(f64::exp).collect()
}

/// Label each centroid of `model` by the shape of `exp(mu + sum_k c_k phi_k)`.
///
/// Rules in order: evergreen, delayed, then normal split at the median
/// mean level of the normal clusters (a level equal to the median is low).
pub fn label_clusters(model: &ClusterModel, basis: &LatentBasis, thresholds: &Thresholds) -> Result<Vec<ShapeLabel>> {
    let centroids = model.raw_centroids();
    if let Some(c) = centroids.iter().find(|c| c.len() != basis.k()) {
        return Err(Error::InvalidInput(format!(
            "centroid dimension {} does not match basis dimension {}",
            c.len(),
            basis.k()
        )));
    }
    let t = basis.t_len() as f64;
    let curves: Vec<Vec<f64>> = centroids.iter().map(|c| intensity(basis, c)).collect();
    let mut labels: Vec<Option<ShapeLabel>> = curves
        .iter()
        .map(|curve| {
            if is_evergreen(curve, thresholds.evergreen_tolerance) {
                Some(ShapeLabel::Evergreen)
            } else if peak_year(curve) as f64 > thresholds.delayed_fraction * t {
                Some(ShapeLabel::Delayed)
            } else {
                None
            }
        })
        .collect();
    let levels: Vec<f64> = curves
        .iter()
        .zip(&labels)
        .filter(|(_, l)| l.is_none())
        .map(|(c, _)| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    if !levels.is_empty() {
        let mut sorted = levels.clone();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len();
        let median = if m % 2 == 1 {
            sorted[m / 2]
        } else {
            0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
        };
        for (label, curve) in labels.iter_mut().zip(&curves) {
            if label.is_none() {
                let level = curve.iter().sum::<f64>() / curve.len() as f64;
                *label = Some(if level > median {
                    ShapeLabel::NormalHigh
                } else {
                    ShapeLabel::NormalLow
                });
            }
        }
    }
    Ok(labels.into_iter().map(Option::unwrap).collect())
}

/// Item taxonomy for a fitted intensity curve.
pub fn classify_curve(curve: &[f64], thresholds: &Thresholds) -> ItemLabel {
    let t = curve.len() as f64;
    let peak = peak_year(curve);
    let max = curve[peak - 1];
    if is_evergreen(curve, thresholds.evergreen_tolerance) {
        ItemLabel::Evergreen
    } else if peak as f64 <= thresholds.flash_peak_fraction * t
        && curve[curve.len() - 1] < thresholds.flash_tail_ratio * max
    {
        ItemLabel::FlashInThePan
    } else if peak as f64 > thresholds.delayed_fraction * t {
        ItemLabel::DelayedDocument
    } else {
        ItemLabel::NormalDocument
    }
}

/// [`classify_curve`] on the fit's intensity.
pub fn classify_item(fit: &PaperFit, thresholds: &Thresholds) -> ItemLabel {
    classify_curve(&fit.intensity, thresholds)
}
