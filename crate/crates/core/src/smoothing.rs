//! Gaussian-kernel local polynomial regression, GCV bandwidth choice, and
//! kernel density estimation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve;

const SINGULAR_TOL: f64 = 1e-12;

/// Default GCV candidate bandwidths, in years.
pub const DEFAULT_BANDWIDTHS: [f64; 6] = [1.0, 1.5, 2.0, 3.0, 4.0, 6.0];

/// A smoothed curve on the grid together with its first derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothCurve {
    pub values: Vec<f64>,
    pub derivative: Vec<f64>,
    pub bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit {
    pub values: Vec<f64>,
    pub derivative: Vec<f64>,
}

/// One local weighted least-squares problem, centred at `x0` and scaled by
/// `h` so the design stays well conditioned.
struct LocalSystem {
    gram: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

fn local_system(x: &[f64], y: &[f64], degree: usize, h: f64, x0: f64) -> (LocalSystem, usize) {
    let p = degree + 1;
    let mut gram = vec![vec![0.0; p]; p];
    let mut rhs = vec![0.0; p];
    let mut support = 0;
    let mut basis = [0.0; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        let u = (xi - x0) / h;
        let w = (-0.5 * u * u).exp();
        if w <= 0.0 {
            continue;
        }
        support += 1;
        basis[0] = 1.0;
        basis[1] = u;
        basis[2] = u * u;
        for a in 0..p {
            rhs[a] += w * basis[a] * yi;
            for b in 0..p {
                gram[a][b] += w * basis[a] * basis[b];
            }
        }
    }
    (LocalSystem { gram, rhs }, support)
}

fn check_args(x: &[f64], y: &[f64], degree: usize, h: f64) -> Result<()> {
    if !(1..=2).contains(&degree) {
        return Err(Error::InvalidInput(format!(
            "local polynomial degree must be 1 or 2, got {degree}"
        )));
    }
    if x.len() != y.len() {
        return Err(Error::InvalidInput("x and y lengths differ".into()));
    }
    if x.len() < degree + 1 {
        return Err(Error::InvalidInput(format!(
            "need at least {} points for degree {degree}",
            degree + 1
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
    }
    Ok(())
}

/// Local polynomial regression with Gaussian weights `exp(-((x - x0)/h)^2 / 2)`.
///
/// The value at each eval point is the fitted intercept, the derivative is the
/// fitted linear coefficient.
pub fn local_poly_smooth(x: &[f64], y: &[f64], degree: usize, bandwidth: f64, eval: &[f64]) -> Result<LocalFit> {
    check_args(x, y, degree, bandwidth)?;
    let mut values = Vec::with_capacity(eval.len());
    let mut derivative = Vec::with_capacity(eval.len());
    for &x0 in eval {
        let (sys, support) = local_system(x, y, degree, bandwidth, x0);
        if support < degree + 1 {
            return Err(Error::SingularDesign { x0 });
        }
        let beta = solve(&sys.gram, &sys.rhs, SINGULAR_TOL).ok_or(Error::SingularDesign { x0 })?;
        values.push(beta[0]);
        derivative.push(beta[1] / bandwidth);
    }
    Ok(LocalFit { values, derivative })
}

/// Diagonal of the smoother matrix at the data points plus fitted values.
fn hat_diagonal(x: &[f64], y: &[f64], degree: usize, h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = degree + 1;
    let mut diag = Vec::with_capacity(x.len());
    let mut fitted = Vec::with_capacity(x.len());
    let mut e1 = vec![0.0; p];
    e1[0] = 1.0;
    for &x0 in x {
        let (sys, support) = local_system(x, y, degree, h, x0);
        if support < p {
            return Err(Error::SingularDesign { x0 });
        }
        let beta = solve(&sys.gram, &sys.rhs, SINGULAR_TOL).ok_or(Error::SingularDesign { x0 })?;
        let g = solve(&sys.gram, &e1, SINGULAR_TOL).ok_or(Error::SingularDesign { x0 })?;
        // The data point at x0 has weight 1 and design row e1.
        diag.push(g[0]);
        fitted.push(beta[0]);
    }
    Ok((diag, fitted))
}

/// GCV score `n * RSS / (n - tr S)^2`, or `None` when the fit is singular or
/// interpolating.
pub fn gcv_score(x: &[f64], y: &[f64], degree: usize, h: f64) -> Result<Option<f64>> {
    check_args(x, y, degree, h)?;
    let (diag, fitted) = match hat_diagonal(x, y, degree, h) {
        Ok(v) => v,
        Err(Error::SingularDesign { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let n = x.len() as f64;
    let rss: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum();
    let trace: f64 = diag.iter().sum();
    let denom = n - trace;
    if denom <= 1e-8 * n {
        return Ok(None);
    }
    Ok(Some(n * rss / (denom * denom)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcvChoice {
    pub bandwidth: f64,
    /// `(h, score)`; `None` marks a singular candidate.
    pub table: Vec<(f64, Option<f64>)>,
}

/// Pick the candidate bandwidth minimising GCV; near-ties go to the smaller
/// bandwidth.
pub fn gcv_bandwidth(x: &[f64], y: &[f64], degree: usize, candidates: &[f64]) -> Result<GcvChoice> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no bandwidth candidates".into()));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let table = sorted
        .iter()
        .map(|&h| Ok((h, gcv_score(x, y, degree, h)?)))
        .collect::<Result<Vec<_>>>()?;

    // Absolute floor so exact-fit data (RSS at round-off level) ties.
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    let spread = y.iter().map(|v| (v - ybar).powi(2)).sum::<f64>() / y.len() as f64;
    let floor = 1e-12 * (spread + ybar * ybar).max(f64::MIN_POSITIVE);

    let mut best: Option<(f64, f64)> = None;
    for &(h, score) in &table {
        let Some(s) = score else { continue };
        match best {
            None => best = Some((h, s)),
            Some((_, b)) if s < b - 1e-9 * b - floor => best = Some((h, s)),
            _ => {}
        }
    }
    let (bandwidth, _) = best.ok_or(Error::NoValidBandwidth)?;
    Ok(GcvChoice { bandwidth, table })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub eval: Vec<f64>,
    pub densities: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityEstimate {
    /// Trapezoid integral over the eval points.
    pub fn integral(&self) -> f64 {
        self.eval
            .windows(2)
            .zip(self.densities.windows(2))
            .map(|(x, f)| 0.5 * (x[1] - x[0]) * (f[0] + f[1]))
            .sum()
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`; falls back to `sd` when the IQR
/// is zero.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::ZeroVariance);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

pub fn resolve_bandwidth(samples: &[f64], bandwidth: Bandwidth) -> Result<f64> {
    match bandwidth {
        Bandwidth::Silverman => silverman_bandwidth(samples),
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => Ok(h),
        Bandwidth::Fixed(h) => Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}"))),
    }
}

/// Evenly spaced grid covering the samples padded by `pad` on each side.
pub fn padded_grid(samples: &[f64], pad: f64, points: usize) -> Vec<f64> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - pad;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + pad;
    let points = points.max(2);
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

pub fn gaussian_kde(samples: &[f64], bandwidth: Bandwidth, eval: &[f64]) -> Result<DensityEstimate> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples for density estimate".into()));
    }
    let h = resolve_bandwidth(samples, bandwidth)?;
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let densities = eval
        .iter()
        .map(|&x| {
            norm * samples
                .iter()
                .map(|&s| {
                    let u = (x - s) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
        })
        .collect();
    Ok(DensityEstimate {
        eval: eval.to_vec(),
        densities,
        bandwidth: h,
    })
}
