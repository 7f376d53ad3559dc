//! Functional principal components of log-transformed count curves.
//!
//! The latent mean is the smoothed cross-sectional mean of `ln(y + 1)`; the
//! covariance is the raw sample covariance on the dense grid, and its
//! eigenfunctions form the basis in which per-item Poisson scores are fitted.

mod eigen;
mod select;

pub use eigen::{eigendecompose_symmetric, EigenPairs, MAX_SWEEPS};
pub use select::{select_k_loglik, SelectionRow, SelectionTable};

use serde::{Deserialize, Serialize};

use crate::data::{Corpus, TimeGrid};
use crate::error::{Error, Result};
use crate::linalg::{zeros, Matrix};
use crate::smoothing::{gcv_bandwidth, local_poly_smooth, GcvChoice, SmoothCurve, DEFAULT_BANDWIDTHS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthPolicy {
    Gcv(Vec<f64>),
    Fixed(f64),
}

impl Default for BandwidthPolicy {
    fn default() -> Self {
        BandwidthPolicy::Gcv(DEFAULT_BANDWIDTHS.to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisPolicy {
    /// Smallest K whose cumulative FVE reaches the threshold.
    Fve(f64),
    Fixed(usize),
}

impl Default for BasisPolicy {
    fn default() -> Self {
        BasisPolicy::Fixed(4)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub curve: SmoothCurve,
    /// Unsmoothed cross-sectional mean of `ln(y + 1)`.
    pub raw: Vec<f64>,
    pub gcv: Option<GcvChoice>,
}

/// Mean function and derivative: local quadratic smoothing of the
/// cross-sectional mean of `ln(y + 1)`.
pub fn estimate_mean(corpus: &Corpus, policy: &BandwidthPolicy) -> Result<MeanEstimate> {
    if corpus.is_empty() {
        return Err(Error::TooFewItems { needed: 1, have: 0 });
    }
    let grid = corpus.grid();
    let mut raw = vec![0.0; grid.len()];
    for item in corpus.items() {
        for (acc, z) in raw.iter_mut().zip(item.log_transform()) {
            *acc += z;
        }
    }
    let n = corpus.len() as f64;
    raw.iter_mut().for_each(|v| *v /= n);
    smooth_mean(grid, raw, policy)
}

pub(crate) fn smooth_mean(grid: TimeGrid, raw: Vec<f64>, policy: &BandwidthPolicy) -> Result<MeanEstimate> {
    let x = grid.points();
    let (bandwidth, gcv) = match policy {
        BandwidthPolicy::Fixed(h) => (*h, None),
        BandwidthPolicy::Gcv(candidates) => {
            let choice = gcv_bandwidth(&x, &raw, 2, candidates)?;
            (choice.bandwidth, Some(choice))
        }
    };
    let fit = local_poly_smooth(&x, &raw, 2, bandwidth, &x)?;
    Ok(MeanEstimate {
        curve: SmoothCurve {
            values: fit.values,
            derivative: fit.derivative,
            bandwidth,
        },
        raw,
        gcv,
    })
}

/// Sample covariance of `ln(y + 1)` about the supplied mean, divisor `n - 1`.
pub fn covariance_matrix(corpus: &Corpus, mean: &[f64]) -> Result<Matrix> {
    covariance_of(&corpus.log_matrix(), mean)
}

pub(crate) fn covariance_of(rows: &[Vec<f64>], mean: &[f64]) -> Result<Matrix> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::TooFewItems { needed: 2, have: n });
    }
    let t = mean.len();
    let mut c = zeros(t, t);
    let mut dev = vec![0.0; t];
    for row in rows {
        for j in 0..t {
            dev[j] = row[j] - mean[j];
        }
        for j in 0..t {
            let dj = dev[j];
            for l in 0..=j {
                c[j][l] += dj * dev[l];
            }
        }
    }
    let denom = (n - 1) as f64;
    for j in 0..t {
        for l in 0..=j {
            c[j][l] /= denom;
            c[l][j] = c[j][l];
        }
    }
    Ok(c)
}

/// Full eigen decomposition of the covariance operator, before truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpcaDecomposition {
    pub grid: TimeGrid,
    pub mean: MeanEstimate,
    /// Descending, negatives clamped to zero.
    pub eigenvalues: Vec<f64>,
    pub eigenfunctions: Matrix,
    /// `trace(C) * delta`.
    pub trace: f64,
}

impl FpcaDecomposition {
    pub fn positive_total(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Number of eigenvalues above round-off relative to the total.
    pub fn positive_count(&self) -> usize {
        let total = self.positive_total();
        self.eigenvalues.iter().filter(|&&l| l > 1e-12 * total).count()
    }

    /// Cumulative fraction of variance explained, one entry per eigenvalue.
    pub fn fve(&self) -> Vec<f64> {
        cumulative_fve(&self.eigenvalues, self.positive_total())
    }
}

fn cumulative_fve(values: &[f64], total: f64) -> Vec<f64> {
    let mut acc = 0.0;
    values
        .iter()
        .map(|l| {
            acc += l;
            if total > 0.0 {
                (acc / total).min(1.0)
            } else {
                0.0
            }
        })
        .collect()
}

pub fn fpca(corpus: &Corpus, bandwidth: &BandwidthPolicy) -> Result<FpcaDecomposition> {
    let mean = estimate_mean(corpus, bandwidth)?;
    decompose(corpus.grid(), &corpus.log_matrix(), mean)
}

pub(crate) fn decompose(grid: TimeGrid, logs: &[Vec<f64>], mean: MeanEstimate) -> Result<FpcaDecomposition> {
    let c = covariance_of(logs, &mean.curve.values)?;
    let delta = grid.spacing();
    let trace = (0..c.len()).map(|j| c[j][j]).sum::<f64>() * delta;
    let pairs = eigendecompose_symmetric(&c, delta)?;
    let eigenvalues = pairs.values.iter().map(|&l| l.max(0.0)).collect();
    Ok(FpcaDecomposition {
        grid,
        mean,
        eigenvalues,
        eigenfunctions: pairs.vectors,
        trace,
    })
}

/// Mean, derivative and retained eigenpairs on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentBasis {
    pub grid: TimeGrid,
    pub mean: Vec<f64>,
    pub mean_derivative: Vec<f64>,
    pub mean_bandwidth: f64,
    pub eigenvalues: Vec<f64>,
    /// `k x T`.
    pub eigenfunctions: Matrix,
    pub fve: Vec<f64>,
}

impl LatentBasis {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn t_len(&self) -> usize {
        self.grid.len()
    }

    /// `mu(t_j) + sum_k xi_k phi_k(t_j)`.
    pub fn eta(&self, scores: &[f64]) -> Vec<f64> {
        let mut eta = self.mean.clone();
        for (xi, phi) in scores.iter().zip(&self.eigenfunctions) {
            for (e, p) in eta.iter_mut().zip(phi) {
                *e += xi * p;
            }
        }
        eta
    }

    /// Same mean, first `k` eigenpairs.
    pub fn leading(&self, k: usize) -> LatentBasis {
        let k = k.min(self.k());
        LatentBasis {
            grid: self.grid,
            mean: self.mean.clone(),
            mean_derivative: self.mean_derivative.clone(),
            mean_bandwidth: self.mean_bandwidth,
            eigenvalues: self.eigenvalues[..k].to_vec(),
            eigenfunctions: self.eigenfunctions[..k].to_vec(),
            fve: self.fve[..k].to_vec(),
        }
    }

    /// Largest deviation from `sum_j phi_k phi_l delta = delta_kl`.
    pub fn orthonormality_error(&self) -> f64 {
        let delta = self.grid.spacing();
        let mut worst = 0.0f64;
        for (k, a) in self.eigenfunctions.iter().enumerate() {
            for (l, b) in self.eigenfunctions.iter().enumerate() {
                let ip: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * delta;
                let target = if k == l { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
        }
        worst
    }
}

pub fn truncate_basis(decomp: &FpcaDecomposition, policy: BasisPolicy) -> Result<LatentBasis> {
    let available = decomp.positive_count();
    let fve_all = decomp.fve();
    let k = match policy {
        BasisPolicy::Fixed(k) => {
            if k > available {
                return Err(Error::TooManyComponents {
                    requested: k,
                    available,
                });
            }
            k
        }
        BasisPolicy::Fve(tau) => {
            if !(0.0..=1.0).contains(&tau) {
                return Err(Error::Config(format!("FVE threshold must be in [0, 1], got {tau}")));
            }
            // Relative slack absorbs round-off in the cumulative sum (tau = 1).
            fve_all[..available]
                .iter()
                .position(|&f| f >= tau - 1e-12)
                .map_or(available, |p| p + 1)
        }
    };
    Ok(LatentBasis {
        grid: decomp.grid,
        mean: decomp.mean.curve.values.clone(),
        mean_derivative: decomp.mean.curve.derivative.clone(),
        mean_bandwidth: decomp.mean.curve.bandwidth,
        eigenvalues: decomp.eigenvalues[..k].to_vec(),
        eigenfunctions: decomp.eigenfunctions[..k].to_vec(),
        fve: fve_all[..k].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CountTrajectory;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn decomp_with(values: Vec<f64>) -> FpcaDecomposition {
        let t = values.len();
        let grid = TimeGrid::new(t).unwrap();
        let eigenfunctions = (0..t)
            .map(|k| (0..t).map(|j| if j == k { 1.0 } else { 0.0 }).collect())
            .collect();
        FpcaDecomposition {
            grid,
            mean: MeanEstimate {
                curve: SmoothCurve {
                    values: vec![0.0; t],
                    derivative: vec![0.0; t],
                    bandwidth: 1.0,
                },
                raw: vec![0.0; t],
                gcv: None,
            },
            trace: values.iter().sum(),
            eigenvalues: values,
            eigenfunctions,
        }
    }

    #[test]
    fn fve_policy_examples() {
        let d = decomp_with(vec![4.0, 3.0, 2.0, 1.0]);
        assert_eq!(truncate_basis(&d, BasisPolicy::Fve(0.65)).unwrap().k(), 2);
        assert_eq!(truncate_basis(&d, BasisPolicy::Fve(1.0)).unwrap().k(), 4);
        let fixed = truncate_basis(&d, BasisPolicy::Fixed(4)).unwrap();
        assert_eq!(fixed.k(), 4);
        assert!((fixed.fve[3] - 1.0).abs() < 1e-15);
        assert!(fixed.fve.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn too_many_components() {
        let d = decomp_with(vec![2.0, 1.0, 0.0]);
        assert!(matches!(
            truncate_basis(&d, BasisPolicy::Fixed(3)),
            Err(Error::TooManyComponents {
                requested: 3,
                available: 2
            })
        ));
        assert_eq!(truncate_basis(&d, BasisPolicy::Fixed(0)).unwrap().k(), 0);
    }

    #[test]
    fn zero_corpus_has_zero_mean() {
        let grid = TimeGrid::new(10).unwrap();
        let items = (0..3)
            .map(|i| CountTrajectory::new(format!("{i}"), vec![0; 10]))
            .collect();
        let c = Corpus::new(grid, items).unwrap();
        let m = estimate_mean(&c, &BandwidthPolicy::default()).unwrap();
        assert!(m.curve.values.iter().all(|v| v.abs() < 1e-15));
        assert!(m.curve.derivative.iter().all(|v| v.abs() < 1e-15));
        let cov = covariance_matrix(&c, &m.curve.values).unwrap();
        assert!(cov.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_mean_is_reproduced() {
        // ln(1+1) and ln(6+1) every year (6 = round(e^2 - 1)): the raw mean is constant.
        let grid = TimeGrid::new(12).unwrap();
        let c = Corpus::new(
            grid,
            vec![
                CountTrajectory::new("a", vec![1; 12]),
                CountTrajectory::new("b", vec![6; 12]),
            ],
        )
        .unwrap();
        let m = estimate_mean(&c, &BandwidthPolicy::Fixed(2.0)).unwrap();
        let expect = (2f64.ln() + 7f64.ln()) / 2.0;
        assert!(m.curve.values.iter().all(|v| (v - expect).abs() < 1e-12));
        assert!(m
            .curve
            .values
            .iter()
            .all(|v| *v > 2f64.ln() && *v < (2f64.ln() + 2.0) / 2.0));
    }

    #[test]
    fn two_item_closed_form() {
        let grid = TimeGrid::new(3).unwrap();
        let c = Corpus::new(
            grid,
            vec![
                CountTrajectory::new("a", vec![0, 3, 1]),
                CountTrajectory::new("b", vec![2, 1, 4]),
            ],
        )
        .unwrap();
        let z = c.log_matrix();
        let mean: Vec<f64> = (0..3).map(|j| (z[0][j] + z[1][j]) / 2.0).collect();
        let d: Vec<f64> = (0..3).map(|j| z[0][j] - mean[j]).collect();
        let cov = covariance_matrix(&c, &mean).unwrap();
        for j in 0..3 {
            for l in 0..3 {
                assert!((cov[j][l] - 2.0 * d[j] * d[l]).abs() < 1e-14);
            }
        }
        let one = c.select(&[0]);
        assert!(matches!(covariance_matrix(&one, &mean), Err(Error::TooFewItems { .. })));
    }

    #[test]
    fn covariance_matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = TimeGrid::new(5).unwrap();
        let items = (0..100)
            .map(|i| CountTrajectory::new(format!("{i}"), (0..5).map(|_| rng.random_range(0..40)).collect()))
            .collect();
        let c = Corpus::new(grid, items).unwrap();
        let z = c.log_matrix();
        let n = z.len() as f64;
        let mean: Vec<f64> = (0..5).map(|j| z.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let cov = covariance_matrix(&c, &mean).unwrap();
        for j in 0..5 {
            for l in 0..5 {
                let mut s = 0.0;
                for r in &z {
                    s += (r[j] - mean[j]) * (r[l] - mean[l]);
                }
                assert!((cov[j][l] - s / (n - 1.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn decomposition_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let grid = TimeGrid::new(30).unwrap();
        let items = (0..200)
            .map(|i| {
                let level: f64 = rng.random_range(0.5..3.0);
                let slope: f64 = rng.random_range(-0.05..0.05);
                let counts = (1..=30)
                    .map(|t| ((level + slope * t as f64).exp() * rng.random_range(0.7..1.3)).round() as u64)
                    .collect();
                CountTrajectory::new(format!("{i}"), counts)
            })
            .collect();
        let c = Corpus::new(grid, items).unwrap();
        let d = fpca(&c, &BandwidthPolicy::default()).unwrap();
        assert!((d.eigenvalues.iter().sum::<f64>() - d.trace).abs() < 1e-8);
        assert!(d.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        let basis = truncate_basis(&d, BasisPolicy::Fixed(4)).unwrap();
        assert!(basis.orthonormality_error() < 1e-8);
        let all = truncate_basis(&d, BasisPolicy::Fve(1.0)).unwrap();
        assert!((all.fve.last().unwrap() - 1.0).abs() < 1e-12);
    }
}
