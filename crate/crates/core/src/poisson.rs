//! Per-item Poisson maximum likelihood for FPCA scores.
//!
//! Model: `y_j ~ Poisson(exp(eta_j))`, `eta_j = mu(t_j) + sum_k xi_k phi_k(t_j)`.
//! The log-likelihood `sum_j y_j eta_j - exp(eta_j)` omits `log y_j!`, so
//! reported values are comparable only within this crate.

use serde::{Deserialize, Serialize};

use crate::data::{Corpus, CountTrajectory};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::fpca::LatentBasis;
use crate::linalg::{cholesky, cholesky_solve, max_abs, Matrix};

/// Linear predictor values above this trip the overflow guard.
pub const ETA_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub max_halvings: usize,
    /// Penalty used only by the overflow fallback.
    pub ridge: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            grad_tol: 1e-8,
            step_tol: 1e-10,
            max_halvings: 30,
            ridge: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperFit {
    pub id: String,
    pub scores: Vec<f64>,
    pub eta: Vec<f64>,
    pub intensity: Vec<f64>,
    pub loglik: f64,
    pub mse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the overflow guard forced the ridge-penalised refit.
    pub ridge: bool,
    pub max_abs_grad: f64,
}

fn guard(eta: &[f64]) -> Result<()> {
    match eta.iter().copied().find(|e| *e > ETA_LIMIT || e.is_nan()) {
        Some(e) => Err(Error::Overflow(e)),
        None => Ok(()),
    }
}

pub fn poisson_loglik(counts: &[u64], eta: &[f64]) -> Result<f64> {
    if counts.len() != eta.len() {
        return Err(Error::GridMismatch {
            expected: counts.len(),
            found: eta.len(),
        });
    }
    guard(eta)?;
    Ok(counts.iter().zip(eta).map(|(&y, &e)| y as f64 * e - e.exp()).sum())
}

/// Gradient and Hessian of the log-likelihood with respect to the scores.
pub fn loglik_grad_hess(counts: &[u64], eta: &[f64], basis: &LatentBasis) -> Result<(Vec<f64>, Matrix)> {
    if counts.len() != eta.len() || eta.len() != basis.t_len() {
        return Err(Error::GridMismatch {
            expected: basis.t_len(),
            found: eta.len(),
        });
    }
    guard(eta)?;
    let k = basis.k();
    let lambda: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
    let phi = &basis.eigenfunctions;
    let mut grad = vec![0.0; k];
    let mut hess = vec![vec![0.0; k]; k];
    for a in 0..k {
        grad[a] = counts
            .iter()
            .zip(&lambda)
            .zip(&phi[a])
            .map(|((&y, l), p)| (y as f64 - l) * p)
            .sum();
        for b in 0..=a {
            let h: f64 = -lambda
                .iter()
                .zip(&phi[a])
                .zip(&phi[b])
                .map(|((l, p), q)| l * p * q)
                .sum::<f64>();
            hess[a][b] = h;
            hess[b][a] = h;
        }
    }
    Ok((grad, hess))
}

pub fn fit_mse(counts: &[u64], intensity: &[f64]) -> f64 {
    counts
        .iter()
        .zip(intensity)
        .map(|(&y, l)| (y as f64 - l).powi(2))
        .sum::<f64>()
        / counts.len() as f64
}

struct NewtonOutcome {
    scores: Vec<f64>,
    iterations: usize,
    converged: bool,
    max_abs_grad: f64,
}

fn penalised(counts: &[u64], basis: &LatentBasis, scores: &[f64], penalty: f64) -> f64 {
    let eta = basis.eta(scores);
    match poisson_loglik(counts, &eta) {
        Ok(l) => l - 0.5 * penalty * scores.iter().map(|x| x * x).sum::<f64>(),
        Err(_) => f64::NEG_INFINITY,
    }
}

fn newton(
    counts: &[u64],
    basis: &LatentBasis,
    start: Vec<f64>,
    penalty: f64,
    opts: &FitOptions,
) -> Result<NewtonOutcome> {
    let k = basis.k();
    let mut xi = start;
    let mut eta = basis.eta(&xi);
    guard(&eta)?;
    let mut ll = penalised(counts, basis, &xi, penalty);
    let scale = 1.0 + counts.iter().sum::<u64>() as f64;
    for iter in 0..opts.max_iter {
        let (mut g, mut h) = loglik_grad_hess(counts, &eta, basis)?;
        for a in 0..k {
            g[a] -= penalty * xi[a];
            h[a][a] -= penalty;
        }
        let gmax = max_abs(&g);
        if gmax < opts.grad_tol {
            return Ok(NewtonOutcome {
                scores: xi,
                iterations: iter,
                converged: true,
                max_abs_grad: gmax,
            });
        }
        let neg_h: Matrix = h.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
        let l = cholesky(&neg_h).ok_or(Error::Overflow(f64::INFINITY))?;
        let dir = cholesky_solve(&l, &g);

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = xi.iter().zip(&dir).map(|(x, d)| x + step * d).collect();
            let trial_ll = penalised(counts, basis, &trial, penalty);
            if trial_ll >= ll {
                accepted = Some((trial, trial_ll));
                break;
            }
            step *= 0.5;
        }
        let moved = step * max_abs(&dir);
        match accepted {
            Some((trial, trial_ll)) => {
                xi = trial;
                ll = trial_ll;
                eta = basis.eta(&xi);
            }
            None => {
                // No ascent left along the Newton direction.
                return Ok(NewtonOutcome {
                    scores: xi,
                    iterations: iter + 1,
                    converged: gmax < opts.grad_tol * scale,
                    max_abs_grad: gmax,
                });
            }
        }
        if moved < opts.step_tol {
            let (g, _) = loglik_grad_hess(counts, &eta, basis)?;
            let gmax = max_abs(&g.iter().zip(&xi).map(|(g, x)| g - penalty * x).collect::<Vec<_>>());
            return Ok(NewtonOutcome {
                scores: xi,
                iterations: iter + 1,
                converged: gmax < opts.grad_tol * scale,
                max_abs_grad: gmax,
            });
        }
    }
    let (g, _) = loglik_grad_hess(counts, &eta, basis)?;
    Ok(NewtonOutcome {
        scores: xi,
        iterations: opts.max_iter,
        converged: false,
        max_abs_grad: max_abs(&g),
    })
}

/// Maximise the Poisson log-likelihood over the scores by Newton's method
/// with step halving, starting from the projection of `ln(y + 1) - mu`.
///
/// If the overflow guard trips, the fit restarts from zero scores with a
/// small ridge penalty and `ridge` is set on the result.
pub fn fit_scores(traj: &CountTrajectory, basis: &LatentBasis, opts: &FitOptions) -> Result<PaperFit> {
    let t = basis.t_len();
    if traj.counts.len() != t {
        return Err(Error::GridMismatch {
            expected: t,
            found: traj.counts.len(),
        });
    }
    let delta = basis.grid.spacing();
    let z = traj.log_transform();
    let start: Vec<f64> = basis
        .eigenfunctions
        .iter()
        .map(|phi| {
            phi.iter()
                .zip(z.iter().zip(&basis.mean))
                .map(|(p, (z, m))| (z - m) * p)
                .sum::<f64>()
                * delta
        })
        .collect();

    let (outcome, ridge) = match newton(&traj.counts, basis, start, 0.0, opts) {
        Ok(o) => (o, false),
        Err(Error::Overflow(_)) => (
            newton(&traj.counts, basis, vec![0.0; basis.k()], opts.ridge, opts)?,
            true,
        ),
        Err(e) => return Err(e),
    };
    let eta = basis.eta(&outcome.scores);
    let intensity: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
    let loglik = poisson_loglik(&traj.counts, &eta)?;
    let mse = fit_mse(&traj.counts, &intensity);
    Ok(PaperFit {
        id: traj.id.clone(),
        scores: outcome.scores,
        eta,
        intensity,
        loglik,
        mse,
        iterations: outcome.iterations,
        converged: outcome.converged,
        ridge,
        max_abs_grad: outcome.max_abs_grad,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusFit {
    pub fits: Vec<PaperFit>,
    pub converged: usize,
    /// Items whose fit raised an error; they are absent from `fits`.
    pub failures: Vec<(String, String)>,
}

impl CorpusFit {
    pub fn convergence_rate(&self) -> f64 {
        let total = self.fits.len() + self.failures.len();
        if total == 0 {
            1.0
        } else {
            self.converged as f64 / total as f64
        }
    }
}

/// Independent per-item fits; output order follows the corpus.
pub fn fit_corpus(corpus: &Corpus, basis: &LatentBasis, opts: &FitOptions, exec: Execution) -> Result<CorpusFit> {
    if corpus.grid().len() != basis.t_len() {
        return Err(Error::GridMismatch {
            expected: basis.t_len(),
            found: corpus.grid().len(),
        });
    }
    let items = corpus.items();
    let results = map_indexed(exec, items.len(), |i| fit_scores(&items[i], basis, opts));
    let mut fits = Vec::with_capacity(items.len());
    let mut failures = Vec::new();
    for (item, r) in items.iter().zip(results) {
        match r {
            Ok(f) => fits.push(f),
            Err(e) => failures.push((item.id.clone(), e.to_string())),
        }
    }
    let converged = fits.iter().filter(|f| f.converged).count();
    Ok(CorpusFit {
        fits,
        converged,
        failures,
    })
}
