//! Choosing the number of eigenfunctions by held-out Poisson likelihood.

use serde::{Deserialize, Serialize};

use super::{decompose, smooth_mean, truncate_basis, BandwidthPolicy, BasisPolicy, LatentBasis};
use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::poisson::{fit_scores, FitOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub k: usize,
    /// Mean per-item log-likelihood of held-out items under the fold basis.
    pub heldout_loglik: f64,
    /// `-2 * heldout_loglik + 2k`.
    pub aic: f64,
    /// Total log-likelihood of all items under the full-corpus basis.
    pub insample_loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTable {
    pub rows: Vec<SelectionRow>,
    pub recommended_k: usize,
    pub folds: usize,
    /// Held-out items dropped because some fit did not converge.
    pub excluded: Vec<String>,
}

/// Cross-validated AIC table over `k_values`.
///
/// Items go to fold `i mod folds`. For each fold the mean and eigenbasis are
/// re-estimated on the training items (mean bandwidth fixed to the one in
/// `basis`), and held-out items are fitted with the leading `k`
/// eigenfunctions. An item whose fit fails to converge for any `k` is
/// excluded from every row so all rows average over the same items.
pub fn select_k_loglik(
    corpus: &Corpus,
    basis: &LatentBasis,
    k_values: &[usize],
    folds: usize,
    opts: &FitOptions,
    exec: Execution,
) -> Result<SelectionTable> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    if k_values.is_empty() {
        return Err(Error::Config("empty K range".into()));
    }
    if corpus.len() < 2 * folds {
        return Err(Error::TooFewItems {
            needed: 2 * folds,
            have: corpus.len(),
        });
    }
    let k_max = *k_values.iter().max().unwrap();
    if k_max > basis.k() {
        return Err(Error::TooManyComponents {
            requested: k_max,
            available: basis.k(),
        });
    }
    let grid = corpus.grid();
    let logs = corpus.log_matrix();
    let n = corpus.len();

    // heldout[i][r]: log-likelihood of item i for k_values[r], None if not converged.
    let mut heldout: Vec<Vec<Option<f64>>> = vec![Vec::new(); n];
    for fold in 0..folds {
        let train: Vec<usize> = (0..n).filter(|i| i % folds != fold).collect();
        let test: Vec<usize> = (0..n).filter(|i| i % folds == fold).collect();
        let train_logs: Vec<Vec<f64>> = train.iter().map(|&i| logs[i].clone()).collect();
        let mut raw = vec![0.0; grid.len()];
        for row in &train_logs {
            for (a, z) in raw.iter_mut().zip(row) {
                *a += z;
            }
        }
        raw.iter_mut().for_each(|v| *v /= train.len() as f64);
        let mean = smooth_mean(grid, raw, &BandwidthPolicy::Fixed(basis.mean_bandwidth))?;
        let decomp = decompose(grid, &train_logs, mean)?;
        let fold_basis = truncate_basis(&decomp, BasisPolicy::Fixed(k_max))?;
        let leading: Vec<LatentBasis> = k_values.iter().map(|&k| fold_basis.leading(k)).collect();
        let items = corpus.items();
        let results = map_indexed(exec, test.len(), |t| {
            leading
                .iter()
                .map(|b| {
                    fit_scores(&items[test[t]], b, opts)
                        .ok()
                        .filter(|f| f.converged)
                        .map(|f| f.loglik)
                })
                .collect::<Vec<_>>()
        });
        for (&i, r) in test.iter().zip(results) {
            heldout[i] = r;
        }
    }

    let included: Vec<usize> = (0..n).filter(|&i| heldout[i].iter().all(Option::is_some)).collect();
    let excluded: Vec<String> = (0..n)
        .filter(|&i| heldout[i].iter().any(Option::is_none))
        .map(|i| corpus.items()[i].id.clone())
        .collect();
    if included.is_empty() {
        return Err(Error::InvalidInput("no held-out fit converged".into()));
    }

    let items = corpus.items();
    let insample: Vec<Vec<f64>> = map_indexed(exec, n, |i| {
        k_values
            .iter()
            .map(|&k| {
                fit_scores(&items[i], &basis.leading(k), opts)
                    .map(|f| f.loglik)
                    .unwrap_or(f64::NAN)
            })
            .collect()
    });

    let rows: Vec<SelectionRow> = k_values
        .iter()
        .enumerate()
        .map(|(r, &k)| {
            let total: f64 = included.iter().map(|&i| heldout[i][r].unwrap()).sum();
            let heldout_loglik = total / included.len() as f64;
            SelectionRow {
                k,
                heldout_loglik,
                aic: -2.0 * heldout_loglik + 2.0 * k as f64,
                insample_loglik: insample.iter().map(|v| v[r]).filter(|v| v.is_finite()).sum(),
            }
        })
        .collect();
    let recommended_k = rows
        .iter()
        .min_by(|a, b| a.aic.total_cmp(&b.aic).then(a.k.cmp(&b.k)))
        .map(|r| r.k)
        .unwrap();
    Ok(SelectionTable {
        rows,
        recommended_k,
        folds,
        excluded,
    })
}
