//! Cyclic Jacobi eigensolver for the discretised covariance operator.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    /// Descending.
    pub values: Vec<f64>,
    /// One row per eigenvalue, sampled on the grid, `sum(phi^2) * delta = 1`.
    pub vectors: Matrix,
}

/// Solve `(C * delta) v = lambda v` for symmetric `C`.
///
/// Eigenvectors are rescaled by `1/sqrt(delta)` and signed so that
/// `sum_j phi_k(t_j) >= 0`; when that sum vanishes the first nonzero
/// coordinate is made positive.
pub fn eigendecompose_symmetric(c: &[Vec<f64>], delta: f64) -> Result<EigenPairs> {
    let n = c.len();
    if c.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidInput("matrix is not square".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!(
            "quadrature weight must be positive, got {delta}"
        )));
    }
    let scale = c.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((c[i][j] - c[j][i]).abs());
        }
    }
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric(asym));
    }

    let mut a: Matrix = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (c[i][j] + c[j][i]) * delta).collect())
        .collect();
    let mut v: Matrix = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let frob: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let mut converged = n < 2 || frob == 0.0;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence(MAX_SWEEPS));
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        converged = off <= 1e-15 * frob;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]).then(i.cmp(&j)));
    let inv_sqrt_delta = 1.0 / delta.sqrt();
    let values = order.iter().map(|&k| a[k][k]).collect();
    let vectors = order
        .iter()
        .map(|&k| {
            let mut phi: Vec<f64> = (0..n).map(|j| v[j][k] * inv_sqrt_delta).collect();
            orient(&mut phi);
            phi
        })
        .collect();
    Ok(EigenPairs { values, vectors })
}

fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a[p][q];
    if apq == 0.0 {
        return;
    }
    let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = a.len();
    for k in 0..n {
        let akp = a[k][p];
        let akq = a[k][q];
        a[k][p] = c * akp - s * akq;
        a[k][q] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[p][k];
        let aqk = a[q][k];
        a[p][k] = c * apk - s * aqk;
        a[q][k] = s * apk + c * aqk;
    }
    // Exact zero for the annihilated pair keeps the diagonal clean.
    a[p][q] = 0.0;
    a[q][p] = 0.0;
    for row in v.iter_mut() {
        let vp = row[p];
        let vq = row[q];
        row[p] = c * vp - s * vq;
        row[q] = s * vp + c * vq;
    }
}

fn orient(phi: &mut [f64]) {
    let sum: f64 = phi.iter().sum();
    let flip = if sum.abs() > 1e-10 {
        sum < 0.0
    } else {
        phi.iter().find(|x| x.abs() > 1e-10).is_some_and(|x| *x < 0.0)
    };
    if flip {
        phi.iter_mut().for_each(|x| *x = -*x);
    }
}
