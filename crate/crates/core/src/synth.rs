//! Synthetic corpora with known ground truth.
//!
//! Items are drawn from the same log-linear model the pipeline fits: pick an
//! archetype, draw basis coordinates `xi ~ N(shift, diag(lambda))`, and draw
//! yearly counts `y_j ~ Poisson(exp(mu(t_j) + sum_k xi_k phi_k(t_j)))`.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::cluster::{adjusted_rand_index, ClusterModel};
use crate::data::{Corpus, CountTrajectory, TimeGrid};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::fpca::{eigendecompose_symmetric, LatentBasis};
use crate::linalg::{dot, pearson, Matrix};
use crate::poisson::PaperFit;
use crate::rng::substream;

/// Linear predictor ceiling; specs that exceed it are rejected.
pub const ETA_MAX: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum MeanCurve {
    /// `ln(a t^b e^(-t/c) + d)`.
    Gamma {
        a: f64,
        b: f64,
        c: f64,
        d: f64,
    },
    Flat {
        value: f64,
    },
    Table {
        values: Vec<f64>,
    },
}

impl Default for MeanCurve {
    fn default() -> Self {
        MeanCurve::Gamma {
            a: 6.0,
            b: 1.5,
            c: 8.0,
            d: 1.5,
        }
    }
}

impl MeanCurve {
    pub fn evaluate(&self, grid: TimeGrid) -> Result<Vec<f64>> {
        match self {
            MeanCurve::Gamma { a, b, c, d } => Ok(grid
                .points()
                .iter()
                .map(|&t| (a * t.powf(*b) * (-t / c).exp() + d).ln())
                .collect()),
            MeanCurve::Flat { value } => Ok(vec![*value; grid.len()]),
            MeanCurve::Table { values } if values.len() == grid.len() => Ok(values.clone()),
            MeanCurve::Table { values } => Err(Error::GridMismatch {
                expected: grid.len(),
                found: values.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisFamily {
    /// Monomials in `(t - mid) / half_range`.
    #[default]
    Polynomial,
    /// `1, sin(2 pi t/T), cos(2 pi t/T), sin(4 pi t/T), ...`.
    Fourier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archetype {
    pub name: String,
    pub weight: f64,
    /// Mean of the basis coordinates.
    pub shift: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub t_len: usize,
    pub n: usize,
    pub mean: MeanCurve,
    pub basis: BasisFamily,
    /// Within-archetype score variances, one per basis function.
    pub eigenvalues: Vec<f64>,
    pub archetypes: Vec<Archetype>,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    /// Four archetypes whose mean curves rise throughout (evergreen), peak
    /// in year 23 (delayed), peak in year 2 and fade (flash), and peak in
    /// year 7 (normal). The shifts are projections of those target
    /// log-intensities, minus the mean, onto the cubic basis.
    fn default() -> Self {
        let arch = |name: &str, shift: [f64; 4]| Archetype {
            name: name.into(),
            weight: 0.25,
            shift: shift.to_vec(),
        };
        Self {
            t_len: 30,
            n: 2000,
            mean: MeanCurve::default(),
            basis: BasisFamily::Polynomial,
            eigenvalues: vec![2.0, 1.5, 1.2, 1.0],
            archetypes: vec![
                arch("evergreen", [0.37, 3.36, 1.0, -0.54]),
                arch("delayed", [-1.96, 5.42, -0.21, -3.19]),
                arch("flash", [-7.88, -4.77, 4.49, -1.2]),
                arch("normal", [-1.89, -4.07, 0.13, 0.57]),
            ],
            seed: 20240601,
        }
    }
}

impl GeneratorSpec {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if self.n == 0 {
            return Err(Error::Config("generator needs n >= 1".into()));
        }
        if k > self.t_len {
            return Err(Error::TooManyComponents {
                requested: k,
                available: self.t_len,
            });
        }
        if self.eigenvalues.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::Config("eigenvalues must be finite and nonnegative".into()));
        }
        if self.eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Config("eigenvalues must be in descending order".into()));
        }
        if self.archetypes.is_empty() {
            return Err(Error::Config("at least one archetype is required".into()));
        }
        let total: f64 = self.archetypes.iter().map(|a| a.weight).sum();
        if self.archetypes.iter().any(|a| !(a.weight >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "archetype weights must be nonnegative and sum to 1, got {total}"
            )));
        }
        if let Some(a) = self.archetypes.iter().find(|a| a.shift.len() != k) {
            return Err(Error::Config(format!(
                "archetype {} has {} shifts for {k} basis functions",
                a.name,
                a.shift.len()
            )));
        }
        Ok(())
    }
}

fn gram_schmidt(mut rows: Matrix) -> Matrix {
    for i in 0..rows.len() {
        // Two passes keep the result orthonormal to machine precision.
        for _ in 0..2 {
            for j in 0..i {
                let c = dot(&rows[i], &rows[j]);
                let prev = rows[j].clone();
                for (x, p) in rows[i].iter_mut().zip(&prev) {
                    *x -= c * p;
                }
            }
        }
        let norm = dot(&rows[i], &rows[i]).sqrt();
        rows[i].iter_mut().for_each(|x| *x /= norm);
    }
    rows
}

/// `k` functions on the grid `1..=t_len`, orthonormal under `sum phi_a phi_b = delta_ab`.
pub fn make_basis(t_len: usize, k: usize, family: BasisFamily) -> Result<Matrix> {
    if k > t_len {
        return Err(Error::TooManyComponents {
            requested: k,
            available: t_len,
        });
    }
    let t: Vec<f64> = (1..=t_len).map(|j| j as f64).collect();
    let raw: Matrix = match family {
        BasisFamily::Polynomial => {
            let mid = (t_len as f64 + 1.0) / 2.0;
            let half = ((t_len as f64 - 1.0) / 2.0).max(1.0);
            (0..k)
                .map(|p| t.iter().map(|&x| ((x - mid) / half).powi(p as i32)).collect())
                .collect()
        }
        BasisFamily::Fourier => (0..k)
            .map(|p| {
                let freq = p.div_ceil(2) as f64;
                t.iter()
                    .map(|&x| {
                        let w = 2.0 * std::f64::consts::PI * freq * x / t_len as f64;
                        match p {
                            0 => 1.0,
                            _ if p % 2 == 1 => w.sin(),
                            _ => w.cos(),
                        }
                    })
                    .collect()
            })
            .collect(),
    };
    Ok(gram_schmidt(raw))
}

/// Everything needed to score a pipeline run against the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub spec: GeneratorSpec,
    pub ids: Vec<String>,
    /// Archetype index per item.
    pub archetypes: Vec<usize>,
    pub mean: Vec<f64>,
    /// Generator basis, `K x T`.
    pub basis: Matrix,
    /// Basis coordinates per item.
    pub coordinates: Matrix,
    /// Eigen-decomposition of the total coordinate covariance
    /// `diag(lambda) + sum_a w_a (s_a - s_bar)(s_a - s_bar)^T`.
    pub population_eigenvalues: Vec<f64>,
    /// Population eigenfunctions on the grid, signed with `sum >= 0`.
    pub population_eigenfunctions: Matrix,
    /// `(xi - s_bar)` rotated into the population eigenbasis.
    pub population_scores: Matrix,
}

fn population_eigen(spec: &GeneratorSpec, basis: &Matrix) -> Result<(Vec<f64>, Matrix, Matrix, Vec<f64>)> {
    let k = spec.k();
    let sbar: Vec<f64> = (0..k)
        .map(|l| spec.archetypes.iter().map(|a| a.weight * a.shift[l]).sum())
        .collect();
    let mut cov = vec![vec![0.0; k]; k];
    for (l, row) in cov.iter_mut().enumerate() {
        row[l] = spec.eigenvalues[l];
    }
    for a in &spec.archetypes {
        for p in 0..k {
            for q in 0..k {
                cov[p][q] += a.weight * (a.shift[p] - sbar[p]) * (a.shift[q] - sbar[q]);
            }
        }
    }
    let eig = eigendecompose_symmetric(&cov, 1.0)?;
    let t_len = spec.t_len;
    let mut rotation = eig.vectors; // rows: eigenvectors in coordinate space
    let mut functions = Vec::with_capacity(k);
    for u in rotation.iter_mut() {
        let mut f: Vec<f64> = (0..t_len).map(|j| (0..k).map(|l| u[l] * basis[l][j]).sum()).collect();
        if f.iter().sum::<f64>() < 0.0 {
            f.iter_mut().for_each(|x| *x = -*x);
            u.iter_mut().for_each(|x| *x = -*x);
        }
        functions.push(f);
    }
    Ok((eig.values, functions, rotation, sbar))
}

/// Draw a corpus and its truth record. Deterministic in `spec.seed`; item
/// `i` uses its own random stream, so the result does not depend on `exec`.
pub fn simulate_corpus(spec: &GeneratorSpec, exec: Execution) -> Result<(Corpus, TruthRecord)> {
    spec.validate()?;
    let grid = TimeGrid::new(spec.t_len)?;
    let mean = spec.mean.evaluate(grid)?;
    let k = spec.k();
    let basis = make_basis(spec.t_len, k, spec.basis)?;
    let cumulative: Vec<f64> = spec
        .archetypes
        .iter()
        .scan(0.0, |acc, a| {
            *acc += a.weight;
            Some(*acc)
        })
        .collect();
    let sds: Vec<Normal<f64>> = spec
        .eigenvalues
        .iter()
        .map(|&l| Normal::new(0.0, l.sqrt()).expect("validated variance"))
        .collect();

    let draws = map_indexed(exec, spec.n, |i| -> Result<(usize, Vec<f64>, Vec<u64>)> {
        let mut rng = substream(spec.seed, i as u64);
        let u: f64 = rng.random();
        let arch = cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1);
        let xi: Vec<f64> = (0..k)
            .map(|l| spec.archetypes[arch].shift[l] + sds[l].sample(&mut rng))
            .collect();
        let mut counts = Vec::with_capacity(spec.t_len);
        for j in 0..spec.t_len {
            let eta = mean[j] + (0..k).map(|l| xi[l] * basis[l][j]).sum::<f64>();
            if eta > ETA_MAX {
                return Err(Error::Config(format!(
                    "generator spec rejected: item {i} reaches log-intensity {eta:.2} > {ETA_MAX} in year {}",
                    j + 1
                )));
            }
            let y = Poisson::new(eta.exp()).map(|p| p.sample(&mut rng) as u64).unwrap_or(0);
            counts.push(y);
        }
        Ok((arch, xi, counts))
    });

    let (values, functions, rotation, sbar) = population_eigen(spec, &basis)?;
    let mut ids = Vec::with_capacity(spec.n);
    let mut items = Vec::with_capacity(spec.n);
    let mut archetypes = Vec::with_capacity(spec.n);
    let mut coordinates = Vec::with_capacity(spec.n);
    let mut population_scores = Vec::with_capacity(spec.n);
    for (i, draw) in draws.into_iter().enumerate() {
        let (arch, xi, counts) = draw?;
        let id = format!("syn{i:05}");
        let centred: Vec<f64> = xi.iter().zip(&sbar).map(|(x, s)| x - s).collect();
        population_scores.push(rotation.iter().map(|u| dot(u, &centred)).collect());
        items.push(CountTrajectory::new(id.clone(), counts));
        ids.push(id);
        archetypes.push(arch);
        coordinates.push(xi);
    }
    let corpus = Corpus::new(grid, items)?.with_provenance(format!("synthetic (seed {})", spec.seed));
    Ok((
        corpus,
        TruthRecord {
            spec: spec.clone(),
            ids,
            archetypes,
            mean,
            basis,
            coordinates,
            population_eigenvalues: values,
            population_eigenfunctions: functions,
            population_scores,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// Per component: `min_s sqrt(mean_j (phi_hat - s phi)^2)`.
    pub eigenfunction_rms: Vec<f64>,
    pub max_rms: f64,
    /// The sign `s` chosen for each component.
    pub signs: Vec<f64>,
    /// Pearson correlation of estimated and true scores, after sign alignment.
    pub score_correlations: Vec<f64>,
    pub adjusted_rand: Option<f64>,
}

/// Compare an estimated basis, score fits and (optionally) a clustering with
/// the truth. Fits and clusters are matched to the truth by id.
pub fn recovery_report(
    truth: &TruthRecord,
    basis: &LatentBasis,
    fits: &[PaperFit],
    clusters: Option<&ClusterModel>,
) -> Result<RecoveryReport> {
    let index: std::collections::BTreeMap<&str, usize> =
        truth.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let unknown: Vec<String> = fits
        .iter()
        .map(|f| f.id.as_str())
        .filter(|id| !index.contains_key(id))
        .map(str::to_string)
        .collect();
    if !unknown.is_empty() {
        return Err(Error::IdMismatch(unknown));
    }
    if basis.t_len() != truth.mean.len() {
        return Err(Error::GridMismatch {
            expected: truth.mean.len(),
            found: basis.t_len(),
        });
    }
    let k = basis.k().min(truth.population_eigenfunctions.len());
    let mut rms = Vec::with_capacity(k);
    let mut signs = Vec::with_capacity(k);
    for c in 0..k {
        let est = &basis.eigenfunctions[c];
        let tru = &truth.population_eigenfunctions[c];
        let err =
            |s: f64| (est.iter().zip(tru).map(|(a, b)| (a - s * b).powi(2)).sum::<f64>() / est.len() as f64).sqrt();
        let (plus, minus) = (err(1.0), err(-1.0));
        if plus <= minus {
            rms.push(plus);
            signs.push(1.0);
        } else {
            rms.push(minus);
            signs.push(-1.0);
        }
    }
    let score_correlations = (0..k)
        .map(|c| {
            let est: Vec<f64> = fits.iter().map(|f| f.scores[c]).collect();
            let tru: Vec<f64> = fits
                .iter()
                .map(|f| truth.population_scores[index[f.id.as_str()]][c])
                .collect();
            signs[c] * pearson(&est, &tru)
        })
        .collect();
    let adjusted_rand = match clusters {
        None => None,
        Some(model) => {
            let truth_labels: Vec<usize> = if model.ids.is_empty() {
                if model.assignments.len() != truth.archetypes.len() {
                    return Err(Error::InvalidInput(
                        "cluster model without ids must cover every item".into(),
                    ));
                }
                truth.archetypes.clone()
            } else {
                let missing: Vec<String> = model
                    .ids
                    .iter()
                    .filter(|id| !index.contains_key(id.as_str()))
                    .cloned()
                    .collect();
                if !missing.is_empty() {
                    return Err(Error::IdMismatch(missing));
                }
                model
                    .ids
                    .iter()
                    .map(|id| truth.archetypes[index[id.as_str()]])
                    .collect()
            };
            Some(adjusted_rand_index(&model.assignments, &truth_labels))
        }
    };
    Ok(RecoveryReport {
        max_rms: rms.iter().copied().fold(0.0, f64::max),
        eigenfunction_rms: rms,
        signs,
        score_correlations,
        adjusted_rand,
    })
}

/// A [`LatentBasis`] holding the generator's population eigenbasis, with the
/// mean shifted by the average archetype offset.
pub fn truth_basis(truth: &TruthRecord) -> LatentBasis {
    let k = truth.basis.len();
    let sbar: Vec<f64> = (0..k)
        .map(|l| truth.spec.archetypes.iter().map(|a| a.weight * a.shift[l]).sum())
        .collect();
    let mean: Vec<f64> = (0..truth.mean.len())
        .map(|j| truth.mean[j] + (0..k).map(|l| sbar[l] * truth.basis[l][j]).sum::<f64>())
        .collect();
    let total: f64 = truth.population_eigenvalues.iter().sum();
    let mut acc = 0.0;
    let fve = truth
        .population_eigenvalues
        .iter()
        .map(|v| {
            acc += v;
            if total > 0.0 {
                acc / total
            } else {
                1.0
            }
        })
        .collect();
    LatentBasis {
        grid: TimeGrid::new(truth.mean.len()).expect("validated grid"),
        mean_derivative: vec![0.0; truth.mean.len()],
        mean,
        mean_bandwidth: 0.0,
        eigenvalues: truth.population_eigenvalues.clone(),
        eigenfunctions: truth.population_eigenfunctions.clone(),
        fve,
    }
}
