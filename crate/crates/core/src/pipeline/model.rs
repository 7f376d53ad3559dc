//! The persisted model: every stage output of a run, JSON with a checksum.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::Settings;
use super::sensitivity::SensitivityReport;
use crate::cluster::{ClusterModel, ItemLabel, SweepReport};
use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::fpca::{FpcaDecomposition, LatentBasis, SelectionTable};
use crate::poisson::{fit_mse, PaperFit};
use crate::wsb::{ComparisonTable, WsbFit};

pub const SCHEMA_VERSION: u32 = 1;

/// Per-item Poisson fit. `eta` and the intensity are recomputed from the
/// basis on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFit {
    pub id: String,
    pub scores: Vec<f64>,
    pub loglik: f64,
    pub mse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub ridge: bool,
    pub max_abs_grad: f64,
}

impl From<&PaperFit> for ItemFit {
    fn from(f: &PaperFit) -> Self {
        ItemFit {
            id: f.id.clone(),
            scores: f.scores.clone(),
            loglik: f.loglik,
            mse: f.mse,
            iterations: f.iterations,
            converged: f.converged,
            ridge: f.ridge,
            max_abs_grad: f.max_abs_grad,
        }
    }
}

impl ItemFit {
    pub fn intensity(&self, basis: &LatentBasis) -> Vec<f64> {
        basis.eta(&self.scores).into_iter().map(f64::exp).collect()
    }

    pub fn to_paper_fit(&self, basis: &LatentBasis) -> PaperFit {
        let eta = basis.eta(&self.scores);
        let intensity = eta.iter().map(|e| e.exp()).collect();
        PaperFit {
            id: self.id.clone(),
            scores: self.scores.clone(),
            eta,
            intensity,
            loglik: self.loglik,
            mse: self.mse,
            iterations: self.iterations,
            converged: self.converged,
            ridge: self.ridge,
            max_abs_grad: self.max_abs_grad,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpcaStage {
    /// Full decomposition, all eigenpairs.
    pub decomposition: FpcaDecomposition,
    /// The retained basis used for fitting.
    pub basis: LatentBasis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitStage {
    pub fits: Vec<ItemFit>,
    pub converged: usize,
    /// `(id, message)` for items whose fit raised an error.
    pub failures: Vec<(String, String)>,
}

impl FitStage {
    pub fn convergence_rate(&self) -> f64 {
        let total = self.fits.len() + self.failures.len();
        if total == 0 {
            1.0
        } else {
            self.converged as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineStage {
    pub m: f64,
    pub fits: Vec<WsbFit>,
    /// Absent when no item has both fits.
    pub comparison: Option<ComparisonTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemLabelRow {
    pub id: String,
    pub cluster: Option<usize>,
    pub label: ItemLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBody {
    /// Echo of every setting that influenced the outputs.
    pub settings: Settings,
    /// Items after the `min_total` filter.
    pub corpus: Corpus,
    /// Ids removed by the `min_total` filter.
    pub dropped: Vec<String>,
    pub fpca: Option<FpcaStage>,
    pub selection: Option<SelectionTable>,
    pub fit: Option<FitStage>,
    pub baseline: Option<BaselineStage>,
    /// Primary clustering, labelled once the label stage ran.
    pub cluster: Option<ClusterModel>,
    pub item_labels: Option<Vec<ItemLabelRow>>,
    pub sweep: Option<SweepReport>,
    pub sensitivity: Option<SensitivityReport>,
    /// Human-readable remarks about skipped or degraded stages.
    pub notes: Vec<String>,
}

impl ModelBody {
    pub fn new(settings: Settings, corpus: Corpus, dropped: Vec<String>) -> Self {
        ModelBody {
            settings,
            corpus,
            dropped,
            fpca: None,
            selection: None,
            fit: None,
            baseline: None,
            cluster: None,
            item_labels: None,
            sweep: None,
            sensitivity: None,
            notes: Vec::new(),
        }
    }

    pub fn fpca(&self) -> Result<&FpcaStage> {
        self.fpca.as_ref().ok_or(Error::MissingStage("fpca"))
    }

    pub fn basis(&self) -> Result<&LatentBasis> {
        Ok(&self.fpca()?.basis)
    }

    pub fn fit(&self) -> Result<&FitStage> {
        self.fit.as_ref().ok_or(Error::MissingStage("fit"))
    }

    pub fn selection(&self) -> Result<&SelectionTable> {
        self.selection.as_ref().ok_or(Error::MissingStage("select"))
    }

    pub fn baseline(&self) -> Result<&BaselineStage> {
        self.baseline.as_ref().ok_or(Error::MissingStage("baseline"))
    }

    pub fn comparison(&self) -> Result<&ComparisonTable> {
        self.baseline()?
            .comparison
            .as_ref()
            .ok_or(Error::MissingStage("baseline"))
    }

    pub fn cluster(&self) -> Result<&ClusterModel> {
        self.cluster.as_ref().ok_or(Error::MissingStage("cluster"))
    }

    /// Cluster model with labels attached.
    pub fn labelled_cluster(&self) -> Result<&ClusterModel> {
        let c = self.cluster()?;
        if c.labels.len() != c.k {
            return Err(Error::MissingStage("label"));
        }
        Ok(c)
    }

    pub fn sweep(&self) -> Result<&SweepReport> {
        self.sweep.as_ref().ok_or(Error::MissingStage("sweep"))
    }

    pub fn sensitivity(&self) -> Result<&SensitivityReport> {
        self.sensitivity.as_ref().ok_or(Error::MissingStage("sensitivity"))
    }

    /// Fitted items as full [`PaperFit`]s, intensities recomputed.
    pub fn paper_fits(&self) -> Result<Vec<PaperFit>> {
        let basis = self.basis()?;
        Ok(self.fit()?.fits.iter().map(|f| f.to_paper_fit(basis)).collect())
    }

    /// Assignments table, header `id,cluster,label,item_label`: the primary
    /// cluster and its shape label (empty without a clustering), and the
    /// item's own taxonomy label.
    pub fn assignments_csv(&self) -> Result<String> {
        let rows = self.item_labels.as_ref().ok_or(Error::MissingStage("label"))?;
        let cluster = self.cluster.as_ref();
        if cluster.is_some_and(|c| c.labels.len() != c.k) {
            return Err(Error::MissingStage("label"));
        }
        let mut s = String::from("id,cluster,label,item_label\n");
        for r in rows {
            let (c, l) = match (r.cluster, cluster) {
                (Some(a), Some(m)) => (a.to_string(), m.labels[a].to_string()),
                _ => (String::new(), String::new()),
            };
            s.push_str(&format!("{},{c},{l},{}\n", r.id, r.label));
        }
        Ok(s)
    }

    /// Recompute every item's MSE from stored scores; a cheap consistency check.
    pub fn max_mse_drift(&self) -> Result<f64> {
        let basis = self.basis()?;
        let counts: std::collections::HashMap<&str, &[u64]> = self
            .corpus
            .items()
            .iter()
            .map(|it| (it.id.as_str(), it.counts.as_slice()))
            .collect();
        Ok(self
            .fit()?
            .fits
            .iter()
            .map(|f| (fit_mse(counts[f.id.as_str()], &f.intensity(basis)) - f.mse).abs())
            .fold(0.0, f64::max))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    /// Seconds since the Unix epoch; the only field allowed to differ
    /// between identical runs.
    pub created_at: Option<u64>,
    /// SHA-256 (hex) of the compact JSON encoding of `model`.
    pub checksum: String,
    pub model: ModelBody,
}

pub fn body_checksum(body: &ModelBody) -> Result<String> {
    let bytes = serde_json::to_vec(body)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl ModelFile {
    pub fn new(model: ModelBody) -> Result<Self> {
        Ok(ModelFile {
            schema_version: SCHEMA_VERSION,
            created_at: None,
            checksum: body_checksum(&model)?,
            model,
        })
    }

    /// Stamp with the current time.
    pub fn stamped(mut self) -> Self {
        self.created_at = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs());
        self
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| Error::Checksum(format!("unreadable JSON: {e}")))?;
        let found = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Checksum("missing schema_version".into()))?;
        if found != SCHEMA_VERSION as u64 {
            return Err(Error::SchemaVersion {
                found: found as u32,
                expected: SCHEMA_VERSION,
            });
        }
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| Error::Checksum(format!("malformed model: {e}")))?;
        let actual = body_checksum(&file.model)?;
        if actual != file.checksum {
            return Err(Error::Checksum(format!(
                "expected {}, computed {actual}",
                file.checksum
            )));
        }
        Ok(file)
    }
}

pub fn save_model(path: &Path, model: &ModelFile) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, model.to_json()?).map_err(|e| Error::from(e).at_path(path))
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    ModelFile::from_json(&std::fs::read(path).map_err(|e| Error::from(e).at_path(path))?)
}
