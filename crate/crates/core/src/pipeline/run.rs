//! Stage-by-stage orchestration over a [`ModelBody`].

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use super::config::PipelineConfig;
use super::model::{BaselineStage, FitStage, FpcaStage, ItemFit, ItemLabelRow, ModelBody, ModelFile};
use super::sensitivity::{sensitivity, SensitivityOptions};
use crate::cluster::{classify_curve, cluster, label_clusters, robustness_sweep, standardize, SweepOptions};
use crate::data::{filter_by_total, parse_corpus, Corpus, Format};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fpca::{fpca, select_k_loglik, truncate_basis, BasisPolicy, LatentBasis};
use crate::poisson::fit_corpus;
use crate::wsb::{compare_models, fit_wsb_all};

pub fn read_corpus(path: &Path) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::from(e).at_path(path))?;
    let corpus = parse_corpus(BufReader::new(file), Format::from_path(path)).map_err(|e| e.at_path(path))?;
    let name = path
        .file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    Ok(corpus.with_provenance(name))
}

/// Apply the `min_total` filter and start a model body.
pub fn ingest(config: &PipelineConfig, corpus: &Corpus) -> Result<ModelBody> {
    let s = &config.settings;
    let filtered = filter_by_total(corpus, s.min_total);
    if filtered.corpus.is_empty() {
        return Err(Error::TooFewItems { needed: 1, have: 0 }.in_stage("ingest"));
    }
    let kept: std::collections::HashSet<&str> = filtered.corpus.ids().into_iter().collect();
    let dropped = corpus
        .ids()
        .into_iter()
        .filter(|id| !kept.contains(id))
        .map(String::from)
        .collect();
    Ok(ModelBody::new(s.clone(), filtered.corpus, dropped))
}

pub fn stage_fpca(body: &mut ModelBody) -> Result<()> {
    let s = &body.settings;
    let run = || -> Result<FpcaStage> {
        let decomposition = fpca(&body.corpus, &s.bandwidth)?;
        let basis = truncate_basis(&decomposition, s.basis)?;
        Ok(FpcaStage { decomposition, basis })
    };
    body.fpca = Some(run().map_err(|e| e.in_stage("fpca"))?);
    Ok(())
}

/// Cross-validated choice of K. Skipped with a note when the corpus is too
/// small or no requested K is available.
pub fn stage_select(body: &mut ModelBody, exec: Execution) -> Result<()> {
    let available = body.fpca()?.decomposition.positive_count();
    let ks: Vec<usize> = body
        .settings
        .select_ks
        .iter()
        .copied()
        .filter(|&k| k <= available)
        .collect();
    if ks.len() < body.settings.select_ks.len() {
        body.notes.push(format!(
            "selection: only {available} positive eigenvalues; K values above that were skipped"
        ));
    }
    if ks.is_empty() || body.corpus.len() < 2 * body.settings.folds {
        body.notes
            .push("selection: skipped (too few items or components)".into());
        return Ok(());
    }
    let s = &body.settings;
    let decomp = &body.fpca()?.decomposition;
    let run = || {
        let kmax = *ks.iter().max().unwrap();
        let basis = truncate_basis(decomp, BasisPolicy::Fixed(kmax))?;
        select_k_loglik(&body.corpus, &basis, &ks, s.folds, &s.fit, exec)
    };
    let table = run().map_err(|e| e.in_stage("select"))?;
    body.selection = Some(table);
    Ok(())
}

pub fn stage_fit(body: &mut ModelBody, exec: Execution) -> Result<()> {
    let basis = &body.fpca().map_err(|e| e.in_stage("fit"))?.basis;
    let fit = fit_corpus(&body.corpus, basis, &body.settings.fit, exec).map_err(|e| e.in_stage("fit"))?;
    if !fit.failures.is_empty() {
        body.notes.push(format!(
            "fit: {} item(s) failed, e.g. {:?}",
            fit.failures.len(),
            fit.failures[0]
        ));
    }
    body.fit = Some(FitStage {
        fits: fit.fits.iter().map(ItemFit::from).collect(),
        converged: fit.converged,
        failures: fit.failures,
    });
    Ok(())
}

/// WSB fits for items with at least one count, and the comparison against
/// the Poisson fits on the items that have both.
pub fn stage_baseline(body: &mut ModelBody, exec: Execution) -> Result<()> {
    let run = || -> Result<BaselineStage> {
        let s = &body.settings;
        let fits = fit_wsb_all(body.corpus.items(), s.m_wsb, &s.wsb, exec)?;
        let wsb_ids: std::collections::HashSet<&str> = fits.iter().map(|w| w.id.as_str()).collect();
        let paper: Vec<_> = body
            .paper_fits()?
            .into_iter()
            .filter(|f| wsb_ids.contains(f.id.as_str()))
            .collect();
        let paper_ids: std::collections::HashSet<&str> = paper.iter().map(|f| f.id.as_str()).collect();
        let wsb: Vec<_> = fits
            .iter()
            .filter(|w| paper_ids.contains(w.id.as_str()))
            .cloned()
            .collect();
        let comparison = if paper.is_empty() {
            None
        } else {
            Some(compare_models(&paper, &wsb, s.eval_grid)?)
        };
        Ok(BaselineStage {
            m: s.m_wsb,
            fits,
            comparison,
        })
    };
    let stage = run().map_err(|e| e.in_stage("baseline"))?;
    if stage.comparison.is_none() {
        body.notes
            .push("baseline: no item has both fits; comparison skipped".into());
    }
    body.baseline = Some(stage);
    Ok(())
}

/// Clustering coordinates and the per-dimension scale, if standardised.
pub(crate) type Points = (Vec<Vec<f64>>, Option<Vec<f64>>);

/// Clustering coordinates for `scores`, standardised by `sqrt(lambda)` if asked.
pub(crate) fn cluster_points(scores: &[Vec<f64>], basis: &LatentBasis, standardized: bool) -> Result<Points> {
    if basis.k() == 0 {
        return Err(Error::ZeroDimensionalScores);
    }
    Ok(if standardized {
        let (p, s) = standardize(scores, &basis.eigenvalues);
        (p, Some(s))
    } else {
        (scores.to_vec(), None)
    })
}

/// Item ids alongside their clustering points.
fn fitted_points(body: &ModelBody) -> Result<(Vec<String>, Points)> {
    let fits = &body.fit()?.fits;
    let scores: Vec<Vec<f64>> = fits.iter().map(|f| f.scores.clone()).collect();
    let points = cluster_points(&scores, body.basis()?, body.settings.standardize)?;
    Ok((fits.iter().map(|f| f.id.clone()).collect(), points))
}

pub fn stage_cluster(body: &mut ModelBody, exec: Execution) -> Result<()> {
    let run = || {
        let s = &body.settings;
        let (ids, (points, scale)) = fitted_points(body)?;
        let mut model = cluster(&points, s.method, s.k_clusters, s.seed, s.restarts, exec)?;
        model.ids = ids;
        model.scale = scale;
        Ok(model)
    };
    body.cluster = Some(run().map_err(|e: Error| e.in_stage("cluster"))?);
    Ok(())
}

/// Shape labels for the primary clusters (if any) and the item taxonomy.
pub fn stage_label(body: &mut ModelBody) -> Result<()> {
    let run = |body: &mut ModelBody| -> Result<()> {
        let basis = body.basis()?.clone();
        let th = body.settings.thresholds;
        if let Some(model) = body.cluster.as_mut() {
            model.labels = label_clusters(model, &basis, &th)?;
        }
        let cluster = body.cluster.as_ref();
        let rows = body
            .fit()?
            .fits
            .iter()
            .enumerate()
            .map(|(i, f)| ItemLabelRow {
                id: f.id.clone(),
                cluster: cluster.map(|c| c.assignments[i]),
                label: classify_curve(&f.intensity(&basis), &th),
            })
            .collect();
        body.item_labels = Some(rows);
        Ok(())
    };
    run(body).map_err(|e| e.in_stage("label"))
}

pub fn stage_sweep(body: &mut ModelBody, exec: Execution) -> Result<()> {
    let run = |body: &mut ModelBody| -> Result<()> {
        let s = &body.settings;
        let (_, (points, scale)) = fitted_points(body)?;
        let n = points.len();
        let ks: Vec<usize> = s.sweep_ks.iter().copied().filter(|&k| k <= n).collect();
        if ks.is_empty() || s.sweep_methods.is_empty() {
            body.notes.push("sweep: skipped (no feasible K or no methods)".into());
            return Ok(());
        }
        let opts = SweepOptions {
            ks,
            methods: s.sweep_methods.clone(),
            seed: s.seed,
            restarts: s.restarts,
            thresholds: s.thresholds,
        };
        let report = robustness_sweep(&points, scale.as_deref(), Some(body.basis()?), &opts, exec)?;
        body.sweep = Some(report);
        Ok(())
    };
    run(body).map_err(|e| e.in_stage("sweep"))
}

/// Threshold sensitivity with the primary method and K, using the config's
/// threshold list.
pub fn stage_sensitivity(body: &mut ModelBody, exec: Execution) -> Result<()> {
    let s = &body.settings;
    let opts = SensitivityOptions {
        thresholds: s.sensitivity_thresholds.clone(),
        ks: vec![s.k_clusters],
        methods: vec![s.method],
        refit: s.sensitivity_refit,
    };
    let report = sensitivity(body, &opts, exec).map_err(|e| e.in_stage("sensitivity"))?;
    body.sensitivity = Some(report);
    Ok(())
}

/// Every stage on an in-memory corpus. The returned model is unstamped.
pub fn run_on_corpus(config: &PipelineConfig, corpus: &Corpus) -> Result<ModelFile> {
    config.validate()?;
    let exec = config.execution;
    let s = &config.settings;
    let mut body = ingest(config, corpus)?;
    stage_fpca(&mut body)?;
    if s.run_selection {
        stage_select(&mut body, exec)?;
    }
    stage_fit(&mut body, exec)?;
    if s.run_wsb {
        stage_baseline(&mut body, exec)?;
    }
    if body.basis()?.k() == 0 {
        body.notes
            .push(format!("clustering skipped: {}", Error::ZeroDimensionalScores));
    } else {
        stage_cluster(&mut body, exec)?;
    }
    stage_label(&mut body)?;
    if body.cluster.is_some() {
        if s.run_sweep {
            stage_sweep(&mut body, exec)?;
        }
        if !s.sensitivity_thresholds.is_empty() {
            stage_sensitivity(&mut body, exec)?;
        }
    }
    ModelFile::new(body)
}

/// Read `config.input` and run every stage.
pub fn run_pipeline(config: &PipelineConfig) -> Result<ModelFile> {
    let input = config
        .input
        .as_deref()
        .ok_or_else(|| Error::Config("no input path given".into()))?;
    let corpus = read_corpus(input).map_err(|e| e.in_stage("ingest"))?;
    run_on_corpus(config, &corpus)
}
