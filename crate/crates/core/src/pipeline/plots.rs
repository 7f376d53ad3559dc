//! Plot-ready CSV series and SVG renderings, computed from a model alone.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::model::ModelBody;
use super::svg::{render_grid, Chart};
use crate::cluster::sq_dist;
use crate::error::{Error, Result};
use crate::fpca::LatentBasis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Figure {
    MeanDeriv,
    Eigenfunctions,
    KSelection,
    GofKde,
    GofScatter,
    ClusterCurves,
    Robustness,
    Thresholds,
    ExemplarTrajectories,
}

impl Figure {
    pub const ALL: [Figure; 9] = [
        Figure::MeanDeriv,
        Figure::Eigenfunctions,
        Figure::KSelection,
        Figure::GofKde,
        Figure::GofScatter,
        Figure::ClusterCurves,
        Figure::Robustness,
        Figure::Thresholds,
        Figure::ExemplarTrajectories,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Figure::MeanDeriv => "mean_deriv",
            Figure::Eigenfunctions => "eigenfunctions",
            Figure::KSelection => "k_selection",
            Figure::GofKde => "gof_kde",
            Figure::GofScatter => "gof_scatter",
            Figure::ClusterCurves => "cluster_curves",
            Figure::Robustness => "robustness",
            Figure::Thresholds => "thresholds",
            Figure::ExemplarTrajectories => "exemplar_trajectories",
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown figure {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FigureOutput {
    pub figure: Figure,
    pub csv: String,
    pub svg: String,
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_err = |e: csv::Error| Error::InvalidInput(format!("csv output: {e}"));
        w.write_record(&self.header).map_err(to_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(to_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidInput(format!("csv output: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn series(xs: &[f64], ys: &[f64]) -> Vec<(f64, f64)> {
    xs.iter().copied().zip(ys.iter().copied()).collect()
}

fn intensity(basis: &LatentBasis, scores: &[f64]) -> Vec<f64> {
    basis.eta(scores).into_iter().map(f64::exp).collect()
}

/// CSV and SVG for one figure.
pub fn render_figure(body: &ModelBody, figure: Figure) -> Result<FigureOutput> {
    let t = body.corpus.grid().points();
    let t_len = t.len();
    let years = |prefix: &'static str| (1..=t_len).map(move |j| format!("{prefix}{j}"));
    let (table, svg) = match figure {
        Figure::MeanDeriv => {
            let m = &body.fpca()?.decomposition.mean;
            let mut tab = Table::new(["t", "raw_mean", "mean", "derivative"]);
            for j in 0..t_len {
                tab.push(vec![
                    num(t[j]),
                    num(m.raw[j]),
                    num(m.curve.values[j]),
                    num(m.curve.derivative[j]),
                ]);
            }
            let h = m.curve.bandwidth;
            let charts = [
                Chart::new(format!("Mean of ln(y+1), bandwidth {h}"), "t", "mu(t)")
                    .scatter("raw mean", series(&t, &m.raw))
                    .line("smoothed", series(&t, &m.curve.values)),
                Chart::new("First derivative", "t", "mu'(t)").line("mu'", series(&t, &m.curve.derivative)),
            ];
            (tab, render_grid(&charts, 2))
        }
        Figure::Eigenfunctions => {
            let b = body.basis()?;
            let mut tab = Table::new(std::iter::once("t".to_string()).chain((1..=b.k()).map(|k| format!("phi{k}"))));
            for j in 0..t_len {
                tab.push(
                    std::iter::once(num(t[j]))
                        .chain(b.eigenfunctions.iter().map(|p| num(p[j])))
                        .collect(),
                );
            }
            let mut chart = Chart::new("Leading eigenfunctions", "t", "phi_k(t)");
            for (k, phi) in b.eigenfunctions.iter().enumerate() {
                chart = chart.line(format!("phi{} (FVE {:.3})", k + 1, b.fve[k]), series(&t, phi));
            }
            (tab, chart.render())
        }
        Figure::KSelection => {
            let sel = body.selection()?;
            let fve = body.fpca()?.decomposition.fve();
            let mut tab = Table::new(["k", "fve", "heldout_loglik", "aic", "insample_loglik"]);
            for r in &sel.rows {
                tab.push(vec![
                    r.k.to_string(),
                    num(fve.get(r.k - 1).copied().unwrap_or(1.0)),
                    num(r.heldout_loglik),
                    num(r.aic),
                    num(r.insample_loglik),
                ]);
            }
            let ks: Vec<f64> = sel.rows.iter().map(|r| r.k as f64).collect();
            let aic: Vec<f64> = sel.rows.iter().map(|r| r.aic).collect();
            let fv: Vec<f64> = sel
                .rows
                .iter()
                .map(|r| fve.get(r.k - 1).copied().unwrap_or(1.0))
                .collect();
            let charts = [
                Chart::new(
                    format!("Cross-validated AIC (recommended K = {})", sel.recommended_k),
                    "K",
                    "AIC",
                )
                .line("AIC", series(&ks, &aic))
                .scatter("", series(&ks, &aic)),
                Chart::new("Fraction of variance explained", "K", "FVE")
                    .line("FVE", series(&ks, &fv))
                    .scatter("", series(&ks, &fv)),
            ];
            (tab, render_grid(&charts, 2))
        }
        Figure::GofKde => {
            let c = body.comparison()?;
            let mut tab = Table::new(["x", "density_wsb", "density_fpca"]);
            for (i, &x) in c.kde_wsb.eval.iter().enumerate() {
                tab.push(vec![num(x), num(c.kde_wsb.densities[i]), num(c.kde_fpca.densities[i])]);
            }
            let chart = Chart::new("Density of log10 MSE", "log10 MSE", "density")
                .line("WSB", series(&c.kde_wsb.eval, &c.kde_wsb.densities))
                .line("functional Poisson", series(&c.kde_fpca.eval, &c.kde_fpca.densities));
            (tab, chart.render())
        }
        Figure::GofScatter => {
            let c = body.comparison()?;
            let mut tab = Table::new(["id", "log10_mse_wsb", "log10_mse_fpca"]);
            for r in &c.rows {
                tab.push(vec![r.id.clone(), num(r.log10_mse_wsb), num(r.log10_mse_fpca)]);
            }
            let pts: Vec<(f64, f64)> = c.rows.iter().map(|r| (r.log10_mse_wsb, r.log10_mse_fpca)).collect();
            let lo = pts.iter().flat_map(|p| [p.0, p.1]).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().flat_map(|p| [p.0, p.1]).fold(f64::NEG_INFINITY, f64::max);
            let chart = Chart::new(
                "Per-item fit error",
                "log10 MSE (WSB)",
                "log10 MSE (functional Poisson)",
            )
            .scatter("items", pts)
            .line("y = x", vec![(lo, lo), (hi, hi)]);
            (tab, chart.render())
        }
        Figure::ClusterCurves => {
            let c = body.labelled_cluster()?;
            let b = body.basis()?;
            let curves: Vec<Vec<f64>> = c.raw_centroids().iter().map(|x| intensity(b, x)).collect();
            let sizes = c.cluster_sizes();
            let mut tab = Table::new(
                std::iter::once("t".to_string()).chain((0..c.k).map(|i| format!("cluster{i}_{}", c.labels[i]))),
            );
            for j in 0..t_len {
                tab.push(
                    std::iter::once(num(t[j]))
                        .chain(curves.iter().map(|cv| num(cv[j])))
                        .collect(),
                );
            }
            let mut chart = Chart::new(
                format!("Cluster centroids ({}, K = {})", c.method, c.k),
                "t",
                "intensity",
            );
            for (i, cv) in curves.iter().enumerate() {
                chart = chart.line(format!("{i}: {} (n={})", c.labels[i], sizes[i]), series(&t, cv));
            }
            (tab, chart.render())
        }
        Figure::Robustness => {
            let sweep = body.sweep()?;
            let b = body.basis()?;
            let mut tab = Table::new(
                ["method", "k", "within_ss", "silhouette", "cluster", "label", "size"]
                    .into_iter()
                    .map(String::from)
                    .chain(years("y")),
            );
            let mut charts = Vec::new();
            let methods: Vec<_> = {
                let mut m: Vec<_> = sweep.cells.values().map(|c| c.method).collect();
                m.dedup();
                m.sort();
                m.dedup();
                m
            };
            let cols = sweep.cells.len() / methods.len().max(1);
            for &method in &methods {
                let mut cells: Vec<_> = sweep.cells.values().filter(|c| c.method == method).collect();
                cells.sort_by_key(|c| c.k);
                for cell in cells {
                    let m = &cell.model;
                    let sizes = m.cluster_sizes();
                    let mut chart = Chart::new(format!("{} K = {}", method, cell.k), "t", "intensity");
                    for (i, cen) in m.raw_centroids().iter().enumerate() {
                        let curve = intensity(b, cen);
                        let label = m.labels.get(i).map_or(String::new(), |l| l.to_string());
                        let mut row = vec![
                            method.to_string(),
                            cell.k.to_string(),
                            num(cell.within_ss),
                            opt(cell.silhouette),
                            i.to_string(),
                            label.clone(),
                            sizes[i].to_string(),
                        ];
                        row.extend(curve.iter().map(|&v| num(v)));
                        tab.push(row);
                        chart = chart.line(label, series(&t, &curve));
                    }
                    charts.push(chart);
                }
            }
            (tab, render_grid(&charts, cols))
        }
        Figure::Thresholds => {
            let sens = body.sensitivity()?;
            let mut tab = Table::new(
                [
                    "threshold",
                    "method",
                    "k",
                    "n_items",
                    "ari_vs_reference",
                    "evergreen_persistence",
                    "cluster",
                    "label",
                    "size",
                ]
                .into_iter()
                .map(String::from)
                .chain(years("y")),
            );
            let mut charts = Vec::new();
            for run in &sens.runs {
                for cell in run.cells.values() {
                    let mut chart = Chart::new(
                        format!(
                            "total >= {} ({} K = {}, ARI {:.3})",
                            run.threshold, cell.method, cell.k, cell.ari_vs_reference
                        ),
                        "t",
                        "intensity",
                    );
                    for (i, curve) in cell.centroid_curves.iter().enumerate() {
                        let mut row = vec![
                            run.threshold.to_string(),
                            cell.method.to_string(),
                            cell.k.to_string(),
                            run.ids.len().to_string(),
                            num(cell.ari_vs_reference),
                            opt(cell.evergreen_persistence),
                            i.to_string(),
                            cell.labels[i].to_string(),
                            cell.sizes[i].to_string(),
                        ];
                        row.extend(curve.iter().map(|&v| num(v)));
                        tab.push(row);
                        chart = chart.line(cell.labels[i].to_string(), series(&t, curve));
                    }
                    charts.push(chart);
                }
            }
            let cols = sens.runs.len().max(1);
            (tab, render_grid(&charts, cols))
        }
        Figure::ExemplarTrajectories => {
            let b = body.basis()?;
            let fits = &body.fit()?.fits;
            let picks = exemplars(body)?;
            let mut header = vec!["t".to_string()];
            for &i in &picks {
                header.push(fits[i].id.clone());
                header.push(format!("{}_fit", fits[i].id));
            }
            let counts: std::collections::HashMap<&str, &[u64]> = body
                .corpus
                .items()
                .iter()
                .map(|it| (it.id.as_str(), it.counts.as_slice()))
                .collect();
            let curves: Vec<Vec<f64>> = picks.iter().map(|&i| fits[i].intensity(b)).collect();
            let mut tab = Table::new(header);
            for j in 0..t_len {
                let mut row = vec![num(t[j])];
                for (p, &i) in picks.iter().enumerate() {
                    row.push(counts[fits[i].id.as_str()][j].to_string());
                    row.push(num(curves[p][j]));
                }
                tab.push(row);
            }
            let charts: Vec<Chart> = picks
                .iter()
                .enumerate()
                .map(|(p, &i)| {
                    let obs: Vec<f64> = counts[fits[i].id.as_str()].iter().map(|&c| c as f64).collect();
                    Chart::new(fits[i].id.clone(), "t", "annual count")
                        .scatter("observed", series(&t, &obs))
                        .line("fitted", series(&t, &curves[p]))
                })
                .collect();
            (tab, render_grid(&charts, 2))
        }
    };
    Ok(FigureOutput {
        figure,
        csv: table.to_csv()?,
        svg,
    })
}

/// Fit indices to show: the member closest to each cluster centre when a
/// clustering exists, else the four items with the largest totals.
fn exemplars(body: &ModelBody) -> Result<Vec<usize>> {
    let fits = &body.fit()?.fits;
    if let Some(c) = &body.cluster {
        let scale = c
            .scale
            .clone()
            .unwrap_or_else(|| vec![1.0; c.centroids.first().map_or(0, Vec::len)]);
        let mut best: Vec<Option<(usize, f64)>> = vec![None; c.k];
        for (i, f) in fits.iter().enumerate() {
            let a = c.assignments[i];
            let p: Vec<f64> = f.scores.iter().zip(&scale).map(|(v, s)| v / s).collect();
            let d = sq_dist(&p, &c.centroids[a]);
            if best[a].is_none_or(|(_, bd)| d < bd) {
                best[a] = Some((i, d));
            }
        }
        return Ok(best.into_iter().flatten().map(|(i, _)| i).collect());
    }
    let totals: std::collections::HashMap<&str, u64> = body
        .corpus
        .items()
        .iter()
        .map(|it| (it.id.as_str(), it.total()))
        .collect();
    let mut order: Vec<usize> = (0..fits.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(totals[fits[i].id.as_str()]));
    order.truncate(4);
    Ok(order)
}

/// Write `<id>.csv` and `<id>.svg` for each figure into `dir`.
pub fn emit_plots(body: &ModelBody, figures: &[Figure], dir: &Path) -> Result<Vec<PathBuf>> {
    let outputs = figures
        .iter()
        .map(|&f| render_figure(body, f))
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for o in outputs {
        for (ext, text) in [("csv", &o.csv), ("svg", &o.svg)] {
            let path = dir.join(format!("{}.{ext}", o.figure.id()));
            std::fs::write(&path, text)?;
            written.push(path);
        }
    }
    Ok(written)
}
