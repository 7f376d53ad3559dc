//! Pipeline configuration: defaults, an optional TOML file, and overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::{Method, Thresholds, DEFAULT_RESTARTS};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fpca::{BandwidthPolicy, BasisPolicy};
use crate::poisson::FitOptions;
use crate::smoothing::DEFAULT_BANDWIDTHS;
use crate::wsb::{WsbOptions, DEFAULT_M};

/// Every tunable of a run. Everything except `input`, `output_dir` and
/// `execution` is echoed into the saved model.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub execution: Execution,
    pub settings: Settings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub seed: u64,
    pub basis: BasisPolicy,
    pub bandwidth: BandwidthPolicy,
    pub k_clusters: usize,
    pub method: Method,
    pub min_total: u64,
    pub m_wsb: f64,
    pub standardize: bool,
    /// Points in each log-MSE density curve.
    pub eval_grid: usize,
    pub restarts: usize,
    pub select_ks: Vec<usize>,
    pub folds: usize,
    pub sweep_ks: Vec<usize>,
    pub sweep_methods: Vec<Method>,
    pub sensitivity_thresholds: Vec<u64>,
    /// Re-run the whole pipeline for every sensitivity threshold.
    pub sensitivity_refit: bool,
    pub thresholds: Thresholds,
    pub fit: FitOptions,
    pub wsb: WsbOptions,
    pub run_selection: bool,
    pub run_wsb: bool,
    pub run_sweep: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seed: 1,
            basis: BasisPolicy::Fixed(4),
            bandwidth: BandwidthPolicy::Gcv(DEFAULT_BANDWIDTHS.to_vec()),
            k_clusters: 4,
            method: Method::KMeans,
            min_total: 0,
            m_wsb: DEFAULT_M,
            standardize: false,
            eval_grid: 256,
            restarts: DEFAULT_RESTARTS,
            select_ks: (1..=6).collect(),
            folds: 5,
            sweep_ks: (2..=6).collect(),
            sweep_methods: Method::ALL.to_vec(),
            sensitivity_thresholds: vec![0, 10],
            sensitivity_refit: false,
            thresholds: Thresholds::default(),
            fit: FitOptions::default(),
            wsb: WsbOptions::default(),
            run_selection: true,
            run_wsb: true,
            run_sweep: true,
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            output_dir: PathBuf::from("out"),
            execution: Execution::default(),
            settings: Settings::default(),
        }
    }
}

/// One layer of optional settings, as found in a config file or on the
/// command line. Later layers win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigLayer {
    pub input: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub execution: Option<Execution>,
    pub seed: Option<u64>,
    pub k_basis: Option<usize>,
    pub fve: Option<f64>,
    pub bandwidth: Option<f64>,
    pub bandwidth_candidates: Option<Vec<f64>>,
    pub k_clusters: Option<usize>,
    pub method: Option<String>,
    pub min_total: Option<u64>,
    pub m_wsb: Option<f64>,
    pub standardize: Option<bool>,
    pub eval_grid: Option<usize>,
    pub restarts: Option<usize>,
    pub select_ks: Option<Vec<usize>>,
    pub folds: Option<usize>,
    pub sweep_ks: Option<Vec<usize>>,
    pub sweep_methods: Option<Vec<String>>,
    pub sensitivity_thresholds: Option<Vec<u64>>,
    pub sensitivity_refit: Option<bool>,
    pub evergreen_tolerance: Option<f64>,
    pub delayed_fraction: Option<f64>,
    pub flash_peak_fraction: Option<f64>,
    pub flash_tail_ratio: Option<f64>,
    pub run_selection: Option<bool>,
    pub run_wsb: Option<bool>,
    pub run_sweep: Option<bool>,
}

impl ConfigLayer {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

impl PipelineConfig {
    /// Defaults, then each layer in order.
    pub fn from_layers<'a>(layers: impl IntoIterator<Item = &'a ConfigLayer>) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for layer in layers {
            cfg.apply(layer)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, l: &ConfigLayer) -> Result<()> {
        let s = &mut self.settings;
        if let Some(v) = &l.input {
            self.input = Some(v.clone());
        }
        if let Some(v) = &l.output_dir {
            self.output_dir = v.clone();
        }
        if let Some(v) = l.execution {
            self.execution = v;
        }
        if let Some(v) = l.seed {
            s.seed = v;
        }
        match (l.k_basis, l.fve) {
            (Some(_), Some(_)) => return Err(Error::Config("set either k_basis or fve, not both".into())),
            (Some(k), None) => s.basis = BasisPolicy::Fixed(k),
            (None, Some(f)) => s.basis = BasisPolicy::Fve(f),
            (None, None) => {}
        }
        match (l.bandwidth, &l.bandwidth_candidates) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "set either bandwidth or bandwidth_candidates, not both".into(),
                ))
            }
            (Some(h), None) => s.bandwidth = BandwidthPolicy::Fixed(h),
            (None, Some(c)) => s.bandwidth = BandwidthPolicy::Gcv(c.clone()),
            (None, None) => {}
        }
        if let Some(v) = l.k_clusters {
            s.k_clusters = v;
        }
        if let Some(v) = &l.method {
            s.method = v.parse()?;
        }
        if let Some(v) = l.min_total {
            s.min_total = v;
        }
        if let Some(v) = l.m_wsb {
            s.m_wsb = v;
        }
        if let Some(v) = l.standardize {
            s.standardize = v;
        }
        if let Some(v) = l.eval_grid {
            s.eval_grid = v;
        }
        if let Some(v) = l.restarts {
            s.restarts = v;
        }
        if let Some(v) = &l.select_ks {
            s.select_ks = v.clone();
        }
        if let Some(v) = l.folds {
            s.folds = v;
        }
        if let Some(v) = &l.sweep_ks {
            s.sweep_ks = v.clone();
        }
        if let Some(v) = &l.sweep_methods {
            s.sweep_methods = v.iter().map(|m| m.parse()).collect::<Result<_>>()?;
        }
        if let Some(v) = &l.sensitivity_thresholds {
            s.sensitivity_thresholds = v.clone();
        }
        if let Some(v) = l.sensitivity_refit {
            s.sensitivity_refit = v;
        }
        if let Some(v) = l.evergreen_tolerance {
            s.thresholds.evergreen_tolerance = v;
        }
        if let Some(v) = l.delayed_fraction {
            s.thresholds.delayed_fraction = v;
        }
        if let Some(v) = l.flash_peak_fraction {
            s.thresholds.flash_peak_fraction = v;
        }
        if let Some(v) = l.flash_tail_ratio {
            s.thresholds.flash_tail_ratio = v;
        }
        if let Some(v) = l.run_selection {
            s.run_selection = v;
        }
        if let Some(v) = l.run_wsb {
            s.run_wsb = v;
        }
        if let Some(v) = l.run_sweep {
            s.run_sweep = v;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.settings;
        if s.k_clusters == 0 {
            return Err(Error::Config("k_clusters must be at least 1".into()));
        }
        if !(s.m_wsb > 0.0 && s.m_wsb.is_finite()) {
            return Err(Error::Config(format!("m_wsb must be positive, got {}", s.m_wsb)));
        }
        if let BasisPolicy::Fve(f) = s.basis {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("fve must be in [0, 1], got {f}")));
            }
        }
        match &s.bandwidth {
            BandwidthPolicy::Fixed(h) if !(*h > 0.0 && h.is_finite()) => {
                return Err(Error::Config(format!("bandwidth must be positive, got {h}")))
            }
            BandwidthPolicy::Gcv(c) if c.is_empty() || c.iter().any(|h| !(*h > 0.0 && h.is_finite())) => {
                return Err(Error::Config("bandwidth candidates must be positive".into()))
            }
            _ => {}
        }
        if s.eval_grid < 2 {
            return Err(Error::Config("eval_grid needs at least 2 points".into()));
        }
        if s.restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        if s.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if s.select_ks.contains(&0) {
            return Err(Error::Config("select_ks must be positive".into()));
        }
        if s.sweep_ks.contains(&0) {
            return Err(Error::Config("sweep_ks must be positive".into()));
        }
        let t = &s.thresholds;
        for (name, v) in [
            ("evergreen_tolerance", t.evergreen_tolerance),
            ("delayed_fraction", t.delayed_fraction),
            ("flash_peak_fraction", t.flash_peak_fraction),
            ("flash_tail_ratio", t.flash_tail_ratio),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a nonnegative number, got {v}")));
            }
        }
        Ok(())
    }
}
