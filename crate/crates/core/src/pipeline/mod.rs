//! End-to-end orchestration, model persistence and figure output.

mod config;
mod model;
mod plots;
mod run;
mod sensitivity;
mod svg;

pub use config::{ConfigLayer, PipelineConfig, Settings};
pub use model::{
    body_checksum, load_model, save_model, BaselineStage, FitStage, FpcaStage, ItemFit, ItemLabelRow, ModelBody,
    ModelFile, SCHEMA_VERSION,
};
pub use plots::{emit_plots, render_figure, Figure, FigureOutput};
pub use run::{
    ingest, read_corpus, run_on_corpus, run_pipeline, stage_baseline, stage_cluster, stage_fit, stage_fpca,
    stage_label, stage_select, stage_sensitivity, stage_sweep,
};
pub use sensitivity::{sensitivity, SensitivityCell, SensitivityOptions, SensitivityReport, ThresholdRun};
pub use svg::{render_grid, Chart, Series, SeriesKind};
