//! `trajfda` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use trajfda::data::{write_corpus, Format};
use trajfda::pipeline::{
    emit_plots, ingest, load_model, read_corpus, run_pipeline, save_model, sensitivity, stage_baseline, stage_cluster,
    stage_fit, stage_fpca, stage_label, stage_select, stage_sweep, ConfigLayer, Figure, ModelBody, ModelFile,
    PipelineConfig, SensitivityOptions,
};
use trajfda::synth::{simulate_corpus, GeneratorSpec};
use trajfda::{Error, ErrorKind, Execution, Result};

#[derive(Parser, Debug)]
#[command(
    name = "trajfda",
    version,
    about = "Cluster count trajectories by functional Poisson regression"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Input corpus (CSV `id,y1..yT` or JSON lines `{"id":..,"counts":[..]}`).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Directory for model.json, assignments.csv and figures.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Model file; defaults to `<output-dir>/model.json`.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// TOML config file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of eigenfunctions (0 fits the mean only).
    #[arg(long, global = true, conflicts_with = "fve")]
    k_basis: Option<usize>,
    /// Choose the number of eigenfunctions by fraction of variance explained.
    #[arg(long, global = true)]
    fve: Option<f64>,
    #[arg(long, global = true)]
    k_clusters: Option<usize>,
    /// kmeans, kmedoids or ward.
    #[arg(long, global = true)]
    method: Option<String>,
    /// Drop items with fewer total counts.
    #[arg(long, global = true)]
    min_total: Option<u64>,
    /// WSB immediacy constant m.
    #[arg(long, global = true)]
    m_wsb: Option<f64>,
    /// Divide score dimension k by sqrt(lambda_k) before clustering.
    #[arg(long, global = true, action = ArgAction::SetTrue)]
    standardize: bool,
    /// Points in each goodness-of-fit density curve.
    #[arg(long, global = true)]
    eval_grid: Option<usize>,
    /// Run single-threaded.
    #[arg(long, global = true, action = ArgAction::SetTrue)]
    serial: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read and filter the corpus and start a model file.
    Ingest,
    /// Estimate the mean and eigenbasis, choose K, and fit every item.
    Fit {
        /// Skip the cross-validated choice of K.
        #[arg(long)]
        no_select: bool,
    },
    /// Fit the WSB baseline and compare goodness of fit.
    Baseline,
    /// Cluster the scores, then run the method/K robustness sweep.
    Cluster {
        #[arg(long)]
        no_sweep: bool,
    },
    /// Label clusters and items by shape; writes assignments.csv.
    Label,
    /// Re-cluster under alternative minimum-total thresholds.
    Sensitivity {
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<u64>>,
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Re-estimate basis and scores for every threshold.
        #[arg(long)]
        refit: bool,
    },
    /// Write a synthetic four-archetype corpus and its ground truth.
    Simulate {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 30)]
        t_len: usize,
        /// Corpus path; defaults to `<output-dir>/corpus.csv`. Ground truth
        /// goes next to it as `<stem>.truth.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render figures (CSV + SVG) from a saved model.
    Plot {
        /// Figure ids; default is every figure the model has data for.
        #[arg(long, value_delimiter = ',')]
        figures: Option<Vec<String>>,
    },
    /// Every stage, then assignments.csv and all figures.
    Run,
}

impl Global {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            input: self.input.clone(),
            output_dir: self.output_dir.clone(),
            execution: self.serial.then_some(Execution::Serial),
            seed: self.seed,
            k_basis: self.k_basis,
            fve: self.fve,
            k_clusters: self.k_clusters,
            method: self.method.clone(),
            min_total: self.min_total,
            m_wsb: self.m_wsb,
            standardize: self.standardize.then_some(true),
            eval_grid: self.eval_grid,
            ..Default::default()
        }
    }

    fn layers(&self) -> Result<Vec<ConfigLayer>> {
        let mut layers = Vec::new();
        if let Some(path) = &self.config {
            layers.push(ConfigLayer::from_file(path)?);
        }
        layers.push(self.layer());
        Ok(layers)
    }

    /// Defaults < config file < flags.
    fn config(&self) -> Result<PipelineConfig> {
        PipelineConfig::from_layers(&self.layers()?)
    }

    /// Settings stored in `body` < config file < flags.
    fn config_over(&self, body: &ModelBody) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig {
            settings: body.settings.clone(),
            ..Default::default()
        };
        for layer in &self.layers()? {
            cfg.apply(layer)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn model_path(&self, cfg: &PipelineConfig) -> PathBuf {
        self.model.clone().unwrap_or_else(|| cfg.output_dir.join("model.json"))
    }
}

fn save(path: &Path, body: ModelBody) -> Result<()> {
    save_model(path, &ModelFile::new(body)?.stamped())?;
    println!("model: {}", path.display());
    Ok(())
}

fn write_assignments(body: &ModelBody, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("assignments.csv");
    std::fs::write(&path, body.assignments_csv()?)?;
    println!("assignments: {}", path.display());
    Ok(())
}

/// Render `figures`; figures whose stage is missing are skipped with a note
/// unless `strict`.
fn plot(body: &ModelBody, figures: &[Figure], dir: &Path, strict: bool) -> Result<()> {
    for &fig in figures {
        match emit_plots(body, &[fig], dir) {
            Ok(paths) => paths.iter().for_each(|p| println!("figure: {}", p.display())),
            Err(Error::MissingStage(stage)) if !strict => {
                eprintln!("note: skipping figure {} (model has no `{stage}` stage)", fig.id())
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn print_notes(body: &ModelBody) {
    for note in &body.notes {
        eprintln!("note: {note}");
    }
}

fn summary(body: &ModelBody) {
    println!("items: {} (dropped {})", body.corpus.len(), body.dropped.len());
    if let Ok(b) = body.basis() {
        println!("eigenfunctions: {}", b.k());
    }
    if let Ok(sel) = body.selection() {
        println!("selection: recommended K = {}", sel.recommended_k);
    }
    if let Ok(fit) = body.fit() {
        println!(
            "fits: {} ({:.1}% converged)",
            fit.fits.len(),
            100.0 * fit.convergence_rate()
        );
    }
    if let Ok(c) = body.comparison() {
        println!(
            "median log10 MSE: fpca {:.3}, wsb {:.3}",
            c.median_log10_fpca(),
            c.median_log10_wsb()
        );
    }
    if let Ok(c) = body.cluster() {
        let labels: Vec<String> = c.labels.iter().map(|l| l.to_string()).collect();
        println!(
            "clusters: {} K={} sizes {:?} labels [{}]",
            c.method,
            c.k,
            c.cluster_sizes(),
            labels.join(", ")
        );
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Ingest => {
            let cfg = g.config()?;
            let input = cfg
                .input
                .as_deref()
                .ok_or_else(|| Error::Config("--input is required".into()))?;
            let corpus = read_corpus(input)?;
            let body = ingest(&cfg, &corpus)?;
            summary(&body);
            save(&g.model_path(&cfg), body)
        }
        Command::Simulate { n, t_len, out } => {
            let cfg = g.config()?;
            let spec = GeneratorSpec {
                n: *n,
                t_len: *t_len,
                seed: g.seed.unwrap_or(GeneratorSpec::default().seed),
                ..Default::default()
            };
            let (corpus, truth) = simulate_corpus(&spec, cfg.execution)?;
            let path = out.clone().unwrap_or_else(|| cfg.output_dir.join("corpus.csv"));
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            write_corpus(&corpus, Format::from_path(&path), std::fs::File::create(&path)?)?;
            let stem = path
                .file_stem()
                .map_or("corpus".into(), |s| s.to_string_lossy().into_owned());
            let truth_path = path.with_file_name(format!("{stem}.truth.json"));
            std::fs::write(&truth_path, serde_json::to_vec_pretty(&truth)?)?;
            println!("corpus: {} ({} items)", path.display(), corpus.len());
            println!("truth: {}", truth_path.display());
            Ok(())
        }
        Command::Run => {
            let cfg = g.config()?;
            let model = run_pipeline(&cfg)?;
            let body = &model.model;
            print_notes(body);
            summary(body);
            write_assignments(body, &cfg.output_dir)?;
            plot(body, &Figure::ALL, &cfg.output_dir.join("figures"), false)?;
            save(&g.model_path(&cfg), model.model)
        }
        cmd => {
            // Stage commands continue a saved model.
            let base = g.config()?;
            let path = g.model_path(&base);
            let mut body = load_model(&path)?.model;
            let cfg = g.config_over(&body)?;
            let exec = cfg.execution;
            body.settings = cfg.settings.clone();
            let before = body.notes.len();
            match cmd {
                Command::Fit { no_select } => {
                    stage_fpca(&mut body)?;
                    body.selection = None;
                    if !no_select && body.settings.run_selection {
                        stage_select(&mut body, exec)?;
                    }
                    stage_fit(&mut body, exec)?;
                }
                Command::Baseline => stage_baseline(&mut body, exec)?,
                Command::Cluster { no_sweep } => {
                    stage_cluster(&mut body, exec)?;
                    body.sweep = None;
                    if !no_sweep && body.settings.run_sweep {
                        stage_sweep(&mut body, exec)?;
                    }
                }
                Command::Label => {
                    stage_label(&mut body)?;
                    write_assignments(&body, &cfg.output_dir)?;
                }
                Command::Sensitivity {
                    thresholds,
                    ks,
                    methods,
                    refit,
                } => {
                    let s = &body.settings;
                    let opts = SensitivityOptions {
                        thresholds: thresholds.clone().unwrap_or_else(|| s.sensitivity_thresholds.clone()),
                        ks: ks.clone().unwrap_or_else(|| vec![s.k_clusters]),
                        methods: match methods {
                            Some(m) => m.iter().map(|m| m.parse()).collect::<Result<_>>()?,
                            None => vec![s.method],
                        },
                        refit: *refit || s.sensitivity_refit,
                    };
                    let report = sensitivity(&body, &opts, exec).map_err(|e| Error::Stage {
                        stage: "sensitivity",
                        source: Box::new(e),
                    })?;
                    for run in &report.runs {
                        for (key, cell) in &run.cells {
                            println!(
                                "threshold {} {key}: {} items, ARI vs reference {:.4}",
                                run.threshold, cell.common_items, cell.ari_vs_reference
                            );
                        }
                    }
                    body.sensitivity = Some(report);
                }
                Command::Plot { figures } => {
                    let (list, strict) = match figures {
                        Some(ids) => (ids.iter().map(|s| s.parse()).collect::<Result<Vec<Figure>>>()?, true),
                        None => (Figure::ALL.to_vec(), false),
                    };
                    return plot(&body, &list, &cfg.output_dir.join("figures"), strict);
                }
                Command::Ingest | Command::Simulate { .. } | Command::Run => unreachable!(),
            }
            body.notes[before..].iter().for_each(|n| eprintln!("note: {n}"));
            summary(&body);
            save(&path, body)
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("trajfda: error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
