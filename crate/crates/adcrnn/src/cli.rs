//! `adcrnn` command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use adcrnn_core::data::{Dialogue, FeatureMatrix};
use adcrnn_core::model::Modality;
use adcrnn_core::select::select_features;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::checkpoint;
use crate::config::{to_json, Preset, RunConfig};
use crate::error::{AppError, AppResult};
use crate::manifest::load_manifest;
use crate::predict::{ensemble_tables, predict_rows};
use crate::report::{self, PredictionRow};
use crate::runner::run_cv;
use crate::synth::{write_corpus, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "adcrnn", version, about = "Multimodal dementia screening from pre-extracted dialogue features")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic corpus and its manifest.
    GenSynthetic(GenArgs),
    /// One-way ANOVA screen of feature columns.
    SelectFeatures(SelectArgs),
    /// Cross-validated training.
    Train(TrainArgs),
    /// Metrics table and severity plot for labelled predictions.
    Evaluate(EvalArgs),
    /// Predictions from one checkpoint, or an ensemble of several.
    Predict(PredictArgs),
    /// Combine prediction tables by vote and median.
    Ensemble(EnsembleArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 108)]
    pub n: usize,
    #[arg(long, default_value_t = 128)]
    pub acoustic_dim: usize,
    #[arg(long, default_value_t = 1024)]
    pub textual_dim: usize,
    #[arg(long, default_value_t = 0)]
    pub pos_dim: usize,
    #[arg(long, default_value_t = 23)]
    pub hc_dim: usize,
    /// Distance between class means, in noise standard deviations.
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mmse_noise: f64,
    /// Fold assignments written to the manifest (0 for none).
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Screen the hand-crafted vectors of a dataset.
    #[arg(long, conflicts_with = "csv", required_unless_present = "csv")]
    pub manifest: Option<PathBuf>,
    /// Screen a CSV matrix: one row per sample, a label column, named feature columns.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    pub label_column: String,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModalityArg {
    Acoustic,
    Textual,
    Both,
}

impl From<ModalityArg> for Modality {
    fn from(m: ModalityArg) -> Self {
        match m {
            ModalityArg::Acoustic => Modality::Acoustic,
            ModalityArg::Textual => Modality::Textual,
            ModalityArg::Both => Modality::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetArg {
    Full,
    Toy,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Dataset manifest; may instead come from --config.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// JSON run configuration (a previous run.json replays that run).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub modality: Option<ModalityArg>,
    #[arg(long)]
    pub use_pos: bool,
    #[arg(long)]
    pub use_hc: bool,
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Fit the HC screen once on all dialogues instead of per fold.
    #[arg(long)]
    pub select_once: bool,
    /// Ignore fold assignments in the manifest.
    #[arg(long)]
    pub resplit: bool,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Labelled prediction CSV.
    #[arg(long, conflicts_with_all = ["checkpoint", "manifest"], required_unless_present = "checkpoint")]
    pub predictions: Option<PathBuf>,
    #[arg(long, num_args = 1.., requires = "manifest")]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Model name in the metrics table.
    #[arg(long, default_value = "model")]
    pub name: String,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub manifest: Option<PathBuf>,
    /// Dialogue feature files.
    #[arg(long, num_args = 1..)]
    pub input: Vec<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EnsembleArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Recorded<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    #[serde(flatten)]
    args: &'a T,
}

fn make_dir(dir: &Path) -> AppResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))
}

fn write(path: &Path, text: &str) -> AppResult<()> {
    std::fs::write(path, text).map_err(|e| AppError::io(path, e))
}

fn record<T: Serialize>(dir: &Path, command: &str, args: &T) -> AppResult<()> {
    make_dir(dir)?;
    let r = Recorded {
        command,
        version: env!("CARGO_PKG_VERSION"),
        args,
    };
    write(&dir.join("run.json"), &to_json(&r))
}

fn gen_synthetic(a: &GenArgs) -> AppResult<()> {
    record(&a.out_dir, "gen-synthetic", a)?;
    let spec = SynthSpec {
        n_dialogues: a.n,
        acoustic_dim: a.acoustic_dim,
        textual_dim: a.textual_dim,
        pos_dim: a.pos_dim,
        hc_dim: a.hc_dim,
        separation: a.separation,
        mmse_noise: a.mmse_noise,
        folds: a.folds,
        seed: a.seed,
    };
    let path = write_corpus(&a.out_dir, &spec)?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct FeatureJson {
    name: String,
    /// Null when infinite.
    f: Option<f64>,
    p: f64,
    kept: bool,
}

#[derive(Serialize)]
struct SelectionJson {
    alpha: f64,
    n_samples: usize,
    kept_indices: Vec<usize>,
    mask: Vec<bool>,
    features: Vec<FeatureJson>,
}

fn read_matrix_csv(path: &Path, label_column: &str) -> AppResult<(FeatureMatrix, Vec<usize>)> {
    let data = |e: csv::Error| AppError::Data(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(data)?;
    let headers = r.headers().map_err(data)?.clone();
    let label_at = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| AppError::Data(format!("{}: no `{label_column}` column", path.display())))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_at)
        .map(|(_, h)| h.to_owned())
        .collect();
    let mut classes: Vec<String> = Vec::new();
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec.map_err(data)?;
        let label = rec[label_at].to_owned();
        let id = classes.iter().position(|c| *c == label).unwrap_or_else(|| {
            classes.push(label);
            classes.len() - 1
        });
        labels.push(id);
        let row = rec
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != label_at)
            .map(|(_, v)| {
                v.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| {
                    AppError::Data(format!("{}: row {}: bad value `{v}`", path.display(), n + 2))
                })
            })
            .collect::<AppResult<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((FeatureMatrix::new(names, &rows)?, labels))
}

fn select(a: &SelectArgs) -> AppResult<()> {
    record(&a.out_dir, "select-features", a)?;
    if !(a.alpha > 0.0 && a.alpha <= 1.0) {
        return Err(AppError::Usage(format!("--alpha {} not in (0, 1]", a.alpha)));
    }
    let (m, labels) = match (&a.manifest, &a.csv) {
        (Some(p), _) => {
            let ds = load_manifest(p)?;
            let labels = ds
                .dialogues
                .iter()
                .map(|d| {
                    d.label_ad
                        .map(usize::from)
                        .ok_or_else(|| AppError::Data(format!("dialogue `{}` has no AD label", d.id)))
                })
                .collect::<AppResult<Vec<_>>>()?;
            (FeatureMatrix::from_hc(&ds.dialogues)?, labels)
        }
        (None, Some(p)) => read_matrix_csv(p, &a.label_column)?,
        (None, None) => return Err(AppError::Usage("pass --manifest or --csv".into())),
    };
    let r = select_features(&m, &labels, a.alpha)?;
    let mask = r.mask();
    let report = SelectionJson {
        alpha: r.alpha,
        n_samples: m.n_rows(),
        kept_indices: r.kept_indices.clone(),
        features: m
            .names()
            .iter()
            .enumerate()
            .map(|(j, name)| FeatureJson {
                name: name.clone(),
                f: r.f_values[j].is_finite().then_some(r.f_values[j]),
                p: r.p_values[j],
                kept: mask[j],
            })
            .collect(),
        mask,
    };
    write(&a.out_dir.join("selection.json"), &to_json(&report))?;
    println!("kept {} of {} features", r.kept_indices.len(), m.n_cols());
    Ok(())
}

/// Defaults, then the config file, then explicit flags.
pub fn resolve_run_config(a: &TrainArgs) -> AppResult<RunConfig> {
    let mut c = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| AppError::Usage(format!("{}: {e}", p.display())))?;
            RunConfig::from_json(&text, &p.display().to_string())?
        }
        None => RunConfig::default(),
    };
    if let Some(m) = &a.manifest {
        c.manifest = Some(m.clone());
    }
    if let Some(v) = a.folds {
        c.folds = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.modality {
        c.modality = v.into();
    }
    c.use_pos |= a.use_pos;
    c.use_hc |= a.use_hc;
    c.select_once |= a.select_once;
    c.resplit |= a.resplit;
    if let Some(p) = a.preset {
        c.model.preset = match p {
            PresetArg::Full => Preset::Full,
            PresetArg::Toy => Preset::Toy,
        };
    }
    if let Some(v) = a.epochs {
        c.train.epochs = v;
    }
    if let Some(v) = a.lr {
        c.train.lr = v;
    }
    if let Some(v) = a.batch_size {
        c.train.batch_size = v;
    }
    if let Some(v) = a.alpha {
        c.alpha = v;
    }
    if let Some(v) = a.threads {
        c.threads = v;
    }
    c.train.folds = c.folds;
    c.train.seed = c.seed;
    c.validate()?;
    if c.manifest.is_none() {
        return Err(AppError::Usage("no manifest: pass --manifest or set it in --config".into()));
    }
    Ok(c)
}

fn train_cmd(a: &TrainArgs) -> AppResult<()> {
    let cfg = resolve_run_config(a)?;
    make_dir(&a.out_dir)?;
    write(&a.out_dir.join("run.json"), &to_json(&cfg))?;
    let ds = load_manifest(cfg.manifest.as_deref().expect("resolved"))?;
    let r = run_cv(&ds, &cfg, &a.out_dir)?;
    for f in &r.folds {
        println!(
            "fold {}: accuracy {:.4} rmse {:.4} (mean-predictor {:.4}), best epoch {}",
            f.fold, f.accuracy, f.rmse, f.baseline_rmse, f.best_epoch
        );
    }
    println!(
        "mean: accuracy {:.4} rmse {:.4} (mean-predictor {:.4})",
        r.mean_accuracy, r.mean_rmse, r.mean_baseline_rmse
    );
    Ok(())
}

fn load_bundles(paths: &[PathBuf]) -> AppResult<Vec<checkpoint::Bundle>> {
    paths.iter().map(|p| checkpoint::load(p)).collect()
}

fn load_inputs(manifest: Option<&Path>, files: &[PathBuf]) -> AppResult<Vec<Dialogue>> {
    match manifest {
        Some(m) => Ok(load_manifest(m)?.dialogues),
        None => files.iter().map(|f| crate::format::read_dialogue(f)).collect(),
    }
}

fn evaluate_rows(dir: &Path, name: &str, rows: &[PredictionRow]) -> AppResult<()> {
    let (m, severity) = report::metrics(name, rows)?;
    write(&dir.join("metrics.csv"), &report::table_csv(std::slice::from_ref(&m)))?;
    write(&dir.join("metrics.json"), &to_json(&m))?;
    write(&dir.join("severity.svg"), &report::severity_svg(&severity))?;
    println!(
        "accuracy {:.4} rmse {:.4} severity agreement {:.4}",
        m.accuracy, m.rmse, m.severity_agreement
    );
    Ok(())
}

fn evaluate_cmd(a: &EvalArgs) -> AppResult<()> {
    record(&a.out_dir, "evaluate", a)?;
    let rows = match &a.predictions {
        Some(p) => report::read_predictions(p)?,
        None => {
            let bundles = load_bundles(&a.checkpoint)?;
            let rows = predict_rows(&bundles, &load_inputs(a.manifest.as_deref(), &[])?)?;
            report::write_predictions(&a.out_dir.join("predictions.csv"), &rows)?;
            rows
        }
    };
    evaluate_rows(&a.out_dir, &a.name, &rows)
}

fn predict_cmd(a: &PredictArgs) -> AppResult<()> {
    record(&a.out_dir, "predict", a)?;
    let bundles = load_bundles(&a.checkpoint)?;
    let dialogues = load_inputs(a.manifest.as_deref(), &a.input)?;
    if dialogues.is_empty() {
        return Err(AppError::Usage("no dialogue files given".into()));
    }
    let rows = predict_rows(&bundles, &dialogues)?;
    report::write_predictions(&a.out_dir.join("predictions.csv"), &rows)?;
    print!("{}", report::predictions_to_string(&rows));
    Ok(())
}

fn ensemble_cmd(a: &EnsembleArgs) -> AppResult<()> {
    record(&a.out_dir, "ensemble", a)?;
    let tables = a
        .inputs
        .iter()
        .map(|p| report::read_predictions(p))
        .collect::<AppResult<Vec<_>>>()?;
    let rows = ensemble_tables(&tables)?;
    report::write_predictions(&a.out_dir.join("ensemble.csv"), &rows)?;
    print!("{}", report::predictions_to_string(&rows));
    Ok(())
}

pub fn dispatch(cli: &Cli) -> AppResult<()> {
    match &cli.command {
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::SelectFeatures(a) => select(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Ensemble(a) => ensemble_cmd(a),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

