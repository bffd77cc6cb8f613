//! The `fairsketch` command line: `sketchify`, `train`, `audit`, `report`.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 numerical failure.
//! Nothing is read from the environment; every setting comes from flags or
//! the experiment config.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{self, DataError, Features, LabeledExample, SplitRatios, ZRule};
use crate::metrics::{self, FairnessReport, FprMode, MetricError, PredictionLog};
use crate::model::{self, CheckpointMeta, LabeledBatch, ModelError, OptimizerKind, TrainConfig, TrainHistory};
use crate::sketch::{self, SketchError, SketchMode, SketchParams};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("config {path}: {reason}")]
    Config { path: PathBuf, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(ModelError::NonFiniteLoss { .. }) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "fairsketch", version, about = "Fairness audit, fair training and sketch pre-processing")]
pub struct Cli {
    /// Override the seed of the experiment config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a directory of PNG/PPM images to grayscale or line sketches.
    Sketchify {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "sketch")]
        mode: SketchMode,
    },
    /// Train a classifier from the experiment config given by `--config`.
    Train {
        /// Run directory; defaults to the config's `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Audit a prediction log (CSV or JSONL).
    Audit {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 1)]
        positive_class: usize,
        #[arg(long, default_value = "standard")]
        fpr_mode: FprMode,
        #[arg(long)]
        num_classes: Option<usize>,
        /// Where to write the JSON report.
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
    /// Combine run directories into one result table.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "table.csv")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Original,
    Grayscale,
    Sketch,
}

impl Condition {
    fn as_str(self) -> &'static str {
        match self {
            Condition::Original => "original",
            Condition::Grayscale => "grayscale",
            Condition::Sketch => "sketch",
        }
    }
}

fn default_attr_label() -> String {
    "label".into()
}
fn default_attr_z() -> String {
    "z".into()
}
fn default_image_size() -> usize {
    32
}
fn default_true() -> bool {
    true
}
fn default_positive() -> usize {
    1
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    64
}

/// One experiment, as a single JSON document. Relative paths resolve against
/// the config file's directory.
///
/// Data comes either from `feature_table` (`id,label,z,f...`) or from
/// `manifest` plus `image_dir`. Images are downscaled to
/// `image_size × image_size`; unless `apply_condition` is false they are
/// first converted according to `condition`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub condition: Condition,
    #[serde(default)]
    pub feature_table: Option<PathBuf>,
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub image_dir: Option<PathBuf>,
    #[serde(default = "default_attr_label")]
    pub label_attr: String,
    #[serde(default = "default_attr_z")]
    pub z_attr: String,
    #[serde(default)]
    pub z_rule: ZRule,
    #[serde(default = "default_image_size")]
    pub image_size: usize,
    #[serde(default = "default_true")]
    pub apply_condition: bool,
    #[serde(default)]
    pub sketch: SketchParams,
    #[serde(default)]
    pub split: SplitRatios,
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub num_classes: Option<usize>,
    pub lambda: f64,
    #[serde(default)]
    pub spd_ideal: f64,
    #[serde(default = "default_positive")]
    pub positive_class: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub fpr_mode: FprMode,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Read, resolve relative paths and validate.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.feature_table,
            &mut cfg.manifest,
            &mut cfg.image_dir,
            &mut cfg.out_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate().map_err(|reason| CliError::Config {
            path: path.to_path_buf(),
            reason,
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(format!("lambda must be >= 0, got {}", self.lambda));
        }
        match (&self.feature_table, &self.manifest) {
            (Some(_), Some(_)) => return Err("set either feature_table or manifest, not both".into()),
            (None, None) => return Err("one of feature_table or manifest is required".into()),
            _ => {}
        }
        if self.manifest.is_some() && self.image_dir.is_none() {
            return Err("manifest requires image_dir".into());
        }
        for p in [&self.feature_table, &self.manifest, &self.image_dir].into_iter().flatten() {
            if !p.exists() {
                return Err(format!("{} does not exist", p.display()));
            }
        }
        if self.image_size == 0 {
            return Err("image_size must be positive".into());
        }
        self.sketch.validate().map_err(|e| e.to_string())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Contents of a run's `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub condition: Option<Condition>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub config_sha256: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub source: Option<String>,
    pub report: FairnessReport,
}

pub fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    // try_init: tests may call run() more than once in a process
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

/// Execute a parsed command line, printing to stdout.
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Sketchify { input, out, mode } => {
            let params = match &cli.config {
                Some(p) => sketch_params_from(p)?,
                None => SketchParams::default(),
            };
            cmd_sketchify(input, out, *mode, &params)
        }
        Command::Train { out } => {
            let path = cli
                .config
                .as_ref()
                .ok_or_else(|| CliError::Invalid("train needs --config <FILE>".into()))?;
            let mut cfg = ExperimentConfig::load(path)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if let Some(out) = out {
                cfg.out_dir = Some(out.clone());
            }
            cmd_train(&cfg).map(|_| ())
        }
        Command::Audit {
            log,
            positive_class,
            fpr_mode,
            num_classes,
            out,
        } => {
            let provenance = match &cli.config {
                Some(p) => Some(ExperimentConfig::load(p)?),
                None => None,
            };
            cmd_audit(log, *positive_class, *fpr_mode, *num_classes, out, provenance.as_ref(), cli.seed)
                .map(|_| ())
        }
        Command::Report { runs, out } => cmd_report(runs, out).map(|_| ()),
    }
}

fn sketch_params_from(path: &Path) -> Result<SketchParams> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let params: SketchParams = match value.get("sketch") {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?,
        None => SketchParams::default(),
    };
    params.validate()?;
    Ok(params)
}

pub fn cmd_sketchify(input: &Path, out: &Path, mode: SketchMode, params: &SketchParams) -> Result<()> {
    let manifest = sketch::sketchify_dataset(input, out, params, mode)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{} converted, {} failed, {} skipped",
        manifest.converted(),
        manifest.failed(),
        manifest.warnings.len() - manifest.failed()
    );
    Ok(())
}

/// Turn image examples into feature vectors according to the config.
fn load_examples(cfg: &ExperimentConfig) -> Result<Vec<LabeledExample>> {
    if let Some(table) = &cfg.feature_table {
        return Ok(data::load_feature_table(table)?);
    }
    let manifest = cfg.manifest.as_ref().expect("validated");
    let image_dir = cfg.image_dir.as_ref().expect("validated");
    let examples = data::load_attribute_manifest(manifest, &cfg.label_attr, &cfg.z_attr, &cfg.z_rule)?;
    let op = match (cfg.apply_condition, cfg.condition) {
        (true, Condition::Grayscale) => Some(SketchMode::Grayscale.operator(cfg.sketch)),
        (true, Condition::Sketch) => Some(SketchMode::Sketch.operator(cfg.sketch)),
        _ => None,
    };
    examples
        .into_par_iter()
        .map(|ex| {
            let Features::Image(rel) = &ex.features else {
                return Ok(ex);
            };
            let mut path = image_dir.join(rel);
            if !path.exists() {
                path.set_extension("png");
            }
            let mut img = sketch::load_image(&path)?;
            if let Some(op) = &op {
                img = op.apply(&img)?;
            }
            Ok(LabeledExample {
                features: Features::Vector(sketch::feature_vector(&img, cfg.image_size)),
                ..ex
            })
        })
        .collect()
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub out_dir: PathBuf,
    pub history: TrainHistory,
    pub report: FairnessReport,
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    let out_dir = cfg
        .out_dir
        .clone()
        .ok_or_else(|| CliError::Invalid("no run directory: set out_dir or pass --out".into()))?;
    let hash = cfg.sha256();
    let examples = load_examples(cfg)?;
    let splits = data::balanced_split(&examples, cfg.seed, cfg.split)?;
    log::info!(
        "split sizes {}/{}/{} ({} discarded)",
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        splits.discarded.len()
    );
    let train_set = LabeledBatch::from_examples(&splits.train)?;
    let num_classes = cfg
        .num_classes
        .unwrap_or_else(|| examples.iter().map(|e| e.label + 1).max().unwrap_or(2).max(2));
    let mut layer_dims = vec![train_set.features.cols];
    layer_dims.extend(&cfg.hidden);
    layer_dims.push(if num_classes == 2 { 1 } else { num_classes });
    let train_cfg = TrainConfig {
        layer_dims,
        lambda: cfg.lambda,
        spd_ideal: cfg.spd_ideal,
        positive_class: cfg.positive_class,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        seed: cfg.seed,
        optimizer: cfg.optimizer,
    };
    let val_set = LabeledBatch::from_examples(&splits.val)?;
    let (params, history) = model::train_batches(&train_set, &val_set, &train_cfg)?;

    let test_set = LabeledBatch::from_examples(&splits.test)?;
    let preds = model::predict(&params, &test_set.features)?;
    let ids: Vec<String> = splits.test.iter().map(|e| e.id.clone()).collect();
    let records = model::prediction_records(&preds, &test_set, Some(&ids));
    let log = PredictionLog::new(records, params.num_classes())?;
    let report = metrics::audit(&log, cfg.positive_class, cfg.fpr_mode)?;

    fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
    let config_path = out_dir.join("config.json");
    fs::write(&config_path, serde_json::to_string_pretty(cfg).expect("config serializes"))
        .map_err(io_err(&config_path))?;
    let mut digest = [0u8; 32];
    hex::decode_to_slice(&hash, &mut digest).expect("hex digest");
    model::save_checkpoint(
        &out_dir.join("model.ckpt"),
        &params,
        &CheckpointMeta {
            seed: cfg.seed,
            config_sha256: digest,
        },
    )?;
    write_history(&out_dir.join("history.csv"), &history, &hash, cfg.seed)?;
    write_predictions(&out_dir.join("predictions.csv"), &log, &hash, cfg.seed)?;
    let file = ReportFile {
        name: cfg.name.clone(),
        condition: Some(cfg.condition),
        lambda: Some(cfg.lambda),
        config_sha256: Some(hash),
        seed: Some(cfg.seed),
        source: Some("test split".into()),
        report: report.clone(),
    };
    write_json(&out_dir.join("report.json"), &file)?;
    print!("{}", report.render_table());
    println!("run written to {}", out_dir.display());
    Ok(TrainOutcome {
        out_dir,
        history,
        report,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,train_ce,train_fair,val_accuracy,val_spd";

/// `history.csv`: a `#` provenance line, then one row per epoch.
pub fn write_history(path: &Path, history: &TrainHistory, hash: &str, seed: u64) -> Result<()> {
    let mut s = format!("# config_sha256={hash} seed={seed}\n{HISTORY_HEADER}\n");
    for r in &history.epochs {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            r.epoch, r.train_loss, r.train_ce, r.train_fair, r.val_accuracy, r.val_spd
        )
        .expect("write to string");
    }
    fs::write(path, s).map_err(io_err(path))
}

fn write_predictions(path: &Path, log: &PredictionLog, hash: &str, seed: u64) -> Result<()> {
    let mut s = String::from("id,y_true,y_pred,z,config_sha256,seed\n");
    for r in log.records() {
        writeln!(s, "{},{},{},{},{hash},{seed}", r.id, r.y_true, r.y_pred, r.z).expect("write to string");
    }
    fs::write(path, s).map_err(io_err(path))
}

pub fn cmd_audit(
    log_path: &Path,
    positive_class: usize,
    fpr_mode: FprMode,
    num_classes: Option<usize>,
    out: &Path,
    provenance: Option<&ExperimentConfig>,
    seed: Option<u64>,
) -> Result<FairnessReport> {
    let log = data::load_prediction_log(log_path, num_classes)?;
    let report = metrics::audit(&log, positive_class, fpr_mode)?;
    print!("{}", report.render_table());
    let file = ReportFile {
        name: provenance.and_then(|c| c.name.clone()),
        condition: provenance.map(|c| c.condition),
        lambda: provenance.map(|c| c.lambda),
        config_sha256: provenance.map(ExperimentConfig::sha256),
        seed: seed.or(provenance.map(|c| c.seed)),
        source: Some(log_path.display().to_string()),
        report: report.clone(),
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    write_json(out, &file)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Result tables

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Better {
    Higher,
    Lower,
}

struct Column {
    key: String,
    title: String,
    better: Better,
}

fn column(key: &str, title: &str, better: Better) -> Column {
    let arrow = match better {
        Better::Higher => "↑",
        Better::Lower => "↓",
    };
    Column {
        key: key.into(),
        title: format!("{title} {arrow}"),
        better,
    }
}

/// Rows of a result table with per-column best flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub titles: Vec<String>,
    pub rows: Vec<ResultRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub run: String,
    pub condition: String,
    pub lambda: Option<f64>,
    pub values: Vec<f64>,
    pub best: Vec<bool>,
    pub config_sha256: String,
    pub seed: Option<u64>,
}

/// Build a table from report files. Binary runs get ACC/SPD/DEO; multiclass
/// runs get per-group precision, recall and F1 plus SPD/EOD/AOD.
pub fn build_table(runs: &[(String, ReportFile)]) -> Result<ResultTable> {
    let Some((_, first)) = runs.first() else {
        return Err(CliError::Invalid("no runs given".into()));
    };
    let binary = first.report.num_classes == 2;
    if let Some((name, _)) = runs.iter().find(|(_, r)| (r.report.num_classes == 2) != binary) {
        return Err(CliError::Invalid(format!(
            "run {name} mixes binary and multiclass reports; column sets differ"
        )));
    }
    let cols: Vec<Column> = if binary {
        vec![
            column("acc", "ACC", Better::Higher),
            column("spd", "SPD", Better::Lower),
            column("deo", "DEO", Better::Lower),
        ]
    } else {
        let mut c = Vec::new();
        for g in metrics::Group::ALL {
            c.push(column(&format!("precision_z{g}"), &format!("P(z={g})"), Better::Higher));
            c.push(column(&format!("recall_z{g}"), &format!("R(z={g})"), Better::Higher));
            c.push(column(&format!("f1_z{g}"), &format!("F1(z={g})"), Better::Higher));
        }
        c.push(column("spd", "SPD", Better::Lower));
        c.push(column("eod", "EOD", Better::Lower));
        c.push(column("aod", "AOD", Better::Lower));
        c
    };
    let mut rows: Vec<ResultRow> = runs
        .iter()
        .map(|(name, file)| {
            let r = &file.report;
            let values = if binary {
                vec![r.accuracy, r.spd, r.deo]
            } else {
                let mut v = Vec::new();
                for g in metrics::Group::ALL {
                    let prf = r.per_group.get(&g);
                    v.push(prf.map_or(f64::NAN, |p| p.precision));
                    v.push(prf.map_or(f64::NAN, |p| p.recall));
                    v.push(prf.map_or(f64::NAN, |p| p.f1));
                }
                v.extend([r.spd, r.eod, r.aod]);
                v
            };
            ResultRow {
                run: name.clone(),
                condition: file.condition.map_or("-", Condition::as_str).to_string(),
                lambda: file.lambda,
                best: vec![false; values.len()],
                values,
                config_sha256: file.config_sha256.clone().unwrap_or_default(),
                seed: file.seed,
            }
        })
        .collect();
    if rows.len() > 1 {
        for (j, col) in cols.iter().enumerate() {
            let vals = rows.iter().map(|r| r.values[j]).filter(|v| v.is_finite());
            let best = match col.better {
                Better::Higher => vals.fold(f64::NEG_INFINITY, f64::max),
                Better::Lower => vals.fold(f64::INFINITY, f64::min),
            };
            for r in &mut rows {
                r.best[j] = r.values[j] == best;
            }
        }
    }
    Ok(ResultTable {
        columns: cols.iter().map(|c| c.key.clone()).collect(),
        titles: cols.into_iter().map(|c| c.title).collect(),
        rows,
    })
}

impl ResultTable {
    pub fn to_csv(&self) -> String {
        let mut s = format!("run,condition,lambda,{},config_sha256,seed,best\n", self.columns.join(","));
        for r in &self.rows {
            let vals: Vec<String> = r.values.iter().map(|v| format!("{v:.4}")).collect();
            let best: Vec<&str> = self
                .columns
                .iter()
                .zip(&r.best)
                .filter(|(_, b)| **b)
                .map(|(c, _)| c.as_str())
                .collect();
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.run,
                r.condition,
                r.lambda.map(|l| l.to_string()).unwrap_or_default(),
                vals.join(","),
                r.config_sha256,
                r.seed.map(|v| v.to_string()).unwrap_or_default(),
                best.join(";")
            )
            .expect("write to string");
        }
        s
    }

    /// Aligned text; best cells carry a trailing `*`.
    pub fn render(&self) -> String {
        let run_w = self.rows.iter().map(|r| r.run.chars().count()).max().unwrap_or(3).max(3);
        let mut s = format!("{:<run_w$}  {:<10}{:>7}", "run", "condition", "λ");
        for t in &self.titles {
            write!(s, "{t:>12}").expect("write to string");
        }
        s.push('\n');
        for r in &self.rows {
            let lambda = r.lambda.map_or("-".to_string(), |l| format!("{l}"));
            write!(s, "{:<run_w$}  {:<10}{lambda:>7}", r.run, r.condition).expect("write to string");
            for (v, b) in r.values.iter().zip(&r.best) {
                let cell = format!("{v:.4}{}", if *b { "*" } else { " " });
                write!(s, "{cell:>12}").expect("write to string");
            }
            s.push('\n');
        }
        s
    }
}

pub fn cmd_report(runs: &[PathBuf], out: &Path) -> Result<ResultTable> {
    let mut files = Vec::with_capacity(runs.len());
    for dir in runs {
        let path = if dir.is_dir() { dir.join("report.json") } else { dir.clone() };
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let file: ReportFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        let name = file.name.clone().unwrap_or_else(|| {
            dir.file_name()
                .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned())
        });
        files.push((name, file));
    }
    let table = build_table(&files)?;
    fs::write(out, table.to_csv()).map_err(io_err(out))?;
    print!("{}", table.render());
    Ok(table)
}
