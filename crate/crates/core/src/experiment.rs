//! Config-driven experiment runner behind the `aggmatch` command line.
//!
//! A JSON config names a dataset, a split, optional label noise, an
//! augmentation, a model, training hyperparameters, methods and seeds. Each
//! (method, seed) pair trains independently and writes a metrics CSV and a
//! checkpoint; the grid ends with a `report.json`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::aggregation::{CandidatePool, PreparedQuery, Query};
use crate::data::{
    inject_noise, load_csv, load_idx, split, synth, AugmentationSpec, Dataset, Geometry, LabeledSet, NoiseSpec, SplitSpec,
    SynthKind, SynthSpec, UnlabeledSet,
};
use crate::error::{Error, Result};
use crate::model::Architecture;
use crate::trainer::{Checkpoint, EvalMetrics, Method, StepReport, TrainConfig, Trainer};
use crate::fmt_float;

/// Environment variable that replaces `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "AGGMATCH_OUTPUT_DIR";

pub const METRICS_HEADER: &str =
    "iter,loss_sup,loss_unsup,test_acc,pl_precision,pl_recall,mean_conf,queue_fill_min,queue_fill_max,enq_accept_rate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub split: SplitConfig,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub augment: AugmentationSpec,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Methods to run; defaults to `train.method` alone.
    #[serde(default)]
    pub methods: Option<Vec<Method>>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// `n` training items plus `test_n` held-out items from one generator.
    Synth {
        kind: SynthKind,
        n: usize,
        test_n: usize,
        classes: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        noise: f64,
        #[serde(default = "default_spread")]
        spread: f64,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

fn default_dim() -> usize {
    2
}

fn default_spread() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub labels_per_class: usize,
    /// Run seed `s` splits with `seed + s`.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: vec![64, 64] }
    }
}

impl ExperimentConfig {
    /// Parses JSON text after applying `key=value` dotted-path overrides.
    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: Self = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text, overrides)?;
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            cfg.output_dir = PathBuf::from(dir);
        }
        Ok(cfg)
    }

    /// Range checks that need no data.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds: at least one seed is required".into()));
        }
        if self.split.labels_per_class == 0 {
            return Err(Error::Config("split.labels_per_class must be positive".into()));
        }
        if self.model.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("model.hidden: layer widths must be positive".into()));
        }
        if let Some(methods) = &self.methods {
            if methods.is_empty() {
                return Err(Error::Config("methods: list is empty".into()));
            }
        }
        if let DatasetConfig::Synth { n, test_n, classes, noise, .. } = &self.dataset {
            if *test_n == 0 || *n < *classes || *classes == 0 {
                return Err(Error::Config("dataset: need test_n > 0 and n >= classes > 0".into()));
            }
            if !(*noise >= 0.0) {
                return Err(Error::Config("dataset.noise must be non-negative".into()));
            }
        }
        if let Some(noise) = &self.noise {
            if !(0.0..=1.0).contains(&noise.rate) {
                return Err(Error::Config(format!("noise.rate must lie in [0, 1], got {}", noise.rate)));
            }
        }
        self.train.validate().map_err(|e| Error::Config(format!("train: {e}")))?;
        // Geometry is only known once data is loaded; check ranges against a stand-in.
        let geometry = match self.augment {
            AugmentationSpec::Grid { .. } => Geometry::Grid { height: 1, width: 1 },
            AugmentationSpec::Vector { .. } => Geometry::Vector,
        };
        self.augment.validate(geometry).map_err(|e| Error::Config(format!("augment: {e}")))
    }

    pub fn methods(&self) -> Vec<Method> {
        self.methods.clone().unwrap_or_else(|| vec![self.train.method])
    }

    /// JSON form with every default filled in; loading it reproduces `self`.
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

impl ExperimentConfig {
    /// Four 32-dimensional Gaussian blobs, 4000 training and 1000 test items,
    /// four labels per class, default training settings and five seeds.
    pub fn blobs_benchmark(output_dir: impl Into<PathBuf>) -> Self {
        Self {
            dataset: DatasetConfig::Synth {
                kind: SynthKind::Blobs,
                n: 4000,
                test_n: 1000,
                classes: 4,
                dim: 32,
                noise: 0.3,
                spread: 1.0,
                seed: 0,
            },
            split: SplitConfig { labels_per_class: 4, seed: 0 },
            noise: None,
            augment: AugmentationSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            methods: None,
            seeds: vec![0, 1, 2, 3, 4],
            output_dir: output_dir.into(),
        }
    }
}

/// Sets `a.b.c=value`; the value is parsed as JSON, falling back to a string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let assignment = assignment.trim_start_matches("--");
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        if key.is_empty() {
            return Err(Error::Config(format!("override `{path}` has an empty key")));
        }
        let Value::Object(map) = node else {
            return Err(Error::Config(format!("override `{path}`: `{}` is not an object", keys[..i].join("."))));
        };
        if i + 1 == keys.len() {
            map.insert((*key).to_string(), value);
            return Ok(());
        }
        let next = map.entry((*key).to_string()).or_insert_with(|| Value::Object(Default::default()));
        if next.is_null() {
            *next = Value::Object(Default::default());
        }
        node = next;
    }
    unreachable!("split yields at least one key")
}

/// Data and model shape for one seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub labeled: LabeledSet,
    pub unlabeled: UnlabeledSet,
    pub test: LabeledSet,
    pub arch: Architecture,
}

fn load_dataset(cfg: &DatasetConfig) -> Result<(Dataset, LabeledSet)> {
    match cfg {
        DatasetConfig::Synth { kind, n, test_n, classes, dim, noise, spread, seed } => {
            let spec = SynthSpec { kind: *kind, n: n + test_n, classes: *classes, dim: *dim, noise: *noise, spread: *spread, seed: *seed };
            let all = synth(&spec)?;
            let geometry = all.geometry();
            let xs = all.instances();
            let ys = all.labels();
            let train = Dataset::new(xs[..*n].to_vec(), ys[..*n].to_vec(), *classes, geometry)?;
            let test = Dataset::new(xs[*n..].to_vec(), ys[*n..].to_vec(), *classes, geometry)?.into_labeled()?;
            Ok((train, test))
        }
        DatasetConfig::Csv { train, test } => Ok((load_csv(train)?, load_csv(test)?.into_labeled()?)),
        DatasetConfig::Idx { train_images, train_labels, test_images, test_labels } => {
            Ok((load_idx(train_images, Some(train_labels))?, load_idx(test_images, Some(test_labels))?.into_labeled()?))
        }
    }
}

/// Loads, splits and corrupts the data for run seed `seed`.
pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<Prepared> {
    let (train, test) = load_dataset(&cfg.dataset)?;
    let classes = train.classes().max(test.classes());
    let train = Dataset::new(train.instances().to_vec(), train.labels().to_vec(), classes, train.geometry())?;
    let test = LabeledSet::new(test.instances().to_vec(), test.labels().to_vec(), classes, test.geometry())?;
    let (dim, geometry) = (train.dim(), train.geometry());
    if dim != test.instances()[0].len() {
        return Err(Error::Config("dataset: train and test dimensions differ".into()));
    }
    cfg.augment.validate(geometry).map_err(|e| Error::Config(format!("augment: {e}")))?;

    let (mut labeled, unlabeled) = if train.labels().iter().any(Option::is_none) {
        train.presplit()
    } else {
        let spec = SplitSpec { labels_per_class: cfg.split.labels_per_class, seed: cfg.split.seed.wrapping_add(seed) };
        split(&train, &spec).map_err(|e| Error::Config(format!("split: {e}")))?
    };
    if let Some(noise) = &cfg.noise {
        noise.validate(classes).map_err(|e| Error::Config(format!("noise: {e}")))?;
        let spec = NoiseSpec { seed: noise.seed.wrapping_add(seed), ..noise.clone() };
        labeled = inject_noise(&labeled, &spec)?;
    }
    let arch = Architecture::new(dim, cfg.model.hidden.clone(), classes)
        .map_err(|e| Error::Config(format!("model: {e}")))?;
    Ok(Prepared { labeled, unlabeled, test, arch })
}

/// Final result of one (method, seed) run.
#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub method: Method,
    pub seed: u64,
    pub final_test_accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    /// `(iteration, metrics)` at every evaluation.
    pub evaluations: Vec<(u64, EvalMetrics)>,
    pub wall_clock_seconds: f64,
}

impl RunResult {
    pub fn precision_series(&self) -> Vec<(u64, f64)> {
        self.evaluations.iter().map(|(i, m)| (*i, m.pl_precision)).collect()
    }

    pub fn recall_series(&self) -> Vec<(u64, f64)> {
        self.evaluations.iter().map(|(i, m)| (*i, m.pl_recall)).collect()
    }
}

/// Trains one method on prepared data; `observe` sees every step.
pub fn train_run<F>(cfg: &ExperimentConfig, method: Method, seed: u64, data: &Prepared, mut observe: F) -> Result<(RunResult, Trainer)>
where
    F: FnMut(&StepReport, Option<&EvalMetrics>) -> Result<()>,
{
    let start = Instant::now();
    let train = TrainConfig { method, seed, ..cfg.train.clone() };
    let mut trainer = Trainer::new(train, data.arch.clone(), cfg.augment, data.labeled.clone(), &data.unlabeled)?;
    let mut evaluations = Vec::new();
    let last = trainer.fit(&data.test, &data.unlabeled, |r, m| {
        if let Some(m) = m {
            evaluations.push((r.iteration, m.clone()));
        }
        observe(r, m)
    })?;
    let result = RunResult {
        method,
        seed,
        final_test_accuracy: last.test_accuracy,
        per_class_accuracy: last.per_class_accuracy,
        evaluations,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((result, trainer))
}

/// How a run can fail.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training aborted; diagnostics written to {}", path.display())]
    Aborted { path: PathBuf },
    #[error(transparent)]
    Other(#[from] Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Aborted { .. } => 3,
            RunError::Other(_) => 1,
        }
    }
}

fn classify(e: Error) -> RunError {
    match e {
        Error::Config(msg) => RunError::Config(msg),
        other => RunError::Other(other),
    }
}

pub fn metrics_path(dir: &Path, method: Method, seed: u64) -> PathBuf {
    dir.join(format!("metrics_{}_{seed}.csv", method.as_str()))
}

pub fn checkpoint_path(dir: &Path, method: Method, seed: u64) -> PathBuf {
    dir.join(format!("checkpoint_{}_{seed}.ckpt", method.as_str()))
}

fn csv_float(x: f64) -> String {
    fmt_float(x)
}

fn metrics_row(r: &StepReport, m: Option<&EvalMetrics>) -> String {
    let mut cols = vec![r.iteration.to_string(), csv_float(r.loss_sup), csv_float(r.loss_unsup)];
    match m {
        Some(m) => cols.extend([m.test_accuracy, m.pl_precision, m.pl_recall].map(csv_float)),
        None => cols.extend(["", "", ""].map(String::from)),
    }
    cols.push(csv_float(r.mean_confidence));
    cols.push(r.queue_fill.iter().min().copied().unwrap_or(0).to_string());
    cols.push(r.queue_fill.iter().max().copied().unwrap_or(0).to_string());
    let attempts = r.enqueued + r.rejected;
    cols.push(if attempts == 0 { csv_float(f64::NAN) } else { csv_float(r.enqueued as f64 / attempts as f64) });
    cols.join(",")
}

/// Runs one (method, seed) pair and writes its metrics CSV and checkpoint.
pub fn run_one(cfg: &ExperimentConfig, method: Method, seed: u64) -> std::result::Result<RunResult, RunError> {
    let data = prepare(cfg, seed).map_err(classify)?;
    let dir = &cfg.output_dir;
    let mut csv = BufWriter::new(File::create(metrics_path(dir, method, seed)).map_err(Error::from)?);
    writeln!(csv, "{METRICS_HEADER}").map_err(Error::from)?;
    let outcome = train_run(cfg, method, seed, &data, |r, m| {
        writeln!(csv, "{}", metrics_row(r, m))?;
        Ok(())
    });
    csv.flush().map_err(Error::from)?;
    match outcome {
        Ok((result, trainer)) => {
            let mut out = BufWriter::new(File::create(checkpoint_path(dir, method, seed)).map_err(Error::from)?);
            trainer.write_checkpoint(&mut out)?;
            out.flush().map_err(Error::from)?;
            log::info!("{} seed {seed}: test accuracy {}", method.as_str(), fmt_float(result.final_test_accuracy));
            Ok(result)
        }
        Err(Error::NonFinite(diagnostic)) => {
            let path = dir.join(format!("abort_{}_{seed}.txt", method.as_str()));
            std::fs::write(&path, format!("{diagnostic}\n")).map_err(Error::from)?;
            Err(RunError::Aborted { path })
        }
        Err(e) => Err(classify(e)),
    }
}

/// Mean and sample standard deviation; the deviation is 0 for one value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Rounds to the nine significant digits used by every output.
fn r9(x: f64) -> Value {
    if x.is_finite() {
        serde_json::json!(fmt_float(x).parse::<f64>().expect("formatted float parses"))
    } else {
        Value::Null
    }
}

fn series(points: &[(u64, f64)]) -> Value {
    Value::Array(points.iter().map(|(i, v)| serde_json::json!([i, r9(*v)])).collect())
}

/// Builds `report.json` content.
pub fn report_json(cfg: &ExperimentConfig, results: &[RunResult], wall_clock: f64) -> Value {
    let runs: Vec<Value> = results
        .iter()
        .map(|r| {
            serde_json::json!({
                "method": r.method.as_str(),
                "seed": r.seed,
                "final_test_accuracy": r9(r.final_test_accuracy),
                "per_class_accuracy": r.per_class_accuracy.iter().map(|v| r9(*v)).collect::<Vec<_>>(),
                "pl_precision": series(&r.precision_series()),
                "pl_recall": series(&r.recall_series()),
                "wall_clock_seconds": r9(r.wall_clock_seconds),
            })
        })
        .collect();
    let mut summary = serde_json::Map::new();
    for method in cfg.methods() {
        let accs: Vec<f64> = results.iter().filter(|r| r.method == method).map(|r| r.final_test_accuracy).collect();
        if accs.is_empty() {
            continue;
        }
        let (mean, std) = mean_std(&accs);
        summary.insert(
            method.as_str().into(),
            serde_json::json!({ "mean_test_accuracy": r9(mean), "std_test_accuracy": r9(std), "seeds": accs.len() }),
        );
    }
    serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "wall_clock_seconds": r9(wall_clock),
        "summary": summary,
        "runs": runs,
        "config": cfg.to_json(),
    })
}

/// Runs the full method × seed grid and writes `report.json`.
pub fn run_grid(cfg: &ExperimentConfig, parallel_seeds: bool) -> std::result::Result<Vec<RunResult>, RunError> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(Error::from)?;
    let start = Instant::now();
    let mut results = Vec::new();
    for method in cfg.methods() {
        if parallel_seeds {
            let outcomes: Vec<_> = std::thread::scope(|s| {
                let handles: Vec<_> = cfg.seeds.iter().map(|&seed| s.spawn(move || run_one(cfg, method, seed))).collect();
                handles.into_iter().map(|h| h.join().expect("seed worker panicked")).collect()
            });
            for o in outcomes {
                results.push(o?);
            }
        } else {
            for &seed in &cfg.seeds {
                results.push(run_one(cfg, method, seed)?);
            }
        }
    }
    let report = report_json(cfg, &results, start.elapsed().as_secs_f64());
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(cfg.output_dir.join("report.json"), text + "\n").map_err(Error::from)?;
    Ok(results)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpKind {
    Features,
    Attention,
    Queue,
}

impl DumpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DumpKind::Features => "features",
            DumpKind::Attention => "attention",
            DumpKind::Queue => "queue",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "features" => Some(DumpKind::Features),
            "attention" => Some(DumpKind::Attention),
            "queue" => Some(DumpKind::Queue),
            _ => None,
        }
    }
}

/// Number of test items whose attention rows are dumped.
pub const ATTENTION_QUERIES: usize = 16;

/// Writes one dump from the checkpoint of `(method, seed)` and returns its path.
pub fn dump(cfg: &ExperimentConfig, what: DumpKind, method: Method, seed: u64) -> std::result::Result<PathBuf, RunError> {
    let ckpt = checkpoint_path(&cfg.output_dir, method, seed);
    let file = File::open(&ckpt).map_err(|_| RunError::Config(format!("no checkpoint at {}", ckpt.display())))?;
    let checkpoint = Checkpoint::read_from(&mut BufReader::new(file))?;
    let path = cfg.output_dir.join(format!("{}_{}_{seed}.csv", what.as_str(), method.as_str()));
    let mut out = BufWriter::new(File::create(&path).map_err(Error::from)?);
    match what {
        DumpKind::Queue => checkpoint.queue.write_csv(&mut out)?,
        DumpKind::Features => {
            let data = prepare(cfg, seed).map_err(classify)?;
            let d = checkpoint.model.architecture().feature_dim();
            let header: Vec<String> = std::iter::once("label".to_string()).chain((0..d).map(|k| format!("v{k}"))).collect();
            writeln!(out, "{}", header.join(",")).map_err(Error::from)?;
            for (x, y) in data.test.instances().iter().zip(data.test.labels()) {
                let f = checkpoint.model.forward(x)?.feature;
                let row: Vec<String> = std::iter::once(y.to_string()).chain(f.iter().map(|v| fmt_float(*v))).collect();
                writeln!(out, "{}", row.join(",")).map_err(Error::from)?;
            }
        }
        DumpKind::Attention => {
            let data = prepare(cfg, seed).map_err(classify)?;
            let entries: Vec<_> = checkpoint.queue.iter().collect();
            if entries.is_empty() {
                return Err(RunError::Config(format!("checkpoint {} holds an empty queue", ckpt.display())));
            }
            let pool = CandidatePool::new(entries.iter().map(|(_, e)| *e))?;
            let mut header = vec!["query".to_string(), "label".to_string()];
            header.extend(entries.iter().enumerate().map(|(j, (class, _))| format!("c{j}_y{class}")));
            writeln!(out, "{}", header.join(",")).map_err(Error::from)?;
            let aggregation = cfg.train.aggregation();
            for (i, (x, y)) in data.test.instances().iter().zip(data.test.labels()).take(ATTENTION_QUERIES).enumerate() {
                let o = checkpoint.model.forward(x)?;
                let q = PreparedQuery::new(&Query { feature: o.feature, distribution: o.distribution });
                let weights = pool.attention(&q, &aggregation)?;
                let row: Vec<String> =
                    [i.to_string(), y.to_string()].into_iter().chain(weights.iter().map(|w| fmt_float(*w))).collect();
                writeln!(out, "{}", row.join(",")).map_err(Error::from)?;
            }
        }
    }
    out.flush().map_err(Error::from)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "dataset": {"source": "synth", "kind": "blobs", "n": 40, "test_n": 20, "classes": 2, "dim": 3, "noise": 0.2},
        "split": {"labels_per_class": 2},
        "seeds": [0],
        "output_dir": "out"
    }"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_json(MINIMAL, &[]).unwrap();
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.methods(), vec![Method::Aggmatch]);
        assert_eq!(cfg.model.hidden, vec![64, 64]);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let overrides = vec!["--train.iterations=10".to_string(), "train.method=fixmatch".to_string()];
        let cfg = ExperimentConfig::from_json(MINIMAL, &overrides).unwrap();
        assert_eq!(cfg.train.iterations, 10);
        assert_eq!(cfg.train.method, Method::Fixmatch);
    }

    #[test]
    fn bad_override_is_config_error() {
        let err = ExperimentConfig::from_json(MINIMAL, &["train.lr".to_string()]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = ExperimentConfig::from_json(MINIMAL, &["seeds.x=1".to_string()]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn missing_dataset_names_the_field() {
        let err = ExperimentConfig::from_json(r#"{"split": {"labels_per_class": 1}, "seeds": [0], "output_dir": "x"}"#, &[])
            .unwrap_err();
        assert!(err.to_string().contains("dataset"), "{err}");
    }

    #[test]
    fn json_round_trip() {
        let cfg = ExperimentConfig::blobs_benchmark("out");
        let text = serde_json::to_string(&cfg.to_json()).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text, &[]).unwrap(), cfg);
    }

    #[test]
    fn prepare_splits_and_holds_out() {
        let cfg = ExperimentConfig::from_json(MINIMAL, &[]).unwrap();
        let data = prepare(&cfg, 0).unwrap();
        assert_eq!(data.labeled.len(), 4);
        assert_eq!(data.unlabeled.len(), 36);
        assert_eq!(data.test.len(), 20);
        assert_eq!(data.arch.input_dim, 3);
    }

    #[test]
    fn mean_std_uses_sample_deviation() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }
}
