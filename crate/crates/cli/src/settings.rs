//! Run settings: command-line flags over a `key=value` config file over
//! built-in defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use hinge_qe::autodiff::AdamConfig;
use hinge_qe::corpus::{LabelColumns, Task};
use hinge_qe::metrics::F1Averaging;
use hinge_qe::model::ModelConfig;
use hinge_qe::train::TrainConfig;

fn parse_task(s: &str) -> Result<Task, String> {
    Task::from_id(s).ok_or_else(|| format!("unknown task {:?} (expected avg-rating or disagreement)", s))
}

fn parse_averaging(s: &str) -> Result<F1Averaging, String> {
    F1Averaging::from_id(s).ok_or_else(|| format!("unknown F1 averaging {:?} (expected macro or weighted)", s))
}

/// Flags shared by every subcommand. Each one, when given, overrides the
/// same key in `--config`.
#[derive(Args, Debug, Default, Clone)]
pub struct Flags {
    /// key=value file supplying any of the settings below (keys use
    /// underscores, e.g. `max_len=30`); a run manifest works here too
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_task)]
    pub task: Option<Task>,
    #[arg(long, value_name = "PATH")]
    pub train: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub val: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub test: Option<PathBuf>,
    /// Unlabelled rows for `predict`
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// English word vectors (GloVe text format)
    #[arg(long, value_name = "PATH")]
    pub emb_en: Option<PathBuf>,
    /// Hindi word vectors (GloVe text format)
    #[arg(long, value_name = "PATH")]
    pub emb_hi: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub hidden2: Option<usize>,
    #[arg(long)]
    pub dense: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub min_count: Option<u64>,
    #[arg(long, value_parser = parse_averaging)]
    pub f1_averaging: Option<F1Averaging>,
    /// Label columns are the two raw annotator ratings
    #[arg(long)]
    pub raw_ratings: bool,
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Output directory (`train`) or file (`evaluate`, `predict`)
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct Settings {
    /// `None` when neither flag nor file chose a task; commands that load a
    /// checkpoint then use the checkpoint's task.
    pub task: Option<Task>,
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub emb_en: Option<PathBuf>,
    pub emb_hi: Option<PathBuf>,
    pub model: ModelConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub patience: usize,
    pub clip_norm: f64,
    pub min_count: u64,
    pub f1_averaging: F1Averaging,
    pub raw_ratings: bool,
    pub checkpoint: PathBuf,
    pub out: Option<PathBuf>,
}

const KEYS: [&str; 23] = [
    "task",
    "train",
    "val",
    "test",
    "input",
    "emb_en",
    "emb_hi",
    "dim",
    "hidden",
    "hidden2",
    "dense",
    "max_len",
    "batch_size",
    "epochs",
    "lr",
    "seed",
    "patience",
    "clip_norm",
    "min_count",
    "f1_averaging",
    "raw_ratings",
    "checkpoint",
    "out",
];

/// Reads `key=value` lines. Blank lines and lines starting with `#` are
/// skipped; `-` in keys is read as `_`.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("config {}", path.display()))
}

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected key=value", i + 1))?;
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            bail!("line {}: unknown key {:?}", i + 1, key);
        }
        map.insert(key, value.trim().to_owned());
    }
    Ok(map)
}

struct Layer<'a>(&'a BTreeMap<String, String>);

impl Layer<'_> {
    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.0.get(key).map(|v| v.parse::<T>().map_err(|e| anyhow!("{}={}: {}", key, v, e))).transpose()
    }

    fn with<T>(&self, key: &str, f: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>> {
        self.0.get(key).map(|v| f(v).map_err(|e| anyhow!("{}: {}", key, e))).transpose()
    }
}

impl Settings {
    pub fn resolve(flags: &Flags) -> Result<Self> {
        let file = match &flags.config {
            Some(path) => read_config_file(path)?,
            None => BTreeMap::new(),
        };
        Self::merge(flags, &file)
    }

    pub fn merge(flags: &Flags, file: &BTreeMap<String, String>) -> Result<Self> {
        let file = Layer(file);
        let defaults = TrainConfig::default();
        let d = defaults.model;
        let model = ModelConfig {
            dim: flags.dim.or(file.get("dim")?).unwrap_or(d.dim),
            hidden: flags.hidden.or(file.get("hidden")?).unwrap_or(d.hidden),
            hidden2: flags.hidden2.or(file.get("hidden2")?).unwrap_or(d.hidden2),
            dense: flags.dense.or(file.get("dense")?).unwrap_or(d.dense),
            max_len: flags.max_len.or(file.get("max_len")?).unwrap_or(d.max_len),
            hinglish_vocab: d.hinglish_vocab,
        };
        let path = |flag: &Option<PathBuf>, key: &str| -> Result<Option<PathBuf>> { Ok(flag.clone().or(file.get(key)?)) };
        Ok(Self {
            task: flags.task.or(file.with("task", parse_task)?),
            train: path(&flags.train, "train")?,
            val: path(&flags.val, "val")?,
            test: path(&flags.test, "test")?,
            input: path(&flags.input, "input")?,
            emb_en: path(&flags.emb_en, "emb_en")?,
            emb_hi: path(&flags.emb_hi, "emb_hi")?,
            model,
            batch_size: flags.batch_size.or(file.get("batch_size")?).unwrap_or(defaults.batch_size),
            epochs: flags.epochs.or(file.get("epochs")?).unwrap_or(defaults.epochs),
            lr: flags.lr.or(file.get("lr")?).unwrap_or(defaults.adam.learning_rate),
            seed: flags.seed.or(file.get("seed")?).unwrap_or(defaults.seed),
            patience: flags.patience.or(file.get("patience")?).unwrap_or(defaults.early_stop_patience),
            clip_norm: flags.clip_norm.or(file.get("clip_norm")?).unwrap_or(defaults.clip_norm),
            min_count: flags.min_count.or(file.get("min_count")?).unwrap_or(defaults.min_count),
            f1_averaging: flags.f1_averaging.or(file.with("f1_averaging", parse_averaging)?).unwrap_or_default(),
            raw_ratings: flags.raw_ratings || file.get("raw_ratings")?.unwrap_or(false),
            checkpoint: path(&flags.checkpoint, "checkpoint")?.unwrap_or_else(|| PathBuf::from("model.ckpt")),
            out: path(&flags.out, "out")?,
        })
    }

    pub fn columns(&self) -> LabelColumns {
        if self.raw_ratings {
            LabelColumns::RawRatings
        } else {
            LabelColumns::Derived
        }
    }

    pub fn train_config(&self, hinglish_vocab: usize) -> TrainConfig {
        TrainConfig {
            task: self.task.unwrap_or(Task::AverageRating),
            batch_size: self.batch_size,
            epochs: self.epochs,
            adam: AdamConfig { learning_rate: self.lr, ..AdamConfig::default() },
            seed: self.seed,
            clip_norm: self.clip_norm,
            early_stop_patience: self.patience,
            model: ModelConfig { hinglish_vocab, ..self.model },
            min_count: self.min_count,
        }
    }

    /// The resolved settings in config-file form, so the text can be fed
    /// back through `--config`.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{}={}", k, v);
        };
        put("task", self.task.unwrap_or(Task::AverageRating).id().to_owned());
        for (key, value) in [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
            ("input", &self.input),
            ("emb_en", &self.emb_en),
            ("emb_hi", &self.emb_hi),
        ] {
            if let Some(p) = value {
                put(key, p.display().to_string());
            }
        }
        let m = &self.model;
        put("dim", m.dim.to_string());
        put("hidden", m.hidden.to_string());
        put("hidden2", m.hidden2.to_string());
        put("dense", m.dense.to_string());
        put("max_len", m.max_len.to_string());
        put("batch_size", self.batch_size.to_string());
        put("epochs", self.epochs.to_string());
        put("lr", self.lr.to_string());
        put("seed", self.seed.to_string());
        put("patience", self.patience.to_string());
        put("clip_norm", self.clip_norm.to_string());
        put("min_count", self.min_count.to_string());
        put("f1_averaging", self.f1_averaging.id().to_owned());
        put("raw_ratings", self.raw_ratings.to_string());
        put("checkpoint", self.checkpoint.display().to_string());
        if let Some(out) = &self.out {
            put("out", out.display().to_string());
        }
        s
    }
}
