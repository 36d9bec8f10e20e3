use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use hinge_qe::autodiff::{Tensor, TensorError};
use hinge_qe::corpus::{self, Example, LabelColumns, Task, NUM_CLASSES};
use hinge_qe::metrics::{self, f1_score, published_result, F1Averaging, MetricsReport, Split};
use hinge_qe::model::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, Metadata, ModelError, ModelParams};
use hinge_qe::textprep::{build_vocab, tokenize, EmbeddingTable, EncodedExample, PipelineOptions, TextPipeline, Vocabulary};
use hinge_qe::train::{self, train_with, write_history, TrainError};
use sha2::{Digest, Sha256};

use crate::failure::{fail, ExitCode, Failure, CONFIG, DATA, NUMERICAL};
use crate::settings::Settings;

const VERSION: &str = env!("CARGO_PKG_VERSION");
const LANGUAGES: [&str; 3] = ["en", "hi", "hg"];

fn sha256_file(path: &Path) -> Result<String, Failure> {
    let mut file = File::open(path).with_context(|| format!("cannot open {}", path.display())).exit_with(DATA)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).with_context(|| format!("cannot read {}", path.display())).exit_with(DATA)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{:02x}", b)).collect())
}

fn load_examples(path: &Path, columns: LabelColumns) -> Result<Vec<Example>, Failure> {
    let read = || -> Result<Vec<Example>, corpus::CorpusError> {
        let header = corpus::detect_header(path)?;
        corpus::to_examples(&corpus::parse_dataset(path, header, columns)?)
    };
    read().with_context(|| format!("reading {}", path.display())).exit_with(DATA)
}

fn train_failure(e: TrainError) -> Failure {
    let code = match &e {
        TrainError::Config(_) => CONFIG,
        TrainError::NonFinite { .. } | TrainError::Adam(_) => NUMERICAL,
        TrainError::Model(ModelError::Tensor(TensorError::NonFinite { .. })) => NUMERICAL,
        TrainError::Model(_) => CONFIG,
        TrainError::EmptyTrainingSet | TrainError::Metrics(_) => DATA,
    };
    Failure { code, error: e.into() }
}

/// Vocabulary files live beside the checkpoint: `model.ckpt.en.vocab`, ...
fn vocab_path(checkpoint: &Path, lang: &str) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(format!(".{}.vocab", lang));
    PathBuf::from(name)
}

fn majority_class(labels: impl Iterator<Item = usize>) -> usize {
    let mut counts = [0usize; NUM_CLASSES];
    labels.for_each(|l| counts[l] += 1);
    // first index wins ties
    (0..NUM_CLASSES).fold(0, |best, c| if counts[c] > counts[best] { c } else { best })
}

fn report_text(report: &MetricsReport, task: Task, split: Split, gold: &[usize], majority: Option<usize>) -> String {
    let mut text = format!("{}\n\n{}", report, report.key_values());
    if let Some(m) = majority {
        let constant = vec![m; gold.len()];
        let baseline = f1_score(&constant, gold, F1Averaging::Weighted).unwrap_or(0.0);
        text.push_str(&format!("majority_score={}\nbaseline_f1_weighted={}\n", task.to_scale(m), baseline));
    }
    let split_name = match split {
        Split::Validation => "validation",
        Split::Test => "test",
    };
    text.push_str(&format!("\nfor comparison, the original {} {} figures:\n{}\n", task.id(), split_name, published_result(task, split)));
    text
}

pub fn train(s: &Settings) -> Result<(), Failure> {
    let Some(train_path) = &s.train else { return fail(CONFIG, "train needs --train") };
    let task = s.task.unwrap_or(Task::AverageRating);
    let columns = s.columns();
    s.train_config(2).validate().map_err(train_failure)?;
    let out_dir = s.out.clone().unwrap_or_else(|| match s.checkpoint.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    });

    let inputs = [
        ("train", Some(train_path)),
        ("val", s.val.as_ref()),
        ("test", s.test.as_ref()),
        ("emb_en", s.emb_en.as_ref()),
        ("emb_hi", s.emb_hi.as_ref()),
    ];
    let mut digests = Vec::new();
    for (key, path) in inputs {
        if let Some(path) = path {
            digests.push((key, sha256_file(path)?));
        }
    }
    fs::create_dir_all(&out_dir).with_context(|| format!("cannot create {}", out_dir.display())).exit_with(DATA)?;
    if let Some(dir) = s.checkpoint.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display())).exit_with(DATA)?;
    }
    let history_path = out_dir.join("history.tsv");
    let manifest_path = out_dir.join("manifest.txt");
    let mut manifest = format!("# hinge-qe {} run manifest; replay with `hinge-qe train --config {}`\n", VERSION, manifest_path.display());
    manifest.push_str(&s.to_config_text());
    for (key, digest) in &digests {
        manifest.push_str(&format!("# sha256 {} {}\n", key, digest));
    }
    manifest.push_str(&format!("# output history {}\n", history_path.display()));
    for lang in LANGUAGES {
        manifest.push_str(&format!("# output vocabulary {}\n", vocab_path(&s.checkpoint, lang).display()));
    }
    fs::write(&manifest_path, manifest).with_context(|| format!("cannot write {}", manifest_path.display())).exit_with(DATA)?;

    let train_set = load_examples(train_path, columns)?;
    let load_optional = |p: &Option<PathBuf>| p.as_deref().map(|p| load_examples(p, columns)).transpose().map(Option::unwrap_or_default);
    let val_set = load_optional(&s.val)?;
    let test_set = load_optional(&s.test)?;
    log::info!("{} training, {} validation, {} test rows", train_set.len(), val_set.len(), test_set.len());

    let options = PipelineOptions {
        min_count: s.min_count,
        dim: s.model.dim,
        max_len: s.model.max_len,
        seed: s.seed,
        english_vectors: s.emb_en.as_deref(),
        hindi_vectors: s.emb_hi.as_deref(),
    };
    let pipeline = TextPipeline::fit(&train_set, options).context("loading embeddings").exit_with(DATA)?;
    if s.emb_en.is_some() {
        log::info!("english vector coverage {:.3}", pipeline.english_table.coverage());
    }
    if s.emb_hi.is_some() {
        log::info!("hindi vector coverage {:.3}", pipeline.hindi_table.coverage());
    }
    let config = s.train_config(pipeline.hinglish_vocab.len());
    let train_enc = pipeline.encode_all(&train_set, task);
    let val_enc = pipeline.encode_all(&val_set, task);

    let mut history = Vec::new();
    let outcome = train_with(&config, &train_enc, &val_enc, |r| history.push(r.clone()));
    let file = File::create(&history_path).with_context(|| format!("cannot write {}", history_path.display())).exit_with(DATA)?;
    write_history(&history, BufWriter::new(file)).exit_with(DATA)?;
    let outcome = outcome.map_err(train_failure)?;

    let mut meta = Metadata::new();
    meta.insert("tool_version".into(), VERSION.into());
    meta.insert("task".into(), task.id().into());
    meta.insert("seed".into(), s.seed.to_string());
    meta.insert("min_count".into(), s.min_count.to_string());
    meta.insert("best_epoch".into(), outcome.best_epoch.to_string());
    if let Some(acc) = outcome.history[outcome.best_epoch].val_accuracy {
        meta.insert("best_val_accuracy".into(), acc.to_string());
    }
    let majority = majority_class(train_enc.iter().map(|e| e.label));
    meta.insert("majority_class".into(), majority.to_string());
    meta.insert("train.sha256".into(), digests[0].1.clone());
    let vocabs = [&pipeline.english_vocab, &pipeline.hindi_vocab, &pipeline.hinglish_vocab];
    for (lang, vocab) in LANGUAGES.iter().zip(vocabs) {
        meta.insert(format!("vocab.{}.sha256", lang), vocab.fingerprint());
    }
    let mut ckpt = Checkpoint::new(outcome.params.clone(), meta);
    for (name, table) in [("emb.en", &pipeline.english_table), ("emb.hi", &pipeline.hindi_table)] {
        let tensor = Tensor::matrix(table.rows(), table.dim(), table.values().to_vec()).exit_with(DATA)?;
        ckpt.extras.push((name.into(), tensor));
    }
    save_checkpoint(&ckpt, &s.checkpoint).with_context(|| format!("cannot write {}", s.checkpoint.display())).exit_with(DATA)?;
    for (lang, vocab) in LANGUAGES.iter().zip(vocabs) {
        let path = vocab_path(&s.checkpoint, lang);
        let write = || -> std::io::Result<()> {
            let mut w = BufWriter::new(File::create(&path)?);
            vocab.export(&mut w)?;
            w.flush()
        };
        write().with_context(|| format!("cannot write {}", path.display())).exit_with(DATA)?;
    }
    println!("checkpoint {} (best epoch {} of {})", s.checkpoint.display(), outcome.best_epoch + 1, outcome.history.len());

    if !test_set.is_empty() {
        let report = metrics::evaluate(&outcome.params, &test_set, task, &pipeline, s.f1_averaging).map_err(train_failure)?;
        let gold: Vec<usize> = test_set.iter().map(|e| task.label(e)).collect();
        let text = report_text(&report, task, Split::Test, &gold, Some(majority));
        print!("\ntest split:\n{}", text);
        let path = out_dir.join("test_report.txt");
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display())).exit_with(DATA)?;
    }
    Ok(())
}

/// A checkpoint with the vocabularies and embedding tables needed to encode
/// new text exactly as during training.
struct Bundle {
    params: ModelParams,
    pipeline: TextPipeline,
    task: Task,
    meta: Metadata,
}

fn load_bundle(s: &Settings) -> Result<Bundle, Failure> {
    let path = &s.checkpoint;
    let ckpt = load_checkpoint(path, None).map_err(|e| Failure {
        code: if matches!(e, CheckpointError::Mismatch { .. }) { CONFIG } else { DATA },
        error: anyhow::Error::new(e).context(format!("checkpoint {}", path.display())),
    })?;
    let task = match ckpt.meta.get("task").and_then(|t| Task::from_id(t)) {
        Some(t) => t,
        None => return fail(DATA, format!("checkpoint {} does not record its task", path.display())),
    };
    if let Some(requested) = s.task.filter(|t| *t != task) {
        return fail(CONFIG, format!("--task {} does not match the checkpoint's task {}", requested.id(), task.id()));
    }
    let read_vocab = |lang: &str| -> Result<Vocabulary, Failure> {
        let vpath = vocab_path(path, lang);
        let file = File::open(&vpath).with_context(|| format!("cannot open vocabulary {}", vpath.display())).exit_with(DATA)?;
        let vocab = Vocabulary::import(BufReader::new(file)).with_context(|| format!("reading {}", vpath.display())).exit_with(DATA)?;
        ckpt.require(&format!("vocab.{}.sha256", lang), &vocab.fingerprint())
            .with_context(|| format!("vocabulary {} does not belong to this checkpoint", vpath.display()))
            .exit_with(CONFIG)?;
        Ok(vocab)
    };
    let [english_vocab, hindi_vocab, hinglish_vocab] = [read_vocab("en")?, read_vocab("hi")?, read_vocab("hg")?];
    let config = ckpt.params.config;
    let table = |name: &str, vocab: &Vocabulary| -> Result<EmbeddingTable, Failure> {
        let Some(t) = ckpt.extra(name) else { return fail(DATA, format!("checkpoint lacks the {} table", name)) };
        let (rows, dim) = t.as_matrix_dims();
        if t.rank() != 2 || rows != vocab.len() || dim != config.dim {
            return fail(
                CONFIG,
                format!("{} is {}x{} but the vocabulary has {} entries at dimension {}", name, rows, dim, vocab.len(), config.dim),
            );
        }
        Ok(EmbeddingTable::from_rows(dim, t.data().to_vec()))
    };
    let english_table = table("emb.en", &english_vocab)?;
    let hindi_table = table("emb.hi", &hindi_vocab)?;
    if hinglish_vocab.len() != config.hinglish_vocab {
        return fail(
            CONFIG,
            format!("hinglish vocabulary has {} entries, checkpoint expects {}", hinglish_vocab.len(), config.hinglish_vocab),
        );
    }
    let pipeline = TextPipeline { english_vocab, hindi_vocab, hinglish_vocab, english_table, hindi_table, max_len: config.max_len };
    Ok(Bundle { params: ckpt.params, pipeline, task, meta: ckpt.meta })
}

pub fn evaluate(s: &Settings) -> Result<(), Failure> {
    let (path, split) = match (&s.test, &s.val) {
        (Some(p), _) => (p, Split::Test),
        (None, Some(p)) => (p, Split::Validation),
        (None, None) => return fail(CONFIG, "evaluate needs --test or --val"),
    };
    let bundle = load_bundle(s)?;
    let examples = load_examples(path, s.columns())?;
    if examples.is_empty() {
        return fail(DATA, format!("{} has no rows to evaluate", path.display()));
    }
    let task = bundle.task;
    let report = metrics::evaluate(&bundle.params, &examples, task, &bundle.pipeline, s.f1_averaging).map_err(train_failure)?;
    let gold: Vec<usize> = examples.iter().map(|e| task.label(e)).collect();
    let majority = bundle.meta.get("majority_class").and_then(|m| m.parse().ok()).filter(|m| *m < NUM_CLASSES);
    let text = report_text(&report, task, split, &gold, majority);
    print!("{}", text);
    if let Some(out) = &s.out {
        fs::write(out, &text).with_context(|| format!("cannot write {}", out.display())).exit_with(DATA)?;
    }

    // Scored on its own training file, a model should do at least as well
    // as it did on validation data.
    if let (Some(digest), Some(best)) =
        (bundle.meta.get("train.sha256"), bundle.meta.get("best_val_accuracy").and_then(|v| v.parse::<f64>().ok()))
    {
        if *digest == sha256_file(path)? && report.accuracy < best {
            log::warn!("training-set accuracy {:.4} is below the recorded validation accuracy {:.4}", report.accuracy, best);
        }
    }
    Ok(())
}

pub fn predict(s: &Settings) -> Result<(), Failure> {
    let Some(path) = s.input.as_ref().or(s.test.as_ref()) else { return fail(CONFIG, "predict needs --input") };
    let bundle = load_bundle(s)?;
    let read = || -> Result<_, corpus::CorpusError> {
        let header = corpus::detect_header(path)?;
        corpus::parse_dataset(path, header, LabelColumns::None)
    };
    let records = read().with_context(|| format!("reading {}", path.display())).exit_with(DATA)?;
    let encoded: Vec<EncodedExample> = records.iter().map(|r| bundle.pipeline.encode_texts(&r.english, &r.hindi, &r.hinglish, 0)).collect();
    let classes = if encoded.is_empty() {
        log::warn!("{} has no rows; writing empty output", path.display());
        Vec::new()
    } else {
        train::predict(&bundle.params, &encoded).map_err(train_failure)?
    };
    let text: String = classes.iter().map(|&c| format!("{}\n", bundle.task.to_scale(c))).collect();
    match &s.out {
        Some(out) => fs::write(out, text).with_context(|| format!("cannot write {}", out.display())).exit_with(DATA)?,
        None => print!("{}", text),
    }
    Ok(())
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[usize], p: usize) -> usize {
    let rank = (p * sorted.len()).div_ceil(100).max(1);
    sorted[rank - 1]
}

pub fn data_stats(s: &Settings) -> Result<(), Failure> {
    let Some(path) = s.train.as_ref().or(s.input.as_ref()) else { return fail(CONFIG, "data-stats needs --train") };
    let examples = load_examples(path, s.columns())?;
    println!("rows={}", examples.len());
    for task in [Task::AverageRating, Task::Disagreement] {
        let mut counts = [0usize; NUM_CLASSES];
        examples.iter().for_each(|e| counts[task.label(e)] += 1);
        let cells: Vec<String> = (0..NUM_CLASSES).map(|c| format!("{}:{}", task.to_scale(c), counts[c])).collect();
        println!("{}.histogram {}", task.id(), cells.join(" "));
    }
    type Field = fn(&Example) -> &str;
    let streams: [(&str, Field); 3] = [("english", |e| &e.english), ("hindi", |e| &e.hindi), ("hinglish", |e| &e.hinglish)];
    for (name, text) in streams {
        let texts: Vec<&str> = examples.iter().map(text).collect();
        let mut lengths: Vec<usize> = texts.iter().map(|t| tokenize(t).len()).collect();
        lengths.sort_unstable();
        if lengths.is_empty() {
            println!("{}.tokens none", name);
        } else {
            let over = lengths.iter().filter(|&&l| l > s.model.max_len).count();
            println!(
                "{}.tokens p50={} p90={} p95={} p99={} max={} over_max_len({})={}",
                name,
                percentile(&lengths, 50),
                percentile(&lengths, 90),
                percentile(&lengths, 95),
                percentile(&lengths, 99),
                lengths[lengths.len() - 1],
                s.model.max_len,
                over
            );
        }
        let vocab = build_vocab(&texts, s.min_count);
        println!("{}.vocab={} (min_count={}, plus <pad> and <unk>)", name, vocab.len() - 2, s.min_count);
    }
    Ok(())
}
