//! Binary checkpoint container.
//!
//! All integers are little-endian.
//!
//! ```text
//! magic       8 bytes   "HGQECKPT"
//! version     u32
//! meta_len    u64       followed by meta_len bytes of UTF-8 "key=value\n" lines
//! blocks      u64       number of tensor blocks
//! per block:
//!   name_len  u32       followed by the UTF-8 name
//!   rank      u32       followed by rank × u64 dimensions
//!   count     u64       followed by count × f64 values
//! trailer     8 bytes   "HGQE_END"
//! ```
//!
//! The first blocks are the model parameters in the canonical order of
//! [`ModelParams::named_tensors`]; any further blocks are named extras (the
//! command-line tool stores the frozen embedding tables there). The layer
//! sizes are stored in the metadata under `dim`, `hidden`, `hidden2`,
//! `dense`, `max_len` and `hinglish_vocab`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{ModelConfig, ModelParams};
use crate::autodiff::Tensor;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"HGQECKPT";
const TRAILER: &[u8; 8] = b"HGQE_END";
const MAX_META: u64 = 16 << 20;
const MAX_NAME: u32 = 4096;

pub type Metadata = BTreeMap<String, String>;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic bytes)")]
    Magic,
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("corrupted checkpoint: {0}")]
    Corrupt(String),
    #[error("{key}: checkpoint has {checkpoint}, expected {expected}")]
    Mismatch { key: String, checkpoint: String, expected: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: Metadata,
    pub params: ModelParams,
    pub extras: Vec<(String, Tensor)>,
}

const CONFIG_KEYS: [&str; 6] = ["dim", "hidden", "hidden2", "dense", "max_len", "hinglish_vocab"];

fn config_values(c: &ModelConfig) -> [usize; 6] {
    [c.dim, c.hidden, c.hidden2, c.dense, c.max_len, c.hinglish_vocab]
}

impl Checkpoint {
    pub fn new(params: ModelParams, meta: Metadata) -> Self {
        Self { meta, params, extras: Vec::new() }
    }

    pub fn extra(&self, name: &str) -> Option<&Tensor> {
        self.extras.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Fails unless metadata `key` equals `expected`.
    pub fn require(&self, key: &str, expected: &str) -> Result<(), CheckpointError> {
        match self.meta.get(key) {
            Some(v) if v == expected => Ok(()),
            other => Err(CheckpointError::Mismatch {
                key: key.to_owned(),
                checkpoint: other.cloned().unwrap_or_else(|| "<missing>".into()),
                expected: expected.to_owned(),
            }),
        }
    }

    /// Fails with the first layer size that differs from `expected`.
    pub fn check_config(&self, expected: &ModelConfig) -> Result<(), CheckpointError> {
        let ours = config_values(&self.params.config);
        for ((key, have), want) in CONFIG_KEYS.iter().zip(ours).zip(config_values(expected)) {
            if have != want {
                return Err(CheckpointError::Mismatch { key: (*key).into(), checkpoint: have.to_string(), expected: want.to_string() });
            }
        }
        Ok(())
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(checkpoint, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Loads a checkpoint and, when `expected` is given, rejects one whose layer
/// sizes differ.
pub fn load_checkpoint(path: impl AsRef<Path>, expected: Option<&ModelConfig>) -> Result<Checkpoint, CheckpointError> {
    let ckpt = read_checkpoint(BufReader::new(File::open(path)?))?;
    if let Some(expected) = expected {
        ckpt.check_config(expected)?;
    }
    Ok(ckpt)
}

fn write_block(w: &mut impl Write, name: &str, t: &Tensor) -> io::Result<()> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    w.write_all(&(t.len() as u64).to_le_bytes())?;
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_checkpoint(checkpoint: &Checkpoint, mut w: impl Write) -> Result<(), CheckpointError> {
    let mut meta = checkpoint.meta.clone();
    for (key, value) in CONFIG_KEYS.iter().zip(config_values(&checkpoint.params.config)) {
        meta.insert((*key).into(), value.to_string());
    }
    let mut text = String::new();
    for (k, v) in &meta {
        if k.contains(['=', '\n']) || v.contains('\n') {
            return Err(CheckpointError::Corrupt(format!("metadata entry {:?} cannot be stored", k)));
        }
        text.push_str(&format!("{}={}\n", k, v));
    }
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(text.len() as u64).to_le_bytes())?;
    w.write_all(text.as_bytes())?;
    let named = checkpoint.params.named_tensors();
    w.write_all(&((named.len() + checkpoint.extras.len()) as u64).to_le_bytes())?;
    for (name, t) in named {
        write_block(&mut w, &name, t)?;
    }
    for (name, t) in &checkpoint.extras {
        write_block(&mut w, name, t)?;
    }
    w.write_all(TRAILER)?;
    Ok(())
}

struct Input<R> {
    inner: R,
}

impl<R: Read> Input<R> {
    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>, CheckpointError> {
        let mut buf = vec![0; n];
        self.inner.read_exact(&mut buf).map_err(|e| truncated(e, what))?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        let mut b = [0; 4];
        self.inner.read_exact(&mut b).map_err(|e| truncated(e, what))?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self, what: &str) -> Result<u64, CheckpointError> {
        let mut b = [0; 8];
        self.inner.read_exact(&mut b).map_err(|e| truncated(e, what))?;
        Ok(u64::from_le_bytes(b))
    }

    fn block(&mut self) -> Result<(String, Tensor), CheckpointError> {
        let name_len = self.u32("block name length")?;
        if name_len > MAX_NAME {
            return Err(CheckpointError::Corrupt(format!("block name length {}", name_len)));
        }
        let name = String::from_utf8(self.bytes(name_len as usize, "block name")?)
            .map_err(|_| CheckpointError::Corrupt("block name is not UTF-8".into()))?;
        let rank = self.u32("rank")?;
        if rank > 3 {
            return Err(CheckpointError::Corrupt(format!("block {} has rank {}", name, rank)));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            shape.push(self.u64("dimension")? as usize);
        }
        let count = self.u64("value count")?;
        let expected = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        if expected != Some(count as usize) {
            return Err(CheckpointError::Corrupt(format!("block {} declares {} values for shape {:?}", name, count, shape)));
        }
        let mut data = Vec::with_capacity((count as usize).min(1 << 20));
        let mut b = [0; 8];
        for _ in 0..count {
            self.inner.read_exact(&mut b).map_err(|e| truncated(e, &name))?;
            data.push(f64::from_le_bytes(b));
        }
        let tensor = Tensor::new(shape, data).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        Ok((name, tensor))
    }
}

fn truncated(e: io::Error, what: &str) -> CheckpointError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        CheckpointError::Corrupt(format!("file ends inside {}", what))
    } else {
        CheckpointError::Io(e)
    }
}

fn meta_usize(meta: &Metadata, key: &str) -> Result<usize, CheckpointError> {
    meta.get(key).and_then(|v| v.parse().ok()).ok_or_else(|| CheckpointError::Corrupt(format!("metadata lacks a numeric {}", key)))
}

pub fn read_checkpoint(reader: impl Read) -> Result<Checkpoint, CheckpointError> {
    let mut input = Input { inner: reader };
    let magic = input.bytes(8, "header").map_err(|e| match e {
        CheckpointError::Corrupt(_) => CheckpointError::Magic,
        other => other,
    })?;
    if magic != MAGIC {
        return Err(CheckpointError::Magic);
    }
    let version = input.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version { found: version, expected: FORMAT_VERSION });
    }
    let meta_len = input.u64("metadata length")?;
    if meta_len > MAX_META {
        return Err(CheckpointError::Corrupt(format!("metadata length {}", meta_len)));
    }
    let text = String::from_utf8(input.bytes(meta_len as usize, "metadata")?)
        .map_err(|_| CheckpointError::Corrupt("metadata is not UTF-8".into()))?;
    let mut meta = Metadata::new();
    for line in text.lines() {
        let (k, v) = line.split_once('=').ok_or_else(|| CheckpointError::Corrupt(format!("metadata line {:?}", line)))?;
        meta.insert(k.to_owned(), v.to_owned());
    }
    let config = ModelConfig {
        dim: meta_usize(&meta, "dim")?,
        hidden: meta_usize(&meta, "hidden")?,
        hidden2: meta_usize(&meta, "hidden2")?,
        dense: meta_usize(&meta, "dense")?,
        max_len: meta_usize(&meta, "max_len")?,
        hinglish_vocab: meta_usize(&meta, "hinglish_vocab")?,
    };
    let mut params = ModelParams::zeros(config);
    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    let blocks = input.u64("block count")? as usize;
    if blocks < names.len() {
        return Err(CheckpointError::Corrupt(format!("{} blocks, model needs {}", blocks, names.len())));
    }
    for (slot, want) in params.tensors_mut().into_iter().zip(&names) {
        let (name, tensor) = input.block()?;
        if &name != want || tensor.shape() != slot.shape() {
            return Err(CheckpointError::Corrupt(format!(
                "expected block {} with shape {:?}, found {} with shape {:?}",
                want,
                slot.shape(),
                name,
                tensor.shape()
            )));
        }
        *slot = tensor;
    }
    let mut extras = Vec::with_capacity(blocks - names.len());
    for _ in names.len()..blocks {
        extras.push(input.block()?);
    }
    if input.bytes(8, "trailer")? != TRAILER {
        return Err(CheckpointError::Corrupt("missing trailer".into()));
    }
    let mut rest = [0u8; 1];
    if input.inner.read(&mut rest)? != 0 {
        return Err(CheckpointError::Corrupt("trailing bytes after checkpoint".into()));
    }
    for key in CONFIG_KEYS {
        meta.remove(key);
    }
    Ok(Checkpoint { meta, params, extras })
}
