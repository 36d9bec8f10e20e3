//! The dual Bi-LSTM fusion network, its parameters, and checkpoints.
//!
//! ```text
//! English seq ─ Bi-LSTM l_e ─┐
//!                            ├─ concat per step ─ LSTM l_h_e ─ last state ─┐
//! Hindi seq ─── Bi-LSTM l_h ─┘                                             ├─ concat ─ dense d_out ─ 10 logits
//! Hinglish multi-hot ─────────────────────────── dense d_he (relu) ────────┘
//! ```

mod checkpoint;
mod layers;
mod network;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CheckpointError, Metadata, FORMAT_VERSION,
};
pub use layers::{bilstm_forward, dense, fuse_sequences, lstm_cell, lstm_summarize, Activation};
pub use network::{loss_and_gradients, model_forward, model_logits, Gradients};

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{Tensor, TensorError};
use crate::corpus::NUM_CLASSES;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("input does not match the model: {0}")]
    Shape(String),
    #[error("length {len} exceeds sequence capacity {max}")]
    Length { len: usize, max: usize },
}

/// Layer sizes. The output head always has ten classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    /// Embedding dimension of the English and Hindi vectors.
    pub dim: usize,
    /// Hidden size of each direction of the two Bi-LSTMs.
    pub hidden: usize,
    /// Hidden size of the summarizing LSTM.
    pub hidden2: usize,
    /// Width of the Hinglish dense branch.
    pub dense: usize,
    /// Maximum sequence length.
    pub max_len: usize,
    /// Size of the Hinglish vocabulary, i.e. the multi-hot width.
    pub hinglish_vocab: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { dim: 100, hidden: 64, hidden2: 64, dense: 64, max_len: 30, hinglish_vocab: 2 }
    }
}

impl ModelConfig {
    pub fn parameter_count(&self) -> usize {
        let lstm = |d_in: usize, h: usize| 4 * (d_in * h + h * h + h);
        4 * lstm(self.dim, self.hidden)
            + lstm(4 * self.hidden, self.hidden2)
            + self.hinglish_vocab * self.dense
            + self.dense
            + (self.hidden2 + self.dense) * NUM_CLASSES
            + NUM_CLASSES
    }
}

/// Weights of one LSTM layer; gate order is input, forget, output, candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_i: Tensor,
    pub w_f: Tensor,
    pub w_o: Tensor,
    pub w_c: Tensor,
    pub u_i: Tensor,
    pub u_f: Tensor,
    pub u_o: Tensor,
    pub u_c: Tensor,
    pub b_i: Tensor,
    pub b_f: Tensor,
    pub b_o: Tensor,
    pub b_c: Tensor,
}

const LSTM_NAMES: [&str; 12] = ["w_i", "w_f", "w_o", "w_c", "u_i", "u_f", "u_o", "u_c", "b_i", "b_f", "b_o", "b_c"];

fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..=limit)).collect();
    Tensor::new(vec![rows, cols], data).expect("sized by construction")
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros(vec![input, hidden]);
        let u = || Tensor::zeros(vec![hidden, hidden]);
        let b = || Tensor::zeros(vec![hidden]);
        Self { w_i: w(), w_f: w(), w_o: w(), w_c: w(), u_i: u(), u_f: u(), u_o: u(), u_c: u(), b_i: b(), b_f: b(), b_o: b(), b_c: b() }
    }

    /// Glorot-uniform weights, zero biases except a forget-gate bias of 1.
    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(input, hidden);
        for w in [&mut p.w_i, &mut p.w_f, &mut p.w_o, &mut p.w_c] {
            *w = glorot(rng, input, hidden);
        }
        for u in [&mut p.u_i, &mut p.u_f, &mut p.u_o, &mut p.u_c] {
            *u = glorot(rng, hidden, hidden);
        }
        p.b_f.data_mut().iter_mut().for_each(|b| *b = 1.0);
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_i.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.w_i.shape()[1]
    }

    pub fn tensors(&self) -> [&Tensor; 12] {
        [&self.w_i, &self.w_f, &self.w_o, &self.w_c, &self.u_i, &self.u_f, &self.u_o, &self.u_c, &self.b_i, &self.b_f, &self.b_o, &self.b_c]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 12] {
        [
            &mut self.w_i,
            &mut self.w_f,
            &mut self.w_o,
            &mut self.w_c,
            &mut self.u_i,
            &mut self.u_f,
            &mut self.u_o,
            &mut self.u_c,
            &mut self.b_i,
            &mut self.b_f,
            &mut self.b_o,
            &mut self.b_c,
        ]
    }
}

/// Every learnable weight of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub l_e_fwd: LstmParams,
    pub l_e_bwd: LstmParams,
    pub l_h_fwd: LstmParams,
    pub l_h_bwd: LstmParams,
    pub l_h_e: LstmParams,
    pub d_he_w: Tensor,
    pub d_he_b: Tensor,
    pub d_out_w: Tensor,
    pub d_out_b: Tensor,
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Self {
        let ModelConfig { dim, hidden, hidden2, dense, hinglish_vocab, .. } = config;
        Self {
            config,
            l_e_fwd: LstmParams::zeros(dim, hidden),
            l_e_bwd: LstmParams::zeros(dim, hidden),
            l_h_fwd: LstmParams::zeros(dim, hidden),
            l_h_bwd: LstmParams::zeros(dim, hidden),
            l_h_e: LstmParams::zeros(4 * hidden, hidden2),
            d_he_w: Tensor::zeros(vec![hinglish_vocab, dense]),
            d_he_b: Tensor::zeros(vec![dense]),
            d_out_w: Tensor::zeros(vec![hidden2 + dense, NUM_CLASSES]),
            d_out_b: Tensor::zeros(vec![NUM_CLASSES]),
        }
    }

    /// Draws initial weights; layers are initialized in the canonical
    /// parameter order so the result depends only on `config` and the RNG.
    pub fn init(config: ModelConfig, rng: &mut impl Rng) -> Self {
        let ModelConfig { dim, hidden, hidden2, dense, hinglish_vocab, .. } = config;
        let l_e_fwd = LstmParams::init(dim, hidden, rng);
        let l_e_bwd = LstmParams::init(dim, hidden, rng);
        let l_h_fwd = LstmParams::init(dim, hidden, rng);
        let l_h_bwd = LstmParams::init(dim, hidden, rng);
        let l_h_e = LstmParams::init(4 * hidden, hidden2, rng);
        let d_he_w = glorot(rng, hinglish_vocab, dense);
        let d_out_w = glorot(rng, hidden2 + dense, NUM_CLASSES);
        Self {
            config,
            l_e_fwd,
            l_e_bwd,
            l_h_fwd,
            l_h_bwd,
            l_h_e,
            d_he_w,
            d_he_b: Tensor::zeros(vec![dense]),
            d_out_w,
            d_out_b: Tensor::zeros(vec![NUM_CLASSES]),
        }
    }

    fn layers(&self) -> [(&'static str, &LstmParams); 5] {
        [
            ("l_e.fwd", &self.l_e_fwd),
            ("l_e.bwd", &self.l_e_bwd),
            ("l_h.fwd", &self.l_h_fwd),
            ("l_h.bwd", &self.l_h_bwd),
            ("l_h_e", &self.l_h_e),
        ]
    }

    /// All tensors with their names, in the canonical order used by the
    /// optimizer, gradients, and checkpoints.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::with_capacity(64);
        for (layer, p) in self.layers() {
            for (name, t) in LSTM_NAMES.iter().zip(p.tensors()) {
                out.push((format!("{}.{}", layer, name), t));
            }
        }
        out.push(("d_he.w".into(), &self.d_he_w));
        out.push(("d_he.b".into(), &self.d_he_b));
        out.push(("d_out.w".into(), &self.d_out_w));
        out.push(("d_out.b".into(), &self.d_out_b));
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::with_capacity(64);
        for p in [&mut self.l_e_fwd, &mut self.l_e_bwd, &mut self.l_h_fwd, &mut self.l_h_bwd, &mut self.l_h_e] {
            out.extend(p.tensors_mut());
        }
        out.extend([&mut self.d_he_w, &mut self.d_he_b, &mut self.d_out_w, &mut self.d_out_b]);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}
