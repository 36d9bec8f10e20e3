//! Graph builders for the recurrent and dense layers, plus single-example
//! wrappers that evaluate them on plain tensors.
//!
//! Batched LSTMs run over a time-major input matrix (`steps·batch × d_in`)
//! whose projection through the input weights is computed in one product.
//! Variable lengths are handled with per-step 0/1 masks: a masked row keeps
//! its previous state and emits a zero output.

use super::{LstmParams, ModelError};
use crate::autodiff::{Graph, NodeId, Tensor};

/// An LSTM layer's weights inside a graph, with the four gates fused along
/// the column axis in the order input, forget, output, candidate.
pub(crate) struct LstmNodes {
    w: NodeId,
    u: NodeId,
    b: NodeId,
    hidden: usize,
}

impl LstmNodes {
    /// Inserts the twelve tensors of `p` as leaves (trainable or constant),
    /// appending their ids to `leaves` in canonical order.
    pub(crate) fn insert(g: &mut Graph, p: &LstmParams, trainable: bool, leaves: &mut Vec<NodeId>) -> Result<Self, ModelError> {
        let ids: Vec<NodeId> =
            p.tensors().into_iter().map(|t| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) }).collect();
        leaves.extend(&ids);
        Ok(Self { w: g.concat(&ids[0..4], 1)?, u: g.concat(&ids[4..8], 1)?, b: g.concat(&ids[8..12], 0)?, hidden: p.hidden() })
    }

    /// `inputs · W + b` for every row at once.
    fn project(&self, g: &mut Graph, inputs: NodeId) -> Result<NodeId, ModelError> {
        let xw = g.matmul(inputs, self.w)?;
        Ok(g.add(xw, self.b)?)
    }

    /// One cell update given the already projected input.
    fn cell(&self, g: &mut Graph, x_proj: NodeId, h: NodeId, c: NodeId) -> Result<(NodeId, NodeId), ModelError> {
        let hs = self.hidden;
        let rec = g.matmul(h, self.u)?;
        let pre = g.add(x_proj, rec)?;
        let gate = |g: &mut Graph, k: usize| g.slice(pre, 1, k * hs, (k + 1) * hs);
        let i = gate(g, 0)?;
        let i = g.sigmoid(i)?;
        let f = gate(g, 1)?;
        let f = g.sigmoid(f)?;
        let o = gate(g, 2)?;
        let o = g.sigmoid(o)?;
        let cand = gate(g, 3)?;
        let cand = g.tanh(cand)?;
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c_new = g.add(keep, write)?;
        let squashed = g.tanh(c_new)?;
        let h_new = g.mul(o, squashed)?;
        Ok((h_new, c_new))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Coverage {
    All,
    None,
    Some,
}

/// Which batch rows are live at one timestep.
pub(crate) struct StepMask {
    keep: NodeId,
    drop: NodeId,
    coverage: Coverage,
}

/// Masks for `steps` timesteps; row `b` is live at step `t` iff
/// `t < lengths[b]`.
pub(crate) fn step_masks(g: &mut Graph, lengths: &[usize], steps: usize) -> Vec<StepMask> {
    (0..steps)
        .map(|t| {
            let keep: Vec<f64> = lengths.iter().map(|&len| if t < len { 1.0 } else { 0.0 }).collect();
            let live = keep.iter().filter(|k| **k == 1.0).count();
            let coverage = match live {
                0 => Coverage::None,
                n if n == lengths.len() => Coverage::All,
                _ => Coverage::Some,
            };
            let drop = keep.iter().map(|k| 1.0 - k).collect();
            let rows = lengths.len();
            StepMask {
                keep: g.constant(Tensor::matrix(rows, 1, keep).expect("column mask")),
                drop: g.constant(Tensor::matrix(rows, 1, drop).expect("column mask")),
                coverage,
            }
        })
        .collect()
}

fn blend(g: &mut Graph, new: NodeId, old: NodeId, mask: &StepMask) -> Result<NodeId, ModelError> {
    let a = g.mul(new, mask.keep)?;
    let b = g.mul(old, mask.drop)?;
    Ok(g.add(a, b)?)
}

/// Runs `lstm` over `masks.len()` steps of a time-major input, from a zero
/// state, visiting steps in reverse when `reverse` is set. Returns the
/// per-step outputs in step order (zero for masked rows) and the final
/// hidden state, which for a forward run is the state at each row's last
/// live step.
pub(crate) fn run_lstm(
    g: &mut Graph,
    lstm: &LstmNodes,
    inputs: NodeId,
    batch: usize,
    masks: &[StepMask],
    reverse: bool,
) -> Result<(Vec<NodeId>, NodeId), ModelError> {
    let zero = g.constant(Tensor::zeros(vec![batch, lstm.hidden]));
    let (mut h, mut c) = (zero, zero);
    let mut outputs = vec![zero; masks.len()];
    if masks.is_empty() {
        return Ok((outputs, h));
    }
    let projected = lstm.project(g, inputs)?;
    let order: Box<dyn Iterator<Item = usize>> = if reverse { Box::new((0..masks.len()).rev()) } else { Box::new(0..masks.len()) };
    for t in order {
        let mask = &masks[t];
        if mask.coverage == Coverage::None {
            continue;
        }
        let x_t = g.slice(projected, 0, t * batch, (t + 1) * batch)?;
        let (h_new, c_new) = lstm.cell(g, x_t, h, c)?;
        if mask.coverage == Coverage::All {
            outputs[t] = h_new;
            h = h_new;
            c = c_new;
        } else {
            outputs[t] = g.mul(h_new, mask.keep)?;
            h = blend(g, h_new, h, mask)?;
            c = blend(g, c_new, c, mask)?;
        }
    }
    Ok((outputs, h))
}

/// Forward and backward passes over the same input; each step's output is
/// the two directions' hidden states side by side (`batch × 2H`).
pub(crate) fn bilstm_steps(
    g: &mut Graph,
    fwd: &LstmNodes,
    bwd: &LstmNodes,
    inputs: NodeId,
    batch: usize,
    masks: &[StepMask],
) -> Result<Vec<NodeId>, ModelError> {
    let (forward, _) = run_lstm(g, fwd, inputs, batch, masks, false)?;
    let (backward, _) = run_lstm(g, bwd, inputs, batch, masks, true)?;
    forward.into_iter().zip(backward).map(|(f, b)| Ok(g.concat(&[f, b], 1)?)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

pub(crate) fn dense_node(g: &mut Graph, x: NodeId, w: NodeId, b: NodeId, activation: Activation) -> Result<NodeId, ModelError> {
    let xw = g.matmul(x, w)?;
    let pre = g.add(xw, b)?;
    Ok(match activation {
        Activation::Relu => g.relu(pre)?,
        Activation::None => pre,
    })
}

fn expect_len(what: &str, got: usize, want: usize) -> Result<(), ModelError> {
    if got == want {
        Ok(())
    } else {
        Err(ModelError::Shape(format!("{} has {} entries, expected {}", what, got, want)))
    }
}

/// One LSTM step on plain vectors: returns `(h, c)`.
pub fn lstm_cell(x: &[f64], h_prev: &[f64], c_prev: &[f64], p: &LstmParams) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let hidden = p.hidden();
    expect_len("x", x.len(), p.input_dim())?;
    expect_len("h_prev", h_prev.len(), hidden)?;
    expect_len("c_prev", c_prev.len(), hidden)?;
    let mut g = Graph::new();
    let lstm = LstmNodes::insert(&mut g, p, false, &mut Vec::new())?;
    let x = g.constant(Tensor::matrix(1, x.len(), x.to_vec())?);
    let h = g.constant(Tensor::matrix(1, hidden, h_prev.to_vec())?);
    let c = g.constant(Tensor::matrix(1, hidden, c_prev.to_vec())?);
    let x_proj = lstm.project(&mut g, x)?;
    let (h, c) = lstm.cell(&mut g, x_proj, h, c)?;
    Ok((g.value(h).data().to_vec(), g.value(c).data().to_vec()))
}

fn sequence_dims(seq: &Tensor, len: usize) -> Result<(usize, usize), ModelError> {
    let (rows, cols) = match seq.shape() {
        [r, c] => (*r, *c),
        other => return Err(ModelError::Shape(format!("sequence must be a matrix, got {:?}", other))),
    };
    if len > rows {
        return Err(ModelError::Length { len, max: rows });
    }
    Ok((rows, cols))
}

/// Bidirectional LSTM over the first `len` rows of a `T × d` sequence.
/// Returns `T × 2H`, with zero rows from `len` on.
pub fn bilstm_forward(seq: &Tensor, len: usize, p_fwd: &LstmParams, p_bwd: &LstmParams) -> Result<Tensor, ModelError> {
    let (rows, cols) = sequence_dims(seq, len)?;
    expect_len("sequence row", cols, p_fwd.input_dim())?;
    let hidden = p_fwd.hidden();
    let mut out = vec![0.0; rows * 2 * hidden];
    if len > 0 {
        let mut g = Graph::new();
        let fwd = LstmNodes::insert(&mut g, p_fwd, false, &mut Vec::new())?;
        let bwd = LstmNodes::insert(&mut g, p_bwd, false, &mut Vec::new())?;
        let x = g.constant(Tensor::matrix(len, cols, seq.data()[..len * cols].to_vec())?);
        let masks = step_masks(&mut g, &[len], len);
        let steps = bilstm_steps(&mut g, &fwd, &bwd, x, 1, &masks)?;
        for (t, id) in steps.into_iter().enumerate() {
            out[t * 2 * hidden..(t + 1) * 2 * hidden].copy_from_slice(g.value(id).data());
        }
    }
    Ok(Tensor::matrix(rows, 2 * hidden, out)?)
}

/// Row-wise concatenation of two equally long sequences.
pub fn fuse_sequences(seq_e: &Tensor, seq_h: &Tensor) -> Result<Tensor, ModelError> {
    if seq_e.rank() != 2 || seq_h.rank() != 2 || seq_e.shape()[0] != seq_h.shape()[0] {
        return Err(ModelError::Shape(format!("cannot fuse {:?} with {:?}", seq_e.shape(), seq_h.shape())));
    }
    let mut g = Graph::new();
    let a = g.constant(seq_e.clone());
    let b = g.constant(seq_h.clone());
    let fused = g.concat(&[a, b], 1)?;
    Ok(g.value(fused).clone())
}

/// Final hidden state of an LSTM run over the first `len` rows; the zero
/// vector when `len` is 0.
pub fn lstm_summarize(fused: &Tensor, len: usize, p: &LstmParams) -> Result<Vec<f64>, ModelError> {
    let (_, cols) = sequence_dims(fused, len)?;
    expect_len("fused row", cols, p.input_dim())?;
    if len == 0 {
        return Ok(vec![0.0; p.hidden()]);
    }
    let mut g = Graph::new();
    let lstm = LstmNodes::insert(&mut g, p, false, &mut Vec::new())?;
    let x = g.constant(Tensor::matrix(len, cols, fused.data()[..len * cols].to_vec())?);
    let masks = step_masks(&mut g, &[len], len);
    let (_, h) = run_lstm(&mut g, &lstm, x, 1, &masks, false)?;
    Ok(g.value(h).data().to_vec())
}

/// `activation(x·W + b)` for a single input vector.
pub fn dense(x: &[f64], w: &Tensor, b: &Tensor, activation: Activation) -> Result<Vec<f64>, ModelError> {
    let mut g = Graph::new();
    let x = g.constant(Tensor::matrix(1, x.len(), x.to_vec())?);
    let w = g.constant(w.clone());
    let b = g.constant(b.clone());
    let y = dense_node(&mut g, x, w, b, activation)?;
    Ok(g.value(y).data().to_vec())
}
