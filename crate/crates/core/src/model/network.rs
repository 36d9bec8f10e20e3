use super::layers::{bilstm_steps, dense_node, run_lstm, step_masks, Activation, LstmNodes};
use super::{ModelError, ModelParams};
use crate::autodiff::{Graph, NodeId, Tensor};
use crate::textprep::{EncodedExample, Sequence};

/// Mean batch loss and its gradient for every parameter, in the canonical
/// order of [`ModelParams::named_tensors`].
#[derive(Clone, Debug)]
pub struct Gradients {
    pub loss: f64,
    pub grads: Vec<Vec<f64>>,
    /// Logits of the batch, one row per example.
    pub logits: Vec<Vec<f64>>,
}

struct Built {
    graph: Graph,
    leaves: Vec<NodeId>,
    logits: NodeId,
}

fn check_example(params: &ModelParams, enc: &EncodedExample) -> Result<(), ModelError> {
    let c = &params.config;
    for (name, seq) in [("english", &enc.english), ("hindi", &enc.hindi)] {
        if seq.dim() != c.dim {
            return Err(ModelError::Shape(format!("{} embedding dimension {} but model expects {}", name, seq.dim(), c.dim)));
        }
    }
    if enc.hinglish.size() != c.hinglish_vocab {
        return Err(ModelError::Shape(format!(
            "hinglish vector has {} entries but model expects {}",
            enc.hinglish.size(),
            c.hinglish_vocab
        )));
    }
    Ok(())
}

/// Time-major input matrix (`steps·batch × dim`); row `t·batch + b` is step
/// `t` of example `b`, or zeros past its length.
fn time_major(seqs: &[&Sequence], steps: usize, dim: usize) -> Tensor {
    let batch = seqs.len();
    let mut data = vec![0.0; steps * batch * dim];
    for t in 0..steps {
        for (b, seq) in seqs.iter().enumerate() {
            if let Some(row) = seq.row(t) {
                let at = (t * batch + b) * dim;
                data[at..at + dim].copy_from_slice(row);
            }
        }
    }
    Tensor::new(vec![steps * batch, dim], data).expect("sized by construction")
}

fn build(params: &ModelParams, batch: &[&EncodedExample], trainable: bool) -> Result<Built, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::Shape("empty batch".into()));
    }
    for enc in batch {
        check_example(params, enc)?;
    }
    let c = params.config;
    let n = batch.len();
    let mut g = Graph::new();
    let mut leaves = Vec::with_capacity(64);

    let l_e_fwd = LstmNodes::insert(&mut g, &params.l_e_fwd, trainable, &mut leaves)?;
    let l_e_bwd = LstmNodes::insert(&mut g, &params.l_e_bwd, trainable, &mut leaves)?;
    let l_h_fwd = LstmNodes::insert(&mut g, &params.l_h_fwd, trainable, &mut leaves)?;
    let l_h_bwd = LstmNodes::insert(&mut g, &params.l_h_bwd, trainable, &mut leaves)?;
    let l_h_e = LstmNodes::insert(&mut g, &params.l_h_e, trainable, &mut leaves)?;
    let mut leaf = |g: &mut Graph, t: &Tensor| {
        let id = if trainable { g.param(t.clone()) } else { g.constant(t.clone()) };
        leaves.push(id);
        id
    };
    let d_he_w = leaf(&mut g, &params.d_he_w);
    let d_he_b = leaf(&mut g, &params.d_he_b);
    let d_out_w = leaf(&mut g, &params.d_out_w);
    let d_out_b = leaf(&mut g, &params.d_out_b);

    let english: Vec<&Sequence> = batch.iter().map(|e| &e.english).collect();
    let hindi: Vec<&Sequence> = batch.iter().map(|e| &e.hindi).collect();
    let encode_stream = |g: &mut Graph, seqs: &[&Sequence], fwd: &LstmNodes, bwd: &LstmNodes| -> Result<Vec<NodeId>, ModelError> {
        let lengths: Vec<usize> = seqs.iter().map(|s| s.len()).collect();
        let steps = lengths.iter().copied().max().unwrap_or(0);
        let inputs = g.constant(time_major(seqs, steps, c.dim));
        let masks = step_masks(g, &lengths, steps);
        bilstm_steps(g, fwd, bwd, inputs, n, &masks)
    };
    let english_steps = encode_stream(&mut g, &english, &l_e_fwd, &l_e_bwd)?;
    let hindi_steps = encode_stream(&mut g, &hindi, &l_h_fwd, &l_h_bwd)?;

    // Feature-axis fusion; the fused length of an example is the longer of
    // its two sequence lengths.
    let fused_lengths: Vec<usize> = batch.iter().map(|e| e.english.len().max(e.hindi.len())).collect();
    let fused_steps = english_steps.len().max(hindi_steps.len());
    let summary = if fused_steps == 0 {
        g.constant(Tensor::zeros(vec![n, c.hidden2]))
    } else {
        let pad = g.constant(Tensor::zeros(vec![n, 2 * c.hidden]));
        let mut rows = Vec::with_capacity(fused_steps);
        for t in 0..fused_steps {
            let e = english_steps.get(t).copied().unwrap_or(pad);
            let h = hindi_steps.get(t).copied().unwrap_or(pad);
            rows.push(g.concat(&[e, h], 1)?);
        }
        let stacked = g.concat(&rows, 0)?;
        let masks = step_masks(&mut g, &fused_lengths, fused_steps);
        run_lstm(&mut g, &l_h_e, stacked, n, &masks, false)?.1
    };

    let mut multihot = vec![0.0; n * c.hinglish_vocab];
    for (b, enc) in batch.iter().enumerate() {
        for &i in enc.hinglish.active() {
            multihot[b * c.hinglish_vocab + i] = 1.0;
        }
    }
    let multihot = g.constant(Tensor::matrix(n, c.hinglish_vocab, multihot)?);
    let hinglish = dense_node(&mut g, multihot, d_he_w, d_he_b, Activation::Relu)?;

    let joined = g.concat(&[summary, hinglish], 1)?;
    let logits = dense_node(&mut g, joined, d_out_w, d_out_b, Activation::None)?;
    Ok(Built { graph: g, leaves, logits })
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    let (r, _) = t.as_matrix_dims();
    (0..r).map(|i| t.row(i).to_vec()).collect()
}

/// Ten logits per example of a batch.
pub fn model_logits(params: &ModelParams, batch: &[&EncodedExample]) -> Result<Vec<Vec<f64>>, ModelError> {
    let built = build(params, batch, false)?;
    Ok(rows(built.graph.value(built.logits)))
}

/// Ten logits for a single example.
pub fn model_forward(enc: &EncodedExample, params: &ModelParams) -> Result<Vec<f64>, ModelError> {
    Ok(model_logits(params, &[enc])?.remove(0))
}

/// Cross-entropy of the batch against each example's `label`, averaged over
/// the batch, with gradients for every parameter.
pub fn loss_and_gradients(params: &ModelParams, batch: &[&EncodedExample]) -> Result<Gradients, ModelError> {
    let Built { mut graph, leaves, logits } = build(params, batch, true)?;
    let targets: Vec<usize> = batch.iter().map(|e| e.label).collect();
    let loss = graph.softmax_cross_entropy(logits, &targets)?;
    graph.backward(loss)?;
    let grads = leaves.iter().map(|&id| graph.grad(id).map_or_else(|| vec![0.0; graph.value(id).len()], <[f64]>::to_vec)).collect();
    Ok(Gradients { loss: graph.value(loss).data()[0], grads, logits: rows(graph.value(logits)) })
}
