#![allow(dead_code)]

use hinge_qe::autodiff::Tensor;
use hinge_qe::model::{LstmParams, ModelConfig, ModelParams};
use hinge_qe::textprep::{EncodedExample, MultiHot, Sequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn small_config() -> ModelConfig {
    ModelConfig { dim: 4, hidden: 3, hidden2: 3, dense: 4, max_len: 5, hinglish_vocab: 9 }
}

/// Parameters with every entry drawn from `[-scale, scale]`, biases included.
pub fn random_params(config: ModelConfig, scale: f64, rng: &mut impl Rng) -> ModelParams {
    let mut p = ModelParams::zeros(config);
    for t in p.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-scale..=scale));
    }
    p
}

pub fn random_lstm(input: usize, hidden: usize, rng: &mut impl Rng) -> LstmParams {
    let mut p = LstmParams::zeros(input, hidden);
    for t in p.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.8..=0.8));
    }
    p
}

pub fn random_sequence(max_len: usize, dim: usize, len: usize, rng: &mut impl Rng) -> Sequence {
    Sequence::new(max_len, dim, (0..len * dim).map(|_| rng.gen_range(-1.0..=1.0)).collect())
}

pub fn random_example(config: &ModelConfig, rng: &mut impl Rng) -> EncodedExample {
    let le = rng.gen_range(0..=config.max_len);
    let lh = rng.gen_range(0..=config.max_len);
    let active: Vec<usize> = (0..rng.gen_range(1..=4)).map(|_| rng.gen_range(1..config.hinglish_vocab)).collect();
    EncodedExample {
        english: random_sequence(config.max_len, config.dim, le, rng),
        hindi: random_sequence(config.max_len, config.dim, lh, rng),
        hinglish: MultiHot::new(config.hinglish_vocab, active),
        label: rng.gen_range(0..10),
    }
}

pub fn matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..=1.0)).collect()).unwrap()
}

/// Reference LSTM step written directly from the gate equations, one
/// scalar at a time.
pub fn reference_cell(x: &[f64], h: &[f64], c: &[f64], p: &LstmParams) -> (Vec<f64>, Vec<f64>) {
    let hidden = h.len();
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let gate = |w: &Tensor, u: &Tensor, b: &Tensor, j: usize| {
        let mut s = b.data()[j];
        for (k, xk) in x.iter().enumerate() {
            s += xk * w.get2(k, j);
        }
        for (k, hk) in h.iter().enumerate() {
            s += hk * u.get2(k, j);
        }
        s
    };
    let mut h_new = vec![0.0; hidden];
    let mut c_new = vec![0.0; hidden];
    for j in 0..hidden {
        let i = sig(gate(&p.w_i, &p.u_i, &p.b_i, j));
        let f = sig(gate(&p.w_f, &p.u_f, &p.b_f, j));
        let o = sig(gate(&p.w_o, &p.u_o, &p.b_o, j));
        let cand = gate(&p.w_c, &p.u_c, &p.b_c, j).tanh();
        c_new[j] = f * c[j] + i * cand;
        h_new[j] = o * c_new[j].tanh();
    }
    (h_new, c_new)
}

/// Mean cross-entropy of raw logits rows against targets, written out
/// naively.
pub fn reference_cross_entropy(logits: &[Vec<f64>], targets: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &t) in logits.iter().zip(targets) {
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        total += -(row[t].exp() / z).ln();
    }
    total / targets.len() as f64
}

/// Symmetric relative error with a floor so that two near-zero values
/// compare as equal.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

const WORDS_EN: [&str; 12] = ["i", "am", "going", "home", "you", "are", "where", "today", "the", "market", "is", "closed"];
const WORDS_HI: [&str; 12] = ["मैं", "घर", "जा", "रहा", "हूँ", "तुम", "कहाँ", "हो", "आज", "बाजार", "बंद", "है"];
const WORDS_HG: [&str; 12] = ["main", "ghar", "ja", "raha", "hoon", "tum", "kahan", "ho", "aaj", "bazaar", "band", "hai"];

fn sentence(words: &[&str], r: &mut impl Rng) -> String {
    let n = r.gen_range(1..=8);
    (0..n).map(|_| words[r.gen_range(0..words.len())]).collect::<Vec<_>>().join(" ")
}

/// Random corpus rows with raw annotator ratings.
pub fn synthetic_records(n: usize, r: &mut impl Rng) -> Vec<hinge_qe::corpus::RawRecord> {
    (0..n)
        .map(|i| hinge_qe::corpus::RawRecord {
            line: i as u64 + 2,
            english: sentence(&WORDS_EN, r),
            hindi: sentence(&WORDS_HI, r),
            hinglish: sentence(&WORDS_HG, r),
            rating_a: Some(r.gen_range(1..=10)),
            rating_b: Some(r.gen_range(1..=10)),
            average_rating: None,
            disagreement: None,
        })
        .collect()
}
