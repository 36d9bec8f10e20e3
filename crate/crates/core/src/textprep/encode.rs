use std::path::Path;

use super::{build_vocab, load_embeddings, tokenize, EmbeddingError, EmbeddingTable, Vocabulary, PAD};
use crate::corpus::{Example, Task};
use crate::rng::{substream, Stream};

/// A token sequence as embedding rows, conceptually padded with zero rows up
/// to `max_len`. Only the first `len` rows are stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    max_len: usize,
    dim: usize,
    len: usize,
    rows: Vec<f64>,
}

impl Sequence {
    pub fn new(max_len: usize, dim: usize, rows: Vec<f64>) -> Self {
        let len = rows.len() / dim.max(1);
        assert!(len <= max_len && len * dim == rows.len(), "sequence does not fit {}x{}", max_len, dim);
        Self { max_len, dim, len, rows }
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Row `t`; `None` for padding positions.
    pub fn row(&self, t: usize) -> Option<&[f64]> {
        (t < self.len).then(|| &self.rows[t * self.dim..(t + 1) * self.dim])
    }

    /// The full `max_len × dim` matrix, padding included.
    pub fn to_padded(&self) -> Vec<f64> {
        let mut out = self.rows.clone();
        out.resize(self.max_len * self.dim, 0.0);
        out
    }

    /// Same content under a different maximum length. Fails when the stored
    /// rows would not fit.
    pub fn with_max_len(&self, max_len: usize) -> Option<Self> {
        (self.len <= max_len).then(|| Self { max_len, ..self.clone() })
    }
}

/// Token presence indicators over a vocabulary, stored as the sorted set of
/// active indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiHot {
    size: usize,
    active: Vec<usize>,
}

impl MultiHot {
    /// Panics when an index is out of range or is the PAD position.
    pub fn new(size: usize, mut active: Vec<usize>) -> Self {
        active.sort_unstable();
        active.dedup();
        assert!(active.iter().all(|&i| i != PAD && i < size), "active indices must lie in 1..{}", size);
        Self { size, active }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.size];
        for &i in &self.active {
            v[i] = 1.0;
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedExample {
    pub english: Sequence,
    pub hindi: Sequence,
    pub hinglish: MultiHot,
    pub label: usize,
}

/// Embeds up to `max_len` tokens; out-of-vocabulary tokens use the UNK row
/// and anything past `max_len` is dropped.
pub fn encode_sequence(tokens: &[String], vocab: &Vocabulary, table: &EmbeddingTable, max_len: usize) -> Sequence {
    let dim = table.dim();
    let mut rows = Vec::with_capacity(tokens.len().min(max_len) * dim);
    for token in tokens.iter().take(max_len) {
        rows.extend_from_slice(table.row(vocab.lookup(token)));
    }
    Sequence::new(max_len, dim, rows)
}

pub fn encode_multihot(tokens: &[String], vocab: &Vocabulary) -> MultiHot {
    let mut active: Vec<usize> = tokens.iter().map(|t| vocab.lookup(t)).collect();
    active.sort_unstable();
    active.dedup();
    debug_assert!(active.first() != Some(&PAD));
    MultiHot { size: vocab.len(), active }
}

/// Everything needed to turn raw sentence triples into model inputs.
#[derive(Clone, Debug)]
pub struct TextPipeline {
    pub english_vocab: Vocabulary,
    pub hindi_vocab: Vocabulary,
    pub hinglish_vocab: Vocabulary,
    pub english_table: EmbeddingTable,
    pub hindi_table: EmbeddingTable,
    pub max_len: usize,
}

/// Settings for [`TextPipeline::fit`].
#[derive(Clone, Copy, Debug)]
pub struct PipelineOptions<'a> {
    pub min_count: u64,
    pub dim: usize,
    pub max_len: usize,
    pub seed: u64,
    pub english_vectors: Option<&'a Path>,
    pub hindi_vectors: Option<&'a Path>,
}

impl TextPipeline {
    /// Builds the three vocabularies from the training examples and the two
    /// embedding tables, each from its own random substream.
    pub fn fit(train: &[Example], options: PipelineOptions<'_>) -> Result<Self, EmbeddingError> {
        if options.dim == 0 {
            return Err(EmbeddingError::ZeroDimension);
        }
        let texts = |f: fn(&Example) -> &str| train.iter().map(f).collect::<Vec<_>>();
        let english_vocab = build_vocab(&texts(|e| &e.english), options.min_count);
        let hindi_vocab = build_vocab(&texts(|e| &e.hindi), options.min_count);
        let hinglish_vocab = build_vocab(&texts(|e| &e.hinglish), options.min_count);
        let table = |vocab: &Vocabulary, path: Option<&Path>, stream: Stream| {
            let mut rng = substream(options.seed, stream);
            match path {
                Some(p) => load_embeddings(p, vocab, options.dim, &mut rng),
                None => Ok(EmbeddingTable::random(vocab, options.dim, &mut rng)),
            }
        };
        let english_table = table(&english_vocab, options.english_vectors, Stream::EnglishEmbeddings)?;
        let hindi_table = table(&hindi_vocab, options.hindi_vectors, Stream::HindiEmbeddings)?;
        Ok(Self { english_vocab, hindi_vocab, hinglish_vocab, english_table, hindi_table, max_len: options.max_len })
    }

    pub fn dim(&self) -> usize {
        self.english_table.dim()
    }

    pub fn encode_texts(&self, english: &str, hindi: &str, hinglish: &str, label: usize) -> EncodedExample {
        EncodedExample {
            english: encode_sequence(&tokenize(english), &self.english_vocab, &self.english_table, self.max_len),
            hindi: encode_sequence(&tokenize(hindi), &self.hindi_vocab, &self.hindi_table, self.max_len),
            hinglish: encode_multihot(&tokenize(hinglish), &self.hinglish_vocab),
            label,
        }
    }

    pub fn encode(&self, example: &Example, task: Task) -> EncodedExample {
        self.encode_texts(&example.english, &example.hindi, &example.hinglish, task.label(example))
    }

    pub fn encode_all(&self, examples: &[Example], task: Task) -> Vec<EncodedExample> {
        examples.iter().map(|e| self.encode(e, task)).collect()
    }
}
