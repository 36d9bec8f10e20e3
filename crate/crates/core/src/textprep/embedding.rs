use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::Rng;
use thiserror::Error;

use super::{Vocabulary, PAD, UNK};

/// Range of the uniform draw for tokens missing from the pretrained file.
pub const FALLBACK_RANGE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: expected {expected} values after the token, found {found}")]
    Dimension { line: usize, expected: usize, found: usize },
    #[error("line {line}: {value:?} is not a finite number")]
    Value { line: usize, value: String },
    #[error("embedding dimension must be positive")]
    ZeroDimension,
}

/// Frozen vectors, one row per vocabulary index.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: Vec<f64>,
    found: usize,
    coverage: f64,
}

impl EmbeddingTable {
    /// Table with every row except PAD drawn uniformly from
    /// `[-0.05, 0.05]`, in index order.
    pub fn random(vocab: &Vocabulary, dim: usize, rng: &mut impl Rng) -> Self {
        let mut vectors = vec![0.0; vocab.len() * dim];
        for v in vectors.iter_mut().skip(dim) {
            *v = rng.gen_range(-FALLBACK_RANGE..=FALLBACK_RANGE);
        }
        Self { dim, vectors, found: 0, coverage: 0.0 }
    }

    /// Builds a table directly from row-major values. Row 0 is forced to
    /// zero.
    pub fn from_rows(dim: usize, mut vectors: Vec<f64>) -> Self {
        assert_eq!(vectors.len() % dim.max(1), 0, "row-major values must fill whole rows");
        vectors[..dim].iter_mut().for_each(|v| *v = 0.0);
        Self { dim, vectors, found: 0, coverage: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.vectors[index * self.dim..(index + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.vectors
    }

    /// Number of regular vocabulary tokens that were found in the file.
    pub fn found(&self) -> usize {
        self.found
    }

    /// `found / (vocab size - 2)`, or 0 for a vocabulary with no regular
    /// tokens.
    pub fn coverage(&self) -> f64 {
        self.coverage
    }
}

/// Loads GloVe-style text vectors for the tokens of `vocab`. Rows for tokens
/// absent from the file, including UNK, keep their seeded random draw.
pub fn load_embeddings(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut impl Rng,
) -> Result<EmbeddingTable, EmbeddingError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| EmbeddingError::Io { path: path.to_owned(), source })?;
    parse_embeddings(BufReader::new(file), vocab, dim, rng).map_err(|e| match e {
        EmbeddingError::Io { source, .. } => EmbeddingError::Io { path: path.to_owned(), source },
        other => other,
    })
}

pub fn parse_embeddings(
    reader: impl BufRead,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut impl Rng,
) -> Result<EmbeddingTable, EmbeddingError> {
    if dim == 0 {
        return Err(EmbeddingError::ZeroDimension);
    }
    let mut table = EmbeddingTable::random(vocab, dim, rng);
    let mut seen = vec![false; vocab.len()];
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| EmbeddingError::Io { path: PathBuf::new(), source })?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values: Vec<&str> = fields.collect();
        // word2vec-style "count dim" header
        if line_no == 1 && values.len() == 1 && token.parse::<u64>().is_ok() && values[0].parse::<u64>().is_ok() {
            continue;
        }
        if values.len() != dim {
            return Err(EmbeddingError::Dimension { line: line_no, expected: dim, found: values.len() });
        }
        let Some(index) = vocab.get(token) else { continue };
        if seen[index] {
            continue;
        }
        let row = &mut table.vectors[index * dim..(index + 1) * dim];
        for (slot, raw) in row.iter_mut().zip(&values) {
            *slot = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| EmbeddingError::Value { line: line_no, value: raw.to_string() })?;
        }
        seen[index] = true;
    }
    debug_assert!(!seen[PAD] && !seen[UNK]);
    table.found = seen.iter().filter(|s| **s).count();
    let regular = vocab.len() - 2;
    table.coverage = if regular == 0 { 0.0 } else { table.found as f64 / regular as f64 };
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::build_vocab;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    #[test]
    fn copies_rows_from_file() {
        let vocab = build_vocab(&["home away"], 1);
        let table = parse_embeddings("home 0.1 0.2 0.3\nother 1 1 1\n".as_bytes(), &vocab, 3, &mut rng()).unwrap();
        assert_eq!(table.row(vocab.lookup("home")), &[0.1, 0.2, 0.3]);
        assert_eq!(table.row(PAD), &[0.0, 0.0, 0.0]);
        assert_eq!(table.found(), 1);
        assert_eq!(table.coverage(), 0.5);
    }

    #[test]
    fn missing_tokens_fall_back_to_seeded_uniform() {
        let vocab = build_vocab(&["home away"], 1);
        let a = parse_embeddings("home 0.1 0.2 0.3\n".as_bytes(), &vocab, 3, &mut rng()).unwrap();
        let b = parse_embeddings("".as_bytes(), &vocab, 3, &mut rng()).unwrap();
        let away = vocab.lookup("away");
        assert_eq!(a.row(away), b.row(away));
        assert!(a.row(away).iter().all(|v| v.abs() <= FALLBACK_RANGE));
        assert!(a.row(UNK).iter().any(|v| *v != 0.0));
    }

    #[test]
    fn dimension_mismatch_names_line() {
        let vocab = build_vocab(&["home"], 1);
        let err = parse_embeddings("x 1 2 3\nhome 0.1 0.2 0.3 0.4\n".as_bytes(), &vocab, 3, &mut rng()).unwrap_err();
        assert!(matches!(err, EmbeddingError::Dimension { line: 2, expected: 3, found: 4 }));
    }

    #[test]
    fn skips_word2vec_header() {
        let vocab = build_vocab(&["home"], 1);
        let table = parse_embeddings("1 3\nhome 1 2 3\n".as_bytes(), &vocab, 3, &mut rng()).unwrap();
        assert_eq!(table.row(2), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn missing_file_is_io_error() {
        let vocab = build_vocab(&["home"], 1);
        let err = load_embeddings("/nonexistent/glove.txt", &vocab, 3, &mut rng()).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/glove.txt"));
    }
}
