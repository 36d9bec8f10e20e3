use std::collections::HashMap;
use std::io::{self, BufRead, Write};

use sha2::{Digest, Sha256};

use super::tokenize;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Dense token↔index map for one language stream. Index 0 is padding and
/// index 1 stands for every out-of-vocabulary token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(Vec::<String>::new())
    }
}

impl Vocabulary {
    /// Builds a vocabulary from regular tokens in index order (starting at
    /// index 2). Counts are unknown and recorded as zero.
    pub fn from_tokens<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        Self::with_counts(tokens.into_iter().map(|t| (t.into(), 0)))
    }

    fn with_counts(entries: impl IntoIterator<Item = (String, u64)>) -> Self {
        let mut tokens = vec![PAD_TOKEN.to_owned(), UNK_TOKEN.to_owned()];
        let mut counts = vec![0, 0];
        for (token, count) in entries {
            tokens.push(token);
            counts.push(count);
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, counts, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// True when only PAD and UNK are present.
    pub fn is_empty(&self) -> bool {
        self.tokens.len() == 2
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied().filter(|&i| i > UNK)
    }

    /// Index of `token`, or [`UNK`] when it is not in the vocabulary.
    pub fn lookup(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn count(&self, index: usize) -> u64 {
        self.counts.get(index).copied().unwrap_or(0)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line, ordered by index.
    pub fn export(&self, mut w: impl Write) -> io::Result<()> {
        for t in &self.tokens {
            writeln!(w, "{}", t)?;
        }
        Ok(())
    }

    /// Reads a file written by [`Vocabulary::export`].
    pub fn import(r: impl BufRead) -> io::Result<Self> {
        let mut lines = Vec::new();
        for line in r.lines() {
            lines.push(line?);
        }
        if lines.len() < 2 || lines[0] != PAD_TOKEN || lines[1] != UNK_TOKEN {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "vocabulary must start with <pad> and <unk>"));
        }
        Ok(Self::from_tokens(lines.into_iter().skip(2)))
    }

    /// Hex SHA-256 of the exported form; identifies the index assignment.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for t in &self.tokens {
            hasher.update(t.as_bytes());
            hasher.update(b"\n");
        }
        hasher.finalize().iter().map(|b| format!("{:02x}", b)).collect()
    }
}

/// Counts tokens over `texts` and keeps those seen at least `min_count`
/// times (a `min_count` of 0 behaves like 1). Tokens are ordered by
/// descending count, ties broken lexicographically.
pub fn build_vocab<S: AsRef<str>>(texts: &[S], min_count: u64) -> Vocabulary {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for text in texts {
        for token in tokenize(text.as_ref()) {
            *counts.entry(token).or_default() += 1;
        }
    }
    let mut entries: Vec<(String, u64)> = counts.into_iter().filter(|(_, c)| *c >= min_count.max(1)).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::with_counts(entries)
}
