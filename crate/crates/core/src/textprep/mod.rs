//! Tokenization, vocabularies, pretrained embedding tables, and encoding of
//! examples into model inputs.
//!
//! English and Hindi sentences become padded sequences of frozen embedding
//! vectors; the Hinglish sentence becomes a bag-of-tokens presence vector.

mod embedding;
mod encode;
mod vocab;

pub use embedding::{load_embeddings, parse_embeddings, EmbeddingError, EmbeddingTable, FALLBACK_RANGE};
pub use encode::{encode_multihot, encode_sequence, EncodedExample, MultiHot, PipelineOptions, Sequence, TextPipeline};
pub use vocab::{build_vocab, Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

/// Splits on whitespace, strips leading and trailing punctuation from each
/// piece, and lowercases Latin letters. Devanagari (including its combining
/// vowel signs) passes through unchanged.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|piece| piece.trim_matches(is_punctuation)).filter(|piece| !piece.is_empty()).map(lowercase_latin).collect()
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c, '\u{0964}' | '\u{0965}' | '\u{00A1}' | '\u{00AB}' | '\u{00B7}' | '\u{00BB}' | '\u{00BF}')
        || ('\u{2010}'..='\u{205E}').contains(&c)
}

fn lowercase_latin(token: &str) -> String {
    token
        .chars()
        .flat_map(|c| {
            let latin = c.is_ascii_alphabetic() || ('\u{00C0}'..='\u{024F}').contains(&c);
            let lower: Vec<char> = if latin { c.to_lowercase().collect() } else { vec![c] };
            lower
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_punctuation_and_lowercases() {
        assert_eq!(tokenize("I am going home."), ["i", "am", "going", "home"]);
        assert_eq!(tokenize("\"Hello,\" she said... (really)!"), ["hello", "she", "said", "really"]);
    }

    #[test]
    fn empty_and_normalized_inputs() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  ... !! ").is_empty());
        assert_eq!(tokenize("main ghar ja raha hoon"), ["main", "ghar", "ja", "raha", "hoon"]);
    }

    #[test]
    fn devanagari_untouched() {
        assert_eq!(tokenize("मैं घर जा रहा हूँ।"), ["मैं", "घर", "जा", "रहा", "हूँ"]);
    }

    #[test]
    fn inner_punctuation_kept() {
        assert_eq!(tokenize("don't e-mail ÉCOLE"), ["don't", "e-mail", "école"]);
    }
}
