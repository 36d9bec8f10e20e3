//! Quality estimation for synthetic code-mixed Hinglish sentences.
//!
//! Given a parallel English / Hindi / Hinglish triple, the model predicts
//! one of ten classes for either the average human rating (1–10) or the
//! disagreement between the two raters (0–9). English and Hindi are read by
//! separate bidirectional LSTMs over frozen word vectors; their per-step
//! outputs are concatenated and summarized by a third LSTM. The Hinglish
//! sentence enters as a bag-of-tokens presence vector through a dense layer.
//! Both branches are joined and fed to a ten-way linear classifier.
//!
//! The crate is organized bottom-up:
//!
//! - [`autodiff`]: tensors, reverse-mode graph, Adam.
//! - [`corpus`]: reading the dataset and deriving labels.
//! - [`textprep`]: tokens, vocabularies, embeddings, encoded inputs.
//! - [`model`]: the network and its checkpoint format.
//! - [`train`]: batching, the training loop, prediction.
//! - [`metrics`]: F1, Cohen's kappa, MSE, accuracy.

pub mod autodiff;
pub mod corpus;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod textprep;
pub mod train;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/labels.md")]
    mod labels {}
    #[doc = include_str!("../../../book/src/text.md")]
    mod text {}
    #[doc = include_str!("../../../book/src/architecture.md")]
    mod architecture {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
