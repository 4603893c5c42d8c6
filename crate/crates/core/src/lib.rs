//! Seeded, desk-scale simulation of training speech recognizers on
//! synthesized speech.
//!
//! Text corpora, speaker embeddings, an n-gram language model, a noisy-channel
//! synthesizer and a count-based recognizer are composed by [`pipeline`] into
//! paired experiments. The guide in `book/` walks through each part.

pub mod corpus;
pub mod error;
pub mod lm;
pub mod pipeline;
pub mod seed;
pub mod simasr;
pub mod simtts;
pub mod speaker;
pub mod textmetrics;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/speakers.md")]
    mod speakers {}
    #[doc = include_str!("../../../book/src/language-model.md")]
    mod language_model {}
    #[doc = include_str!("../../../book/src/wer.md")]
    mod wer {}
    #[doc = include_str!("../../../book/src/synthesis.md")]
    mod synthesis {}
    #[doc = include_str!("../../../book/src/recognizer.md")]
    mod recognizer {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
