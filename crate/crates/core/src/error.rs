use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain profile: {0}")]
    InvalidProfile(String),
    #[error("invalid partition ratios: {0}")]
    InvalidRatios(String),
    #[error("manifest `{0}` is empty")]
    EmptyManifest(String),
    #[error("duplicate utterance id `{0}`")]
    DuplicateId(String),
    #[error("invalid factor rank {rank} (must be in 1..={max})")]
    InvalidRank { rank: usize, max: usize },
    #[error("pool must contain at least one speaker")]
    EmptyPool,
    #[error("utterance `{0}` has no resolvable embedding reference")]
    MissingEmbedding(String),
    #[error("sampled strategy needs a speaker other than `{0}` in the pool")]
    NoOtherSpeaker(String),
    #[error("invalid language model parameters: {0}")]
    InvalidLm(String),
    #[error("sampling exhausted its attempt budget after accepting {} of {requested}", accepted.len())]
    SamplingExhausted {
        accepted: Vec<Vec<String>>,
        requested: usize,
    },
    #[error("reference transcript is empty")]
    EmptyReference,
    #[error("input text is empty")]
    EmptyText,
    #[error("unknown grapheme {0:?}")]
    UnknownGrapheme(char),
    #[error("invalid window arithmetic: {0}")]
    InvalidWindow(String),
    #[error("style vectors have mismatched dimensions ({expected} vs {found})")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no usable training pairs ({skipped} skipped for length mismatch)")]
    NoUsablePairs { skipped: usize },
    #[error("utterance `{0}` carries no audio")]
    MissingAudio(String),
    #[error("invalid experiment plan: {0}")]
    InvalidPlan(String),
    #[error("arm `{arm}` needs a speaker pool for domain {domain}")]
    MissingPool { arm: String, domain: String },
    #[error("lexical_lm arm `{0}` has no trained language model")]
    MissingLm(String),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),
}
