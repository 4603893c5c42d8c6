//! A count-based recognizer for the simulated acoustic channel.
//!
//! Training accumulates token/grapheme co-occurrences from pairs whose token
//! count matches the transcript's grapheme count; decoding takes the
//! maximum-posterior grapheme per token.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Manifest;
use crate::error::{Error, Result};
use crate::simtts::{grapheme_char, text_to_graphemes, AudioTokens, ALPHABET_SIZE, GRAPHEME_COUNT};
use crate::textmetrics::{align, words};

pub const DEFAULT_BETA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionModel {
    /// `counts[token][grapheme]`.
    pub counts: Vec<Vec<u64>>,
    pub beta: f64,
    pub trained_pairs: usize,
    pub skipped_pairs: usize,
}

impl ConfusionModel {
    pub fn empty(beta: f64) -> Self {
        ConfusionModel {
            counts: vec![vec![0; GRAPHEME_COUNT]; ALPHABET_SIZE],
            beta,
            trained_pairs: 0,
            skipped_pairs: 0,
        }
    }

    fn add(&mut self, other: &ConfusionModel) {
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
        self.trained_pairs += other.trained_pairs;
        self.skipped_pairs += other.skipped_pairs;
    }

    /// Smoothed posterior over graphemes for one token.
    pub fn posterior(&self, token: u8) -> Vec<f64> {
        let row = &self.counts[token as usize];
        let total: f64 = row.iter().map(|&c| c as f64 + self.beta).sum();
        row.iter()
            .map(|&c| (c as f64 + self.beta) / total)
            .collect()
    }

    pub fn grapheme_totals(&self) -> Vec<u64> {
        (0..GRAPHEME_COUNT)
            .map(|g| self.counts.iter().map(|row| row[g]).sum())
            .collect()
    }

    /// Best grapheme per token. Ties go to the grapheme seen most often
    /// overall, then to the lower grapheme index.
    pub fn decode_table(&self) -> Vec<usize> {
        let totals = self.grapheme_totals();
        self.counts
            .iter()
            .map(|row| {
                (0..GRAPHEME_COUNT)
                    .max_by(|&a, &b| {
                        row[a]
                            .cmp(&row[b])
                            .then(totals[a].cmp(&totals[b]))
                            .then(b.cmp(&a))
                    })
                    .unwrap_or(0)
            })
            .collect()
    }

    pub fn decode(&self, audio: &AudioTokens) -> String {
        decode_with(&self.decode_table(), audio)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: ConfusionModel = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let shape_ok = model.counts.len() == ALPHABET_SIZE
            && model.counts.iter().all(|r| r.len() == GRAPHEME_COUNT)
            && model.beta > 0.0;
        if !shape_ok {
            return Err(Error::InvalidPlan(
                "recognizer file has the wrong shape".into(),
            ));
        }
        Ok(model)
    }
}

fn decode_with(table: &[usize], audio: &AudioTokens) -> String {
    let text: String = audio
        .tokens
        .iter()
        .map(|&t| grapheme_char(table[t as usize]))
        .collect();
    words(&text).join(" ")
}

/// Pairs whose token count differs from the transcript's grapheme count are
/// skipped and counted.
pub fn train_recognizer<'a, I>(pairs: I, beta: f64) -> Result<ConfusionModel>
where
    I: IntoParallelIterator<Item = (&'a AudioTokens, &'a str)>,
{
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::InvalidPlan(format!(
            "beta must be positive, got {beta}"
        )));
    }
    let model = pairs
        .into_par_iter()
        .fold(
            || ConfusionModel::empty(beta),
            |mut acc, (audio, text)| {
                match text_to_graphemes(&words(text)) {
                    Ok(g) if g.len() == audio.len() => {
                        for (&t, &g) in audio.tokens.iter().zip(&g) {
                            acc.counts[t as usize][g] += 1;
                        }
                        acc.trained_pairs += 1;
                    }
                    _ => acc.skipped_pairs += 1,
                }
                acc
            },
        )
        .reduce(
            || ConfusionModel::empty(beta),
            |mut a, b| {
                a.add(&b);
                a
            },
        );
    if model.trained_pairs == 0 {
        return Err(Error::NoUsablePairs {
            skipped: model.skipped_pairs,
        });
    }
    Ok(model)
}

/// Train on every utterance of `m` that carries audio; the rest count as skipped.
pub fn train_on_manifest(m: &Manifest, beta: f64) -> Result<ConfusionModel> {
    let missing = m.iter().filter(|u| u.audio.is_none()).count();
    let pairs: Vec<(&AudioTokens, &str)> = m
        .iter()
        .filter_map(|u| u.audio.as_ref().map(|a| (a, u.text.as_str())))
        .collect();
    match train_recognizer(pairs, beta) {
        Ok(mut model) => {
            model.skipped_pairs += missing;
            Ok(model)
        }
        Err(Error::NoUsablePairs { skipped }) => Err(Error::NoUsablePairs {
            skipped: skipped + missing,
        }),
        Err(e) => Err(e),
    }
}

/// Decoded transcript of every utterance in `m`, in manifest order; empty
/// for utterances without audio.
pub fn transcribe(model: &ConfusionModel, m: &Manifest) -> Vec<String> {
    let table = model.decode_table();
    m.utterances()
        .par_iter()
        .map(|u| {
            u.audio
                .as_ref()
                .map(|a| decode_with(&table, a))
                .unwrap_or_default()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Total errors over total reference words.
    pub corpus_wer: f64,
    pub per_utterance: BTreeMap<String, f64>,
    pub n_scored: usize,
    pub errors: usize,
    pub reference_words: usize,
    /// Utterances that could not be scored, with the reason.
    pub failures: BTreeMap<String, String>,
}

/// `(errors, reference words)` or the reason an utterance was not scored.
type Scored = std::result::Result<(usize, usize), String>;

pub fn evaluate(model: &ConfusionModel, test: &Manifest) -> EvalReport {
    let table = model.decode_table();
    let scored: Vec<(String, Scored)> = test
        .utterances()
        .par_iter()
        .map(|u| {
            let r = match &u.audio {
                None => Err(Error::MissingAudio(u.id.clone()).to_string()),
                Some(a) => {
                    let reference = words(&u.text);
                    if reference.is_empty() {
                        Err(Error::EmptyReference.to_string())
                    } else {
                        let hyp = decode_with(&table, a);
                        Ok((align(&reference, &words(&hyp)).errors(), reference.len()))
                    }
                }
            };
            (u.id.clone(), r)
        })
        .collect();

    let mut report = EvalReport {
        corpus_wer: 0.0,
        per_utterance: BTreeMap::new(),
        n_scored: 0,
        errors: 0,
        reference_words: 0,
        failures: BTreeMap::new(),
    };
    for (id, r) in scored {
        match r {
            Ok((e, n)) => {
                report.per_utterance.insert(id, e as f64 / n as f64);
                report.errors += e;
                report.reference_words += n;
                report.n_scored += 1;
            }
            Err(msg) => {
                report.failures.insert(id, msg);
            }
        }
    }
    report.corpus_wer = pooled_wer(report.errors, report.reference_words);
    report
}

pub fn pooled_wer(errors: usize, reference_words: usize) -> f64 {
    if reference_words == 0 {
        0.0
    } else {
        errors as f64 / reference_words as f64
    }
}
