//! Additive-smoothed backoff n-gram language model: training, perplexity
//! scoring, and constrained ancestral sampling of new utterances.
//!
//! For a stored context the conditional distribution over `vocab ∪ {</s>}`
//! is `(c(ctx, w) + α) / (c(ctx) + α (V + 1))`, which sums to one exactly.
//! An unseen context backs off to the next shorter one; scoring multiplies by
//! a fixed backoff weight at each step, sampling renormalizes (the weight
//! cancels).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Manifest;
use crate::error::{Error, Result};
use crate::seed;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const DEFAULT_BACKOFF_WEIGHT: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Default)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    alpha: f64,
    backoff_weight: f64,
    vocab: BTreeSet<String>,
    vocab_list: Vec<String>,
    /// Context words joined by a single space; the empty string is the
    /// unigram context.
    contexts: HashMap<String, ContextCounts>,
}

/// On-disk form: ordered maps so the file is byte-stable.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    order: usize,
    alpha: f64,
    backoff_weight: f64,
    vocab: BTreeSet<String>,
    counts: BTreeMap<String, BTreeMap<String, u64>>,
}

fn padded(words: &[&str], order: usize) -> Vec<String> {
    let mut seq: Vec<String> = std::iter::repeat_n(BOS.to_string(), order - 1).collect();
    seq.extend(words.iter().map(|w| w.to_string()));
    seq.push(EOS.to_string());
    seq
}

pub fn train_lm(m: &Manifest, order: usize, alpha: f64) -> Result<NGramModel> {
    if order == 0 {
        return Err(Error::InvalidLm("order must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidLm(
            "smoothing constant must be positive".into(),
        ));
    }
    if m.is_empty() {
        return Err(Error::EmptyManifest(m.name.clone()));
    }
    let mut vocab = BTreeSet::new();
    let mut contexts: HashMap<String, ContextCounts> = HashMap::new();
    for u in m.iter() {
        let ws = u.words();
        vocab.extend(ws.iter().map(|w| w.to_string()));
        let seq = padded(&ws, order);
        for t in (order - 1)..seq.len() {
            for k in 0..order {
                let ctx = seq[t - k..t].join(" ");
                let entry = contexts.entry(ctx).or_default();
                entry.total += 1;
                *entry.next.entry(seq[t].clone()).or_default() += 1;
            }
        }
    }
    Ok(NGramModel {
        order,
        alpha,
        backoff_weight: DEFAULT_BACKOFF_WEIGHT,
        vocab_list: vocab.iter().cloned().collect(),
        vocab,
        contexts,
    })
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn backoff_weight(&self) -> f64 {
        self.backoff_weight
    }

    pub fn with_backoff_weight(mut self, w: f64) -> Self {
        self.backoff_weight = w;
        self
    }

    /// Same counts, different smoothing constant.
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn vocab(&self) -> &BTreeSet<String> {
        &self.vocab
    }

    /// Number of predictable events: vocabulary words plus the end marker.
    pub fn n_events(&self) -> usize {
        self.vocab.len() + 1
    }

    /// Every stored context, as word lists, in sorted order.
    pub fn stored_contexts(&self) -> Vec<Vec<String>> {
        let mut keys: Vec<&String> = self.contexts.keys().collect();
        keys.sort();
        keys.into_iter()
            .map(|k| k.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    pub fn is_stored(&self, context: &[&str]) -> bool {
        self.contexts.contains_key(&context.join(" "))
    }

    /// Smoothed probability of `word` after a stored `context`. Returns
    /// `None` when the context was never observed.
    pub fn conditional(&self, context: &[&str], word: &str) -> Option<f64> {
        let c = self.contexts.get(&context.join(" "))?;
        let n = c.next.get(word).copied().unwrap_or(0);
        Some((n as f64 + self.alpha) / (c.total as f64 + self.alpha * self.n_events() as f64))
    }

    /// The smoothed distribution over `vocab ∪ {</s>}` for a stored context.
    pub fn distribution(&self, context: &[&str]) -> Option<Vec<(String, f64)>> {
        self.contexts.get(&context.join(" "))?;
        Some(
            self.vocab
                .iter()
                .map(String::as_str)
                .chain(std::iter::once(EOS))
                .map(|w| (w.to_string(), self.conditional(context, w).expect("stored")))
                .collect(),
        )
    }

    /// Backoff score of `word` given up to `order - 1` preceding tokens.
    fn score(&self, context: &[&str], word: &str) -> f64 {
        let mut weight = 1.0;
        let mut ctx = context;
        loop {
            if let Some(p) = self.conditional(ctx, word) {
                return weight * p;
            }
            // The empty context is always stored for a trained model.
            ctx = &ctx[1..];
            weight *= self.backoff_weight;
        }
    }

    fn longest_stored(&self, mut ctx: &[&str]) -> &ContextCounts {
        loop {
            if let Some(c) = self.contexts.get(&ctx.join(" ")) {
                return c;
            }
            assert!(
                !ctx.is_empty(),
                "a trained model always stores the empty context"
            );
            ctx = &ctx[1..];
        }
    }

    /// Per-word perplexity, counting the end marker as one event.
    pub fn perplexity<S: AsRef<str>>(&self, sentence: &[S]) -> f64 {
        let ws: Vec<&str> = sentence.iter().map(|s| s.as_ref()).collect();
        let seq = padded(&ws, self.order);
        let seq: Vec<&str> = seq.iter().map(String::as_str).collect();
        let mut log_sum = 0.0;
        let mut t_count = 0usize;
        for t in (self.order - 1)..seq.len() {
            log_sum += self.score(&seq[t + 1 - self.order..t], seq[t]).ln();
            t_count += 1;
        }
        (-log_sum / t_count as f64).exp()
    }

    fn draw(&self, context: &[&str], rng: &mut seed::Rng) -> String {
        let c = self.longest_stored(context);
        let z = c.total as f64 + self.alpha * self.n_events() as f64;
        let mut x = rng.random::<f64>() * z;
        if x < c.total as f64 {
            for (w, &n) in &c.next {
                if x < n as f64 {
                    return w.clone();
                }
                x -= n as f64;
            }
        }
        let k = rng.random_range(0..self.n_events());
        self.vocab_list
            .get(k)
            .cloned()
            .unwrap_or_else(|| EOS.to_string())
    }

    /// One ancestral sample; `None` if `max_words` words are produced
    /// without reaching the end marker, or if the end comes immediately.
    fn sample_one(&self, max_words: usize, rng: &mut seed::Rng) -> Option<Vec<String>> {
        let mut history: Vec<String> = vec![BOS.to_string(); self.order - 1];
        let mut words = Vec::new();
        loop {
            let ctx: Vec<&str> = history[history.len() + 1 - self.order..]
                .iter()
                .map(String::as_str)
                .collect();
            let w = self.draw(&ctx, rng);
            if w == EOS {
                return (!words.is_empty()).then_some(words);
            }
            words.push(w.clone());
            history.push(w);
            if words.len() >= max_words {
                return None;
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(w, &self.to_file())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f: ModelFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        Ok(Self::from_file(f))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    fn to_file(&self) -> ModelFile {
        ModelFile {
            order: self.order,
            alpha: self.alpha,
            backoff_weight: self.backoff_weight,
            vocab: self.vocab.clone(),
            counts: self
                .contexts
                .iter()
                .map(|(k, c)| (k.clone(), c.next.clone()))
                .collect(),
        }
    }

    fn from_file(f: ModelFile) -> Self {
        let contexts = f
            .counts
            .into_iter()
            .map(|(k, next)| {
                let total = next.values().sum();
                (k, ContextCounts { total, next })
            })
            .collect();
        NGramModel {
            order: f.order,
            alpha: f.alpha,
            backoff_weight: f.backoff_weight,
            vocab_list: f.vocab.iter().cloned().collect(),
            vocab: f.vocab,
            contexts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConstraints {
    /// Exclusive bound: accepted sentences have at most `max_words - 1` words.
    pub max_words: usize,
    /// Exclusive bound on per-word perplexity.
    pub max_perplexity: f64,
    #[serde(default = "default_attempts")]
    pub max_attempts_per_sample: usize,
}

fn default_attempts() -> usize {
    100
}

impl SamplingConstraints {
    pub fn new(max_words: usize, max_perplexity: f64) -> Self {
        SamplingConstraints {
            max_words,
            max_perplexity,
            max_attempts_per_sample: default_attempts(),
        }
    }

    /// Long-sentence setting: fewer than 20 words, perplexity under 500.
    pub fn long_form() -> Self {
        Self::new(20, 500.0)
    }

    /// Short-sentence setting: fewer than 5 words, perplexity under 200.
    pub fn short_form() -> Self {
        Self::new(5, 200.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_words < 2 {
            return Err(Error::InvalidLm("max_words must be at least 2".into()));
        }
        if self.max_perplexity.is_nan() || self.max_perplexity <= 1.0 {
            return Err(Error::InvalidLm("max_perplexity must exceed 1".into()));
        }
        if self.max_attempts_per_sample == 0 {
            return Err(Error::InvalidLm(
                "max_attempts_per_sample must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn accepts(&self, lm: &NGramModel, sentence: &[String]) -> bool {
        !sentence.is_empty()
            && sentence.len() < self.max_words
            && lm.perplexity(sentence) < self.max_perplexity
    }
}

/// Draw `count` sentences satisfying `c`. Sample `i` uses seeds derived from
/// `(seed, i, attempt)`, so the output does not depend on thread scheduling.
pub fn sample_utterances(
    lm: &NGramModel,
    c: &SamplingConstraints,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<String>>> {
    c.validate()?;
    let results: Vec<Option<Vec<String>>> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let sample_seed = seed::derive(seed, "lm-sample", i);
            (0..c.max_attempts_per_sample as u64).find_map(|attempt| {
                let mut rng = seed::rng(seed::derive(sample_seed, "attempt", attempt));
                lm.sample_one(c.max_words, &mut rng)
                    .filter(|s| lm.perplexity(s) < c.max_perplexity)
            })
        })
        .collect();
    if results.iter().all(Option::is_some) {
        Ok(results.into_iter().flatten().collect())
    } else {
        Err(Error::SamplingExhausted {
            accepted: results.into_iter().flatten().collect(),
            requested: count,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Domain, Origin, Partition, Utterance};

    fn manifest(lines: &[&str]) -> Manifest {
        Manifest::from_utterances(
            "lm",
            Partition::Train,
            lines.iter().enumerate().map(|(i, t)| Utterance {
                id: format!("u{i}"),
                text: t.to_string(),
                speaker_id: "s".into(),
                domain: Domain::A,
                origin: Origin::Human,
                embedding_ref: None,
                audio: None,
            }),
        )
        .unwrap()
    }

    #[test]
    fn count_ratio_in_small_alpha_limit() {
        let lm = train_lm(&manifest(&["a b", "a c"]), 2, 1e-9).unwrap();
        assert!((lm.conditional(&["a"], "b").unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn order_one_is_smoothed_unigram() {
        let lm = train_lm(&manifest(&["a b a", "c"]), 1, 0.5).unwrap();
        // Tokens: a a b c plus two end markers; V + 1 = 4 events.
        let p = |w: &str| lm.conditional(&[], w).unwrap();
        assert!((p("a") - 2.5 / 8.0).abs() < 1e-12);
        assert!((p("b") - 1.5 / 8.0).abs() < 1e-12);
        assert!((p(EOS) - 2.5 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_limit_perplexity_is_events() {
        let words: Vec<String> = (0..10).map(|i| format!("w{i}")).collect();
        let text = words.join(" ");
        let lm = train_lm(&manifest(&[&text]), 1, 1e12).unwrap();
        assert_eq!(lm.n_events(), 11);
        let ppl = lm.perplexity(&["w3", "w1", "w9"]);
        assert!((ppl - 11.0).abs() < 1e-6, "{ppl}");
    }

    #[test]
    fn training_sentence_perplexity_matches_hand_computation() {
        let lm = train_lm(&manifest(&["a b", "a c"]), 2, 0.1).unwrap();
        let expect = (2.1f64 / 2.4 * (1.1 / 2.4) * (1.1 / 1.4)).powf(-1.0 / 3.0);
        let got = lm.perplexity(&["a", "b"]);
        assert!((got - expect).abs() < 1e-12);
        assert!(got <= lm.n_events() as f64);
    }

    #[test]
    fn unseen_context_backs_off_with_fixed_weight() {
        let lm = train_lm(&manifest(&["a b", "a c"]), 2, 0.1).unwrap();
        // The context "zz" was never stored, so "b" falls back to 0.4 * P(b).
        let p_zz = lm.conditional(&[BOS], "zz").unwrap();
        let p_b = 0.4 * lm.conditional(&[], "b").unwrap();
        let p_end = lm.conditional(&["b"], EOS).unwrap();
        let expect = (-(p_zz.ln() + p_b.ln() + p_end.ln()) / 3.0).exp();
        assert!((lm.perplexity(&["zz", "b"]) - expect).abs() < 1e-9);
    }

    #[test]
    fn oov_words_score_finitely() {
        let lm = train_lm(&manifest(&["a b", "a c"]), 3, 0.01).unwrap();
        let ppl = lm.perplexity(&["never", "seen", "words"]);
        assert!(ppl.is_finite() && ppl > 1.0);
    }

    #[test]
    fn stored_contexts_normalize() {
        let lm = train_lm(&manifest(&["a b c a", "b b a", "c a b c a"]), 3, 0.3).unwrap();
        for ctx in lm.stored_contexts() {
            let ctx: Vec<&str> = ctx.iter().map(String::as_str).collect();
            let total: f64 = lm.distribution(&ctx).unwrap().iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn retraining_is_byte_identical() {
        let m = manifest(&["a b c a", "b b a", "c a b c a"]);
        assert_eq!(
            train_lm(&m, 3, 0.3).unwrap().to_json().unwrap(),
            train_lm(&m, 3, 0.3).unwrap().to_json().unwrap()
        );
    }

    #[test]
    fn save_load_round_trip() {
        let lm = train_lm(&manifest(&["a b c a", "b b a"]), 2, 0.3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lm.json");
        lm.save(&p).unwrap();
        assert_eq!(NGramModel::load(&p).unwrap(), lm);
    }

    #[test]
    fn training_errors() {
        let m = manifest(&["a"]);
        assert!(train_lm(&m, 0, 0.1).is_err());
        assert!(train_lm(&m, 2, 0.0).is_err());
        assert!(train_lm(&manifest(&[]), 2, 0.1).is_err());
    }

    #[test]
    fn samples_respect_constraints_and_are_deterministic() {
        let lm = train_lm(&manifest(&["a b c a", "b b a", "c a b c a", "a"]), 2, 0.1).unwrap();
        let c = SamplingConstraints::new(4, 50.0);
        let s = sample_utterances(&lm, &c, 200, 5).unwrap();
        assert_eq!(s.len(), 200);
        for x in &s {
            assert!(!x.is_empty() && x.len() <= 3);
            assert!(lm.perplexity(x) < 50.0);
            assert!(x.iter().all(|w| lm.vocab().contains(w)));
        }
        assert_eq!(s, sample_utterances(&lm, &c, 200, 5).unwrap());
    }

    #[test]
    fn exhausted_sampling_returns_partial_result() {
        let lm = train_lm(&manifest(&["a b c a", "b b a"]), 2, 0.1).unwrap();
        let c = SamplingConstraints {
            max_words: 3,
            max_perplexity: 1.0001,
            max_attempts_per_sample: 3,
        };
        match sample_utterances(&lm, &c, 5, 1) {
            Err(Error::SamplingExhausted {
                accepted,
                requested,
            }) => {
                assert_eq!(requested, 5);
                assert!(accepted.len() < 5);
            }
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn constraint_validation() {
        assert!(SamplingConstraints::new(1, 10.0).validate().is_err());
        assert!(SamplingConstraints::new(5, 1.0).validate().is_err());
        assert!(SamplingConstraints::long_form().validate().is_ok());
    }
}
