//! A deterministic stand-in for a multi-speaker synthesizer.
//!
//! Text becomes a grapheme sequence (`a`..`z` plus a word separator), and each
//! grapheme becomes one token of a 64-symbol acoustic alphabet drawn from the
//! speaker's confusion row. A speaker close to the seen-speaker manifold
//! mostly emits the codebook token and occasionally a learnable
//! speaker-specific alternate; an off-manifold speaker emits idiosyncratic
//! tokens that no recognizer could have learned.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Domain, Manifest, Origin, Partition, Utterance};
use crate::error::{Error, Result};
use crate::seed;
use crate::speaker::{
    draw_embedding, manifold_distance, EmbeddingPool, FactorModel, SpeakerEmbedding,
    SpeakerStrategy, EMBEDDING_DIM,
};

pub const ALPHABET_SIZE: usize = 64;
/// Separator plus `a`..`z`.
pub const GRAPHEME_COUNT: usize = 27;
pub const SEPARATOR: usize = 0;
/// Most alternate tokens any grapheme has.
pub const ALTERNATES: usize = 2;
pub const FRAMES_PER_TOKEN: usize = 5;
pub const FRAME_SECONDS: f64 = 0.0125;
pub const STYLE_DIM: usize = 16;
pub const STYLE_WINDOW: f64 = 2.0;
pub const STYLE_HOP: f64 = 1.0;

pub fn grapheme_index(c: char) -> Result<usize> {
    match c {
        ' ' => Ok(SEPARATOR),
        'a'..='z' => Ok(c as usize - 'a' as usize + 1),
        other => Err(Error::UnknownGrapheme(other)),
    }
}

pub fn grapheme_char(g: usize) -> char {
    if g == SEPARATOR {
        ' '
    } else {
        (b'a' + (g as u8 - 1)) as char
    }
}

/// Words joined by single separators.
pub fn text_to_graphemes<S: AsRef<str>>(words: &[S]) -> Result<Vec<usize>> {
    if words.is_empty() {
        return Err(Error::EmptyText);
    }
    let mut out = Vec::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            out.push(SEPARATOR);
        }
        for c in w.as_ref().chars() {
            out.push(grapheme_index(c)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AudioTokens {
    pub tokens: Vec<u8>,
}

impl AudioTokens {
    pub fn new(tokens: Vec<u8>) -> Self {
        AudioTokens { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn frames_per_token(&self) -> usize {
        FRAMES_PER_TOKEN
    }

    pub fn duration_seconds(&self) -> f64 {
        token_seconds() * self.tokens.len() as f64
    }
}

fn token_seconds() -> f64 {
    FRAMES_PER_TOKEN as f64 * FRAME_SECONDS
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub domain: Domain,
    pub seed: u64,
    canonical: Vec<u8>,
    alternates: Vec<Vec<u8>>,
    directions: Vec<Vec<Vec<f64>>>,
}

impl Codebook {
    /// Letters whose canonical tokens are cycled in the domain B codebook.
    pub const DOMAIN_B_ROTATION: usize = 2;

    /// Canonical tokens are shared across domains (up to a small rotation in
    /// domain B); alternate tokens and the directions that pick them are drawn
    /// per domain.
    pub fn for_domain(domain: Domain, seed: u64) -> Self {
        let rotation = match domain {
            Domain::A => 0,
            Domain::B => Self::DOMAIN_B_ROTATION,
        };
        Self::with_rotation(domain, seed, rotation)
    }

    pub fn with_rotation(domain: Domain, seed: u64, rotation: usize) -> Self {
        let tag = domain_tag(domain);
        let mut perm: Vec<u8> = (0..ALPHABET_SIZE as u8).collect();
        perm.shuffle(&mut seed::rng(seed::derive(seed, "codebook", 0)));
        let mut canonical = perm[..GRAPHEME_COUNT].to_vec();
        let spares = &perm[GRAPHEME_COUNT..];

        if rotation >= 2 {
            let mut letters: Vec<usize> = (1..GRAPHEME_COUNT).collect();
            letters.shuffle(&mut seed::rng(seed::derive(seed, "codebook-rotation", tag)));
            let chosen = &letters[..rotation.min(GRAPHEME_COUNT - 1)];
            let first = canonical[chosen[0]];
            for w in 0..chosen.len() - 1 {
                canonical[chosen[w]] = canonical[chosen[w + 1]];
            }
            canonical[chosen[chosen.len() - 1]] = first;
        }

        let mut shuffled = spares.to_vec();
        shuffled.shuffle(&mut seed::rng(seed::derive(
            seed,
            "codebook-alternates",
            tag,
        )));
        // Every grapheme gets one spare token; the leftover spares give a
        // second alternate to the first few graphemes. No spare is shared.
        let alternates = (0..GRAPHEME_COUNT)
            .map(|g| {
                let mut alts = vec![shuffled[g]];
                if let Some(&t) = shuffled.get(GRAPHEME_COUNT + g) {
                    alts.push(t);
                }
                alts
            })
            .collect();

        let mut rng = seed::rng(seed::derive(seed, "codebook-directions", tag));
        let directions = (0..GRAPHEME_COUNT)
            .map(|_| {
                (0..ALTERNATES)
                    .map(|_| {
                        (0..EMBEDDING_DIM)
                            .map(|_| rng.sample(StandardNormal))
                            .collect()
                    })
                    .collect()
            })
            .collect();

        Codebook {
            domain,
            seed,
            canonical,
            alternates,
            directions,
        }
    }

    pub fn canonical(&self, grapheme: usize) -> u8 {
        self.canonical[grapheme]
    }

    pub fn alternates(&self, grapheme: usize) -> &[u8] {
        &self.alternates[grapheme]
    }

    /// Inverse of the canonical map.
    pub fn grapheme_of(&self, token: u8) -> Option<usize> {
        self.canonical.iter().position(|&t| t == token)
    }

    pub fn encode(&self, graphemes: &[usize]) -> AudioTokens {
        AudioTokens::new(graphemes.iter().map(|&g| self.canonical[g]).collect())
    }

    /// The alternate a speaker near the manifold uses for `grapheme`.
    fn manifold_alternate(&self, grapheme: usize, e: &[f64]) -> u8 {
        let score = |j: usize| -> f64 {
            self.directions[grapheme][j]
                .iter()
                .zip(e)
                .map(|(a, b)| a * b)
                .sum()
        };
        let best = (0..self.alternates[grapheme].len())
            .max_by(|&a, &b| score(a).total_cmp(&score(b)).then(b.cmp(&a)))
            .unwrap_or(0);
        self.alternates[grapheme][best]
    }
}

fn domain_tag(domain: Domain) -> u64 {
    match domain {
        Domain::A => 0,
        Domain::B => 1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    /// `quality = exp(-lambda * manifold_distance)`.
    pub lambda: f64,
    /// Mixing weight of a perfect-quality speaker.
    pub noise_floor: f64,
    /// Share of the mixed mass on the speaker's own alternate; the rest is uniform.
    pub rho: f64,
    /// Standard deviation of global and local style components.
    pub style_scale: f64,
    /// Log-temperature per unit of mean style.
    pub temperature_gain: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            lambda: 4.0,
            noise_floor: 0.15,
            rho: 0.95,
            style_scale: 0.5,
            temperature_gain: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerProfile {
    pub embedding_id: String,
    pub quality: f64,
    /// One row per grapheme, each a distribution over the 64 tokens.
    pub confusion: Vec<Vec<f64>>,
    pub global_style: Vec<f64>,
    pub style_scale: f64,
    pub temperature_gain: f64,
}

impl SpeakerProfile {
    /// Probability that a grapheme is emitted as anything but its canonical token.
    pub fn corruption(&self, cb: &Codebook, grapheme: usize) -> f64 {
        1.0 - self.confusion[grapheme][cb.canonical(grapheme) as usize]
    }
}

pub fn derive_profile(
    e: &SpeakerEmbedding,
    cb: &Codebook,
    fm: &FactorModel,
    cfg: &ChannelConfig,
) -> SpeakerProfile {
    let quality = (-cfg.lambda * manifold_distance(e, fm)).exp();
    profile_for_quality(e, cb, quality, cfg)
}

/// The profile `derive_profile` builds once the quality is known.
pub fn profile_for_quality(
    e: &SpeakerEmbedding,
    cb: &Codebook,
    quality: f64,
    cfg: &ChannelConfig,
) -> SpeakerProfile {
    let quality = quality.clamp(0.0, 1.0);
    let m = cfg.noise_floor + (1.0 - cfg.noise_floor) * (1.0 - quality);
    let mut rng = seed::rng(seed::derive(embedding_hash(e), "profile", cb.seed));
    let uniform = m * (1.0 - cfg.rho) / ALPHABET_SIZE as f64;

    let confusion = (0..GRAPHEME_COUNT)
        .map(|g| {
            let canon = cb.canonical(g);
            let draw: f64 = rng.random();
            let other = rng.random_range(0..ALPHABET_SIZE as u8 - 1);
            let own = if draw < quality {
                cb.manifold_alternate(g, &e.vector)
            } else if other >= canon {
                other + 1
            } else {
                other
            };
            let mut row = vec![uniform; ALPHABET_SIZE];
            row[canon as usize] += 1.0 - m;
            row[own as usize] += m * cfg.rho;
            row
        })
        .collect();
    let global_style = (0..STYLE_DIM)
        .map(|_| cfg.style_scale * rng.sample::<f64, _>(StandardNormal))
        .collect();

    SpeakerProfile {
        embedding_id: e.id.clone(),
        quality,
        confusion,
        global_style,
        style_scale: cfg.style_scale,
        temperature_gain: cfg.temperature_gain,
    }
}

fn embedding_hash(e: &SpeakerEmbedding) -> u64 {
    let bytes: Vec<u8> = e
        .vector
        .iter()
        .flat_map(|x| ((x * 1e9).round() as i64).to_le_bytes())
        .collect();
    seed::hash_bytes(&bytes)
}

/// Windows `[i*hop, i*hop + window]` for `i = 0..=floor((duration - window) / hop)`,
/// or the single window `[0, duration]` when the utterance is shorter than one
/// window. A tail shorter than `hop` may be left outside the last window.
pub fn chunk_windows(duration: f64, window: f64, hop: f64) -> Result<Vec<(f64, f64)>> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::InvalidWindow(format!(
            "duration must be positive, got {duration}"
        )));
    }
    if !(window.is_finite() && window > 0.0) {
        return Err(Error::InvalidWindow(format!(
            "window must be positive, got {window}"
        )));
    }
    if !(hop > 0.0 && hop <= window) {
        return Err(Error::InvalidWindow(format!(
            "hop must lie in (0, window], got {hop}"
        )));
    }
    if duration < window {
        return Ok(vec![(0.0, duration)]);
    }
    let n = ((duration - window) / hop + 1e-9).floor() as usize + 1;
    Ok((0..n)
        .map(|i| {
            let start = i as f64 * hop;
            (start, start + window)
        })
        .collect())
}

/// Element-wise `global + locals[i]` for every window.
pub fn combine_style(global: &[f64], locals: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    locals
        .iter()
        .map(|l| {
            if l.len() != global.len() {
                return Err(Error::DimensionMismatch {
                    expected: global.len(),
                    found: l.len(),
                });
            }
            Ok(global.iter().zip(l).map(|(g, x)| g + x).collect())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleWindows {
    pub global_style: Vec<f64>,
    pub local_styles: Vec<Vec<f64>>,
    pub window: f64,
    pub hop: f64,
}

impl StyleWindows {
    pub fn draw(profile: &SpeakerProfile, duration: f64, seed: u64) -> Result<Self> {
        let windows = chunk_windows(duration, STYLE_WINDOW, STYLE_HOP)?;
        let mut rng = seed::rng(seed::derive(seed, "local-style", 0));
        let local_styles = windows
            .iter()
            .map(|_| {
                (0..STYLE_DIM)
                    .map(|_| profile.style_scale * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        Ok(StyleWindows {
            global_style: profile.global_style.clone(),
            local_styles,
            window: STYLE_WINDOW,
            hop: STYLE_HOP,
        })
    }

    /// Emission temperature per window.
    pub fn temperatures(&self, gain: f64) -> Result<Vec<f64>> {
        Ok(combine_style(&self.global_style, &self.local_styles)?
            .iter()
            .map(|v| (gain * v.iter().sum::<f64>() / v.len().max(1) as f64).exp())
            .collect())
    }

    /// Window governing the token that starts at `time`.
    pub fn window_at(&self, time: f64) -> usize {
        ((time / self.hop).floor() as usize).min(self.local_styles.len() - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FailureModel {
    /// Word count at which failures start (`L0`).
    pub onset: f64,
    /// Words over which the failure probability ramps from 0 to 1 (`K`).
    pub slope: f64,
    pub babble_max: usize,
    /// Probability that a failure truncates; otherwise it babbles.
    pub truncate_prob: f64,
}

impl Default for FailureModel {
    fn default() -> Self {
        FailureModel {
            onset: 20.0,
            slope: 40.0,
            babble_max: 80,
            truncate_prob: 0.7,
        }
    }
}

impl FailureModel {
    pub fn none() -> Self {
        FailureModel {
            onset: f64::MAX,
            slope: 1.0,
            babble_max: 0,
            truncate_prob: 0.5,
        }
    }

    /// `clamp((words - onset) / slope, 0, 1)`.
    pub fn p_fail(&self, words: usize) -> f64 {
        ((words as f64 - self.onset) / self.slope).clamp(0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.slope > 0.0 && (0.0..=1.0).contains(&self.truncate_prob);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidPlan(format!(
                "invalid failure model {self:?}"
            )))
        }
    }
}

pub fn synthesize<S: AsRef<str>>(
    text: &[S],
    profile: &SpeakerProfile,
    failure: &FailureModel,
    seed: u64,
) -> Result<AudioTokens> {
    let graphemes = text_to_graphemes(text)?;
    let n = graphemes.len();
    let style = StyleWindows::draw(profile, n as f64 * token_seconds(), seed)?;
    let temps = style.temperatures(profile.temperature_gain)?;

    let mut rng = seed::rng(seed::derive(seed, "emit", 0));
    let mut weights = vec![0.0; ALPHABET_SIZE];
    let mut tokens: Vec<u8> = graphemes
        .iter()
        .enumerate()
        .map(|(k, &g)| {
            let inv_t = 1.0 / temps[style.window_at(k as f64 * token_seconds())];
            let mut total = 0.0;
            for (w, &p) in weights.iter_mut().zip(&profile.confusion[g]) {
                *w = if p > 0.0 { p.powf(inv_t) } else { 0.0 };
                total += *w;
            }
            let mut u = rng.random::<f64>() * total;
            let mut pick = ALPHABET_SIZE - 1;
            for (t, &w) in weights.iter().enumerate() {
                if w > 0.0 {
                    pick = t;
                    if u < w {
                        break;
                    }
                    u -= w;
                }
            }
            pick as u8
        })
        .collect();

    let mut frng = seed::rng(seed::derive(seed, "failure", 0));
    let fail: f64 = frng.random();
    let mode: f64 = frng.random();
    if fail < failure.p_fail(text.len()) {
        if mode < failure.truncate_prob && n >= 2 {
            let cut = frng.random_range(1..n);
            tokens.truncate(cut);
        } else {
            let extra = frng.random_range(1..=failure.babble_max.max(1));
            tokens.extend((0..extra).map(|_| frng.random_range(0..ALPHABET_SIZE as u8)));
        }
    }
    Ok(AudioTokens::new(tokens))
}

/// Everything needed to synthesize in one domain.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    pub codebook: Codebook,
    pub pool: EmbeddingPool,
    pub channel: ChannelConfig,
    pub failure: FailureModel,
    profiles: BTreeMap<String, SpeakerProfile>,
}

impl Synthesizer {
    pub fn new(
        codebook: Codebook,
        pool: EmbeddingPool,
        channel: ChannelConfig,
        failure: FailureModel,
    ) -> Self {
        let profiles = pool
            .embeddings
            .par_iter()
            .map(|(id, e)| {
                (
                    id.clone(),
                    derive_profile(e, &codebook, &pool.factor_model, &channel),
                )
            })
            .collect();
        Synthesizer {
            codebook,
            pool,
            channel,
            failure,
            profiles,
        }
    }

    pub fn profile(&self, e: &SpeakerEmbedding) -> SpeakerProfile {
        match self.profiles.get(&e.id) {
            Some(p) if self.pool.get(&e.id) == Some(e) => p.clone(),
            _ => derive_profile(e, &self.codebook, &self.pool.factor_model, &self.channel),
        }
    }

    pub fn pool_profile(&self, id: &str) -> Option<&SpeakerProfile> {
        self.profiles.get(id)
    }

    /// Synthetic copies of every utterance in `m`, one per source utterance,
    /// with ids `{prefix}-{source id}`.
    pub fn synthesize_manifest(
        &self,
        m: &Manifest,
        strategy: SpeakerStrategy,
        prefix: &str,
        seed: u64,
    ) -> Result<Manifest> {
        let utts: Vec<Utterance> = m
            .utterances()
            .par_iter()
            .map(|u| self.synthesize_utterance(u, strategy, prefix, seed))
            .collect::<Result<_>>()?;
        Manifest::from_utterances(format!("{}-{prefix}", m.name), Partition::Unsplit, utts)
    }

    pub fn synthesize_utterance(
        &self,
        u: &Utterance,
        strategy: SpeakerStrategy,
        prefix: &str,
        seed: u64,
    ) -> Result<Utterance> {
        let e = draw_embedding(
            strategy,
            u,
            &self.pool,
            seed::derive_str(seed, "speaker", &u.id),
        )?;
        let profile = self.profile(&e);
        let audio = synthesize(
            &u.words(),
            &profile,
            &self.failure,
            seed::derive_str(seed, "synth", &u.id),
        )?;
        Ok(Utterance {
            id: format!("{prefix}-{}", u.id),
            text: u.text.clone(),
            speaker_id: e.id.clone(),
            domain: u.domain,
            origin: Origin::Synthetic,
            embedding_ref: Some(e.id),
            audio: Some(audio),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speaker::build_pool;

    fn pool() -> EmbeddingPool {
        build_pool(20, 8, 3).unwrap()
    }

    fn member(p: &EmbeddingPool) -> SpeakerEmbedding {
        p.embeddings.values().next().unwrap().clone()
    }

    fn random_embedding(seed: u64) -> SpeakerEmbedding {
        let u = Utterance {
            id: "u".into(),
            text: "a".into(),
            speaker_id: "x".into(),
            domain: Domain::A,
            origin: Origin::Human,
            embedding_ref: None,
            audio: None,
        };
        draw_embedding(SpeakerStrategy::Random, &u, &pool(), seed).unwrap()
    }

    #[test]
    fn grapheme_round_trip() {
        for g in 0..GRAPHEME_COUNT {
            assert_eq!(grapheme_index(grapheme_char(g)).unwrap(), g);
        }
        assert!(matches!(
            grapheme_index('Z'),
            Err(Error::UnknownGrapheme('Z'))
        ));
        assert_eq!(text_to_graphemes(&["ab", "c"]).unwrap(), vec![1, 2, 0, 3]);
        assert!(matches!(
            text_to_graphemes::<&str>(&[]),
            Err(Error::EmptyText)
        ));
    }

    #[test]
    fn codebook_is_injective_and_alternates_are_spare() {
        for domain in [Domain::A, Domain::B] {
            let cb = Codebook::for_domain(domain, 11);
            let mut seen = std::collections::BTreeSet::new();
            for g in 0..GRAPHEME_COUNT {
                assert!(seen.insert(cb.canonical(g)));
                assert_eq!(cb.grapheme_of(cb.canonical(g)), Some(g));
            }
            for g in 0..GRAPHEME_COUNT {
                for &t in cb.alternates(g) {
                    assert!(cb.grapheme_of(t).is_none());
                }
            }
            let spares: Vec<u8> = (0..GRAPHEME_COUNT)
                .flat_map(|g| cb.alternates(g).to_vec())
                .collect();
            let distinct: std::collections::BTreeSet<u8> = spares.iter().copied().collect();
            assert_eq!(
                (spares.len(), distinct.len()),
                (
                    ALPHABET_SIZE - GRAPHEME_COUNT,
                    ALPHABET_SIZE - GRAPHEME_COUNT
                )
            );
        }
    }

    #[test]
    fn domain_b_rotates_a_few_letters() {
        let a = Codebook::for_domain(Domain::A, 11);
        let b = Codebook::for_domain(Domain::B, 11);
        let moved = (0..GRAPHEME_COUNT)
            .filter(|&g| a.canonical(g) != b.canonical(g))
            .count();
        assert_eq!(moved, Codebook::DOMAIN_B_ROTATION);
        assert_eq!(a.canonical(SEPARATOR), b.canonical(SEPARATOR));
    }

    #[test]
    fn perfect_quality_without_noise_is_identity() {
        let p = pool();
        let cb = Codebook::for_domain(Domain::A, 1);
        let cfg = ChannelConfig {
            noise_floor: 0.0,
            ..ChannelConfig::default()
        };
        let prof = profile_for_quality(&member(&p), &cb, 1.0, &cfg);
        for g in 0..GRAPHEME_COUNT {
            for t in 0..ALPHABET_SIZE {
                let expect = if t == cb.canonical(g) as usize {
                    1.0
                } else {
                    0.0
                };
                assert_eq!(prof.confusion[g][t], expect);
            }
        }
        let derived = derive_profile(&member(&p), &cb, &p.factor_model, &cfg);
        assert!(derived.quality > 1.0 - 1e-9);
    }

    #[test]
    fn rows_are_distributions() {
        let p = pool();
        let cb = Codebook::for_domain(Domain::B, 2);
        for e in [member(&p), random_embedding(4)] {
            let prof = derive_profile(&e, &cb, &p.factor_model, &ChannelConfig::default());
            for row in &prof.confusion {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn profiles_are_deterministic() {
        let p = pool();
        let cb = Codebook::for_domain(Domain::A, 1);
        let cfg = ChannelConfig::default();
        let e = random_embedding(9);
        assert_eq!(
            derive_profile(&e, &cb, &p.factor_model, &cfg),
            derive_profile(&e, &cb, &p.factor_model, &cfg)
        );
    }

    #[test]
    fn random_speakers_have_lower_quality_than_pool() {
        let cfg = ChannelConfig::default();
        for s in 0..5 {
            let p = build_pool(30, 8, s).unwrap();
            let cb = Codebook::for_domain(Domain::A, s);
            let pool_q: f64 = p
                .embeddings
                .values()
                .map(|e| derive_profile(e, &cb, &p.factor_model, &cfg).quality)
                .sum::<f64>()
                / p.len() as f64;
            let r = derive_profile(&random_embedding(100 + s), &cb, &p.factor_model, &cfg);
            assert!(r.quality < pool_q, "seed {s}: {} vs {pool_q}", r.quality);
        }
    }

    #[test]
    fn corruption_is_monotone_in_quality() {
        let p = pool();
        let e = member(&p);
        let cb = Codebook::for_domain(Domain::A, 5);
        let cfg = ChannelConfig::default();
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let expected: Vec<f64> = grid
            .iter()
            .map(|&q| {
                let prof = profile_for_quality(&e, &cb, q, &cfg);
                (0..GRAPHEME_COUNT)
                    .map(|g| prof.corruption(&cb, g))
                    .sum::<f64>()
            })
            .collect();
        for w in expected.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }

        let text: Vec<String> = vec!["the quick brown fox jumps over the lazy dog".into(); 1];
        let words: Vec<&str> = text[0].split(' ').collect();
        let g = text_to_graphemes(&words).unwrap();
        let observed: Vec<f64> = [0.0, 0.5, 1.0]
            .iter()
            .map(|&q| {
                let prof = profile_for_quality(&e, &cb, q, &cfg);
                let mut wrong = 0usize;
                for s in 0..300 {
                    let a = synthesize(&words, &prof, &FailureModel::none(), s).unwrap();
                    wrong += a
                        .tokens
                        .iter()
                        .zip(&g)
                        .filter(|(&t, &gg)| t != cb.canonical(gg))
                        .count();
                }
                wrong as f64
            })
            .collect();
        assert!(observed[0] > observed[1] && observed[1] > observed[2]);
    }

    #[test]
    fn window_examples() {
        assert_eq!(
            chunk_windows(5.0, 2.0, 1.0).unwrap(),
            vec![(0.0, 2.0), (1.0, 3.0), (2.0, 4.0), (3.0, 5.0)]
        );
        assert_eq!(chunk_windows(2.0, 2.0, 1.0).unwrap(), vec![(0.0, 2.0)]);
        assert_eq!(chunk_windows(1.5, 2.0, 1.0).unwrap(), vec![(0.0, 1.5)]);
        assert!(chunk_windows(0.0, 2.0, 1.0).is_err());
        assert!(chunk_windows(-1.0, 2.0, 1.0).is_err());
        assert!(chunk_windows(3.0, 2.0, 2.5).is_err());
        assert!(chunk_windows(3.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn style_sum_examples() {
        let g = vec![1.0, -2.0, 0.5];
        let l1 = vec![0.25, 0.5, -1.0];
        let l2 = vec![3.0, 0.0, 2.0];
        assert_eq!(
            combine_style(&g, &[l1.clone(), l2.clone()]).unwrap(),
            vec![vec![1.25, -1.5, -0.5], vec![4.0, -2.0, 2.5]]
        );
        assert_eq!(
            combine_style(&[0.0; 3], std::slice::from_ref(&l1)).unwrap(),
            vec![l1]
        );
        assert_eq!(
            combine_style(&g, &[vec![0.0; 3], vec![0.0; 3]]).unwrap(),
            vec![g.clone(), g.clone()]
        );
        assert!(matches!(
            combine_style(&g, &[vec![0.0; 2]]),
            Err(Error::DimensionMismatch {
                expected: 3,
                found: 2
            })
        ));
    }

    #[test]
    fn noiseless_synthesis_is_the_codebook_encoding() {
        let p = pool();
        let cb = Codebook::for_domain(Domain::A, 1);
        let cfg = ChannelConfig {
            noise_floor: 0.0,
            ..ChannelConfig::default()
        };
        let prof = profile_for_quality(&member(&p), &cb, 1.0, &cfg);
        let words = ["hello", "there", "world"];
        let a = synthesize(&words, &prof, &FailureModel::none(), 42).unwrap();
        assert_eq!(a, cb.encode(&text_to_graphemes(&words).unwrap()));
        assert!(synthesize::<&str>(&[], &prof, &FailureModel::none(), 1).is_err());
    }

    #[test]
    fn failure_rate_follows_the_ramp() {
        let p = pool();
        let cb = Codebook::for_domain(Domain::A, 1);
        let prof = derive_profile(&member(&p), &cb, &p.factor_model, &ChannelConfig::default());
        let fm = FailureModel::default();
        assert_eq!(fm.p_fail(40), 0.5);
        assert_eq!(fm.p_fail(4), 0.0);
        assert_eq!(fm.p_fail(100), 1.0);

        let long: Vec<&str> = vec!["ab"; 40];
        let n = text_to_graphemes(&long).unwrap().len();
        let failures = (0..1000)
            .filter(|&s| synthesize(&long, &prof, &fm, s).unwrap().len() != n)
            .count();
        assert!((failures as f64 / 1000.0 - 0.5).abs() <= 0.05, "{failures}");

        let short: Vec<&str> = vec!["abc"; 4];
        let n = text_to_graphemes(&short).unwrap().len();
        assert!((0..1000).all(|s| synthesize(&short, &prof, &fm, s).unwrap().len() == n));
    }

    #[test]
    fn synthesis_is_deterministic() {
        let p = pool();
        let cb = Codebook::for_domain(Domain::A, 1);
        let prof = derive_profile(
            &random_embedding(3),
            &cb,
            &p.factor_model,
            &ChannelConfig::default(),
        );
        let words = vec!["word"; 30];
        let fm = FailureModel::default();
        assert_eq!(
            synthesize(&words, &prof, &fm, 8).unwrap(),
            synthesize(&words, &prof, &fm, 8).unwrap()
        );
    }

    #[test]
    fn audio_serializes_as_integer_array() {
        let a = AudioTokens::new(vec![3, 0, 63]);
        assert_eq!(serde_json::to_string(&a).unwrap(), "[3,0,63]");
        assert!((a.duration_seconds() - 3.0 * 5.0 * 0.0125).abs() < 1e-12);
    }
}
