//! Utterance and manifest data model, partition splitting, and the seeded
//! two-domain corpus generator.
//!
//! Domain `A` stands in for long read sentences over a larger vocabulary,
//! domain `B` for short isolated sentences over a smaller one. Both draw
//! their words from a shared, seeded lexicon stream so the vocabulary
//! overlap between the domains is exact and reproducible.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::simtts::AudioTokens;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Domain {
    A,
    B,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::A => f.write_str("A"),
            Domain::B => f.write_str("B"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Human,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Dev,
    Test,
    #[default]
    Unsplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    /// Lowercase, single-space-delimited words.
    pub text: String,
    pub speaker_id: String,
    pub domain: Domain,
    pub origin: Origin,
    #[serde(default)]
    pub embedding_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<AudioTokens>,
}

impl Utterance {
    pub fn words(&self) -> Vec<&str> {
        self.text.split_whitespace().collect()
    }

    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestHeader {
    name: String,
    partition: Partition,
}

/// An ordered, id-unique collection of utterances.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub name: String,
    pub partition: Partition,
    utterances: Vec<Utterance>,
    ids: HashSet<String>,
}

impl Manifest {
    pub fn new(name: impl Into<String>, partition: Partition) -> Self {
        Manifest {
            name: name.into(),
            partition,
            utterances: Vec::new(),
            ids: HashSet::new(),
        }
    }

    pub fn from_utterances(
        name: impl Into<String>,
        partition: Partition,
        utterances: impl IntoIterator<Item = Utterance>,
    ) -> Result<Self> {
        let mut m = Manifest::new(name, partition);
        for u in utterances {
            m.push(u)?;
        }
        Ok(m)
    }

    pub fn push(&mut self, utt: Utterance) -> Result<()> {
        if !self.ids.insert(utt.id.clone()) {
            return Err(Error::DuplicateId(utt.id));
        }
        self.utterances.push(utt);
        Ok(())
    }

    pub fn extend(&mut self, utts: impl IntoIterator<Item = Utterance>) -> Result<()> {
        for u in utts {
            self.push(u)?;
        }
        Ok(())
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Utterance> {
        self.utterances.iter()
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids.contains(id)
    }

    pub fn into_utterances(self) -> Vec<Utterance> {
        self.utterances
    }

    /// Keep only the utterances matching `keep`, preserving order.
    pub fn filtered(&self, name: impl Into<String>, keep: impl Fn(&Utterance) -> bool) -> Manifest {
        let mut m = Manifest::new(name, self.partition);
        for u in self.utterances.iter().filter(|u| keep(u)) {
            m.push(u.clone())
                .expect("ids are unique in the parent manifest");
        }
        m
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = Vec::new();
        self.write_jsonl(&mut out)?;
        Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = ManifestHeader {
            name: self.name.clone(),
            partition: self.partition,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for u in &self.utterances {
            serde_json::to_writer(&mut w, u)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Parse line-delimited records. A leading header line carrying `name`
    /// and `partition` is optional; without it the manifest is named
    /// `default_name` and left unsplit.
    pub fn read_jsonl<R: BufRead>(r: R, default_name: &str) -> Result<Self> {
        let mut m = Manifest::new(default_name, Partition::Unsplit);
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |e: serde_json::Error| Error::Parse {
                path: default_name.to_string(),
                line: idx + 1,
                msg: e.to_string(),
            };
            if idx == 0 && !line.contains("\"id\"") {
                let header: ManifestHeader = serde_json::from_str(&line).map_err(parse_err)?;
                m.name = header.name;
                m.partition = header.partition;
                continue;
            }
            let utt: Utterance = serde_json::from_str(&line).map_err(parse_err)?;
            m.push(utt)?;
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = BufWriter::new(File::create(path)?);
        self.write_jsonl(f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Manifest::read_jsonl(BufReader::new(File::open(path)?), &name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainProfile {
    pub domain: Domain,
    pub vocab_size: usize,
    /// Inclusive sentence-length bounds in words.
    pub min_len: usize,
    pub max_len: usize,
    pub n_speakers: usize,
    pub n_utterances: usize,
    /// Fraction of this domain's vocabulary shared with domain A. Ignored for A.
    #[serde(default)]
    pub vocab_overlap_with_a: f64,
}

impl DomainProfile {
    /// Long read sentences, 200-word vocabulary.
    pub fn default_a() -> Self {
        DomainProfile {
            domain: Domain::A,
            vocab_size: 200,
            min_len: 8,
            max_len: 40,
            n_speakers: 50,
            n_utterances: 2000,
            vocab_overlap_with_a: 0.0,
        }
    }

    /// Short isolated sentences, 100-word vocabulary, half shared with A.
    pub fn default_b() -> Self {
        DomainProfile {
            domain: Domain::B,
            vocab_size: 100,
            min_len: 2,
            max_len: 8,
            n_speakers: 40,
            n_utterances: 1000,
            vocab_overlap_with_a: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidProfile(msg.to_string()));
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive");
        }
        if self.n_utterances == 0 {
            return bad("n_utterances must be positive");
        }
        if self.n_speakers == 0 {
            return bad("n_speakers must be positive");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad("sentence length bounds must satisfy 1 <= min <= max");
        }
        if !(0.0..=1.0).contains(&self.vocab_overlap_with_a) {
            return bad("vocab_overlap_with_a must lie in [0, 1]");
        }
        Ok(())
    }

    fn n_overlap(&self) -> usize {
        match self.domain {
            Domain::A => 0,
            Domain::B => (self.vocab_overlap_with_a * self.vocab_size as f64).round() as usize,
        }
    }
}

/// Speaker id for speaker `index` of a domain.
pub fn speaker_id(domain: Domain, index: usize) -> String {
    format!("{domain}-spk{index:03}")
}

// Letter weights loosely follow English frequencies; the tail (j, x, q, z)
// is what makes some graphemes rare in small corpora.
const CONSONANTS: [(char, f64); 21] = [
    ('t', 9.1),
    ('n', 6.7),
    ('s', 6.3),
    ('h', 6.1),
    ('r', 6.0),
    ('d', 4.3),
    ('l', 4.0),
    ('c', 2.8),
    ('m', 2.4),
    ('w', 2.4),
    ('f', 2.2),
    ('g', 2.0),
    ('y', 2.0),
    ('p', 1.9),
    ('b', 1.5),
    ('v', 1.0),
    ('k', 0.8),
    ('j', 0.15),
    ('x', 0.15),
    ('q', 0.1),
    ('z', 0.07),
];
const VOWELS: [(char, f64); 5] = [('e', 12.7), ('a', 8.2), ('o', 7.5), ('i', 7.0), ('u', 2.8)];

fn pick_weighted(rng: &mut seed::Rng, table: &[(char, f64)]) -> char {
    let total: f64 = table.iter().map(|(_, w)| w).sum();
    let mut x = rng.random::<f64>() * total;
    for &(c, w) in table {
        if x < w {
            return c;
        }
        x -= w;
    }
    table[table.len() - 1].0
}

fn syllable(rng: &mut seed::Rng, out: &mut String) {
    out.push(pick_weighted(rng, &CONSONANTS));
    out.push(pick_weighted(rng, &VOWELS));
    if rng.random::<f64>() < 0.35 {
        out.push(pick_weighted(rng, &CONSONANTS));
    }
}

fn n_syllables(rng: &mut seed::Rng) -> usize {
    let x = rng.random::<f64>();
    if x < 0.3 {
        1
    } else if x < 0.75 {
        2
    } else {
        3
    }
}

/// Shared-stream words always start with a consonant.
fn shared_word(rng: &mut seed::Rng) -> String {
    let mut w = String::new();
    for _ in 0..n_syllables(rng) {
        syllable(rng, &mut w);
    }
    w
}

/// Domain-B-only words always start with a vowel, so they can never collide
/// with the shared stream.
fn fresh_b_word(rng: &mut seed::Rng) -> String {
    let mut w = String::new();
    w.push(pick_weighted(rng, &VOWELS));
    for _ in 0..n_syllables(rng) {
        syllable(rng, &mut w);
    }
    w
}

fn distinct_words(
    rng: &mut seed::Rng,
    n: usize,
    mut gen: impl FnMut(&mut seed::Rng) -> String,
) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = gen(rng);
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// The closed vocabulary of a domain, in frequency-rank order.
///
/// Domain A takes the first `vocab_size` words of the shared stream. Domain
/// B takes the first `round(overlap * vocab_size)` shared-stream words (so
/// they lie in A's vocabulary whenever A is at least that large) plus fresh
/// vowel-initial words.
pub fn domain_vocabulary(profile: &DomainProfile, seed: u64) -> Result<Vec<String>> {
    profile.validate()?;
    let mut shared_rng = seed::rng(seed::derive(seed, "lexicon-shared", 0));
    let mut vocab = match profile.domain {
        Domain::A => distinct_words(&mut shared_rng, profile.vocab_size, shared_word),
        Domain::B => {
            let n_overlap = profile.n_overlap();
            let mut v = distinct_words(&mut shared_rng, n_overlap, shared_word);
            let mut fresh_rng = seed::rng(seed::derive(seed, "lexicon-b", 0));
            v.extend(distinct_words(
                &mut fresh_rng,
                profile.vocab_size - n_overlap,
                fresh_b_word,
            ));
            v
        }
    };
    let mut rank_rng = seed::rng(seed::derive(seed, "lexicon-rank", profile.domain as u64));
    vocab.shuffle(&mut rank_rng);
    Ok(vocab)
}

struct TextGenerator {
    vocab: Vec<String>,
    cumulative: Vec<f64>,
    successors: Vec<[usize; 3]>,
}

impl TextGenerator {
    const BIGRAM_TENDENCY: f64 = 0.4;

    fn new(vocab: Vec<String>, rng: &mut seed::Rng) -> Self {
        let mut acc = 0.0;
        let cumulative = (0..vocab.len())
            .map(|r| {
                acc += 1.0 / (r as f64 + 1.0);
                acc
            })
            .collect();
        let successors = (0..vocab.len())
            .map(|_| {
                [
                    rng.random_range(0..vocab.len()),
                    rng.random_range(0..vocab.len()),
                    rng.random_range(0..vocab.len()),
                ]
            })
            .collect();
        TextGenerator {
            vocab,
            cumulative,
            successors,
        }
    }

    fn unigram(&self, rng: &mut seed::Rng) -> usize {
        let total = *self.cumulative.last().expect("vocabulary is non-empty");
        let x = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= x)
            .min(self.vocab.len() - 1)
    }

    fn sentence(&self, len: usize, rng: &mut seed::Rng) -> String {
        let mut words = Vec::with_capacity(len);
        let mut prev: Option<usize> = None;
        for _ in 0..len {
            let next = match prev {
                Some(p) if rng.random::<f64>() < Self::BIGRAM_TENDENCY => {
                    self.successors[p][rng.random_range(0..3)]
                }
                _ => self.unigram(rng),
            };
            words.push(self.vocab[next].as_str());
            prev = Some(next);
        }
        words.join(" ")
    }
}

/// Generate a deterministic corpus for `profile`. Utterances carry no audio;
/// the world builder renders it from each speaker's true voice.
pub fn generate_corpus(profile: &DomainProfile, seed: u64) -> Result<Manifest> {
    let (gen, mut rng) = corpus_generator(profile, seed)?;
    let mut m = Manifest::new(format!("{}-corpus", profile.domain), Partition::Unsplit);
    for i in 0..profile.n_utterances {
        let spk = speaker_id(profile.domain, rng.random_range(0..profile.n_speakers));
        m.push(generated(
            profile,
            &gen,
            &mut rng,
            format!("{}-{i:06}", profile.domain),
            spk,
        ))?;
    }
    Ok(m)
}

/// Utterances from `n_speakers` speakers that do not occur in
/// `generate_corpus(profile, seed)`, over the same vocabulary and word
/// statistics. Speaker indices continue after the profile's speakers; ids
/// are `{domain}-h{index}`.
pub fn generate_held_out(
    profile: &DomainProfile,
    seed: u64,
    n_speakers: usize,
    n_utterances: usize,
) -> Result<Manifest> {
    if n_speakers == 0 || n_utterances == 0 {
        return Err(Error::InvalidProfile(
            "held-out speakers and utterances must be positive".into(),
        ));
    }
    let (gen, _) = corpus_generator(profile, seed)?;
    let mut rng = seed::rng(seed::derive(seed, "held-out", profile.domain as u64));
    let mut m = Manifest::new(format!("{}-held-out", profile.domain), Partition::Test);
    for i in 0..n_utterances {
        let spk = speaker_id(
            profile.domain,
            profile.n_speakers + rng.random_range(0..n_speakers),
        );
        m.push(generated(
            profile,
            &gen,
            &mut rng,
            format!("{}-h{i:06}", profile.domain),
            spk,
        ))?;
    }
    Ok(m)
}

fn corpus_generator(profile: &DomainProfile, seed: u64) -> Result<(TextGenerator, seed::Rng)> {
    let vocab = domain_vocabulary(profile, seed)?;
    let mut rng = seed::rng(seed::derive(seed, "corpus", profile.domain as u64));
    let gen = TextGenerator::new(vocab, &mut rng);
    Ok((gen, rng))
}

fn generated(
    profile: &DomainProfile,
    gen: &TextGenerator,
    rng: &mut seed::Rng,
    id: String,
    spk: String,
) -> Utterance {
    let len = rng.random_range(profile.min_len..=profile.max_len);
    Utterance {
        id,
        text: gen.sentence(len, rng),
        speaker_id: spk.clone(),
        domain: profile.domain,
        origin: Origin::Human,
        embedding_ref: Some(spk),
        audio: None,
    }
}

/// Shuffle with `seed`, then cut into train/dev/test. Train and dev sizes
/// are `floor(N * r)`; test takes the remainder.
pub fn split_partitions(
    m: &Manifest,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Manifest, Manifest, Manifest)> {
    let (rt, rd, rs) = ratios;
    if !(rt > 0.0 && rd > 0.0 && rs > 0.0) {
        return Err(Error::InvalidRatios(format!(
            "{ratios:?} must all be positive"
        )));
    }
    if ((rt + rd + rs) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidRatios(format!("{ratios:?} must sum to 1")));
    }
    if m.is_empty() {
        return Err(Error::EmptyManifest(m.name.clone()));
    }
    let n = m.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed, "split", 0)));
    // The epsilon absorbs products such as 100 * 0.29 = 28.999999999999996.
    let n_train = ((n as f64) * rt + 1e-9).floor() as usize;
    let n_dev = (((n as f64) * rd + 1e-9).floor() as usize).min(n - n_train);
    let part = |name: &str, p: Partition, idx: &[usize]| {
        Manifest::from_utterances(
            format!("{}-{name}", m.name),
            p,
            idx.iter().map(|&i| m.utterances[i].clone()),
        )
    };
    Ok((
        part("train", Partition::Train, &order[..n_train])?,
        part("dev", Partition::Dev, &order[n_train..n_train + n_dev])?,
        part("test", Partition::Test, &order[n_train + n_dev..])?,
    ))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_utterances: usize,
    pub n_speakers: usize,
    pub n_word_tokens: usize,
    pub n_word_types: usize,
    pub mean_length: f64,
}

pub fn stats(m: &Manifest) -> CorpusStats {
    let mut speakers = BTreeSet::new();
    let mut types = BTreeSet::new();
    let mut tokens = 0;
    for u in m.iter() {
        speakers.insert(u.speaker_id.as_str());
        for w in u.text.split_whitespace() {
            tokens += 1;
            types.insert(w);
        }
    }
    CorpusStats {
        n_utterances: m.len(),
        n_speakers: speakers.len(),
        n_word_tokens: tokens,
        n_word_types: types.len(),
        mean_length: if m.is_empty() {
            0.0
        } else {
            tokens as f64 / m.len() as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(id: &str, text: &str) -> Utterance {
        Utterance {
            id: id.into(),
            text: text.into(),
            speaker_id: "s".into(),
            domain: Domain::A,
            origin: Origin::Human,
            embedding_ref: None,
            audio: None,
        }
    }

    fn numbered(n: usize) -> Manifest {
        Manifest::from_utterances(
            "m",
            Partition::Unsplit,
            (0..n).map(|i| utt(&format!("u{i}"), "a b")),
        )
        .unwrap()
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let mut m = Manifest::new("m", Partition::Unsplit);
        m.push(utt("x", "a")).unwrap();
        assert!(matches!(m.push(utt("x", "b")), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn generate_counts_follow_profile() {
        let profile = DomainProfile {
            max_len: 20,
            ..DomainProfile::default_a()
        };
        let m = generate_corpus(&profile, 7).unwrap();
        assert_eq!(m.len(), 2000);
        let s = stats(&m);
        assert_eq!(s.n_speakers, 50);
        for u in m.iter() {
            let n = u.word_count();
            assert!((8..=20).contains(&n));
            assert_eq!(u.embedding_ref.as_deref(), Some(u.speaker_id.as_str()));
        }
    }

    #[test]
    fn generate_is_deterministic() {
        let p = DomainProfile::default_a();
        let a = generate_corpus(&p, 7).unwrap().to_jsonl().unwrap();
        let b = generate_corpus(&p, 7).unwrap().to_jsonl().unwrap();
        assert_eq!(a, b);
        let c = generate_corpus(&p, 8).unwrap().to_jsonl().unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_profiles() {
        for p in [
            DomainProfile {
                vocab_size: 0,
                ..DomainProfile::default_a()
            },
            DomainProfile {
                n_utterances: 0,
                ..DomainProfile::default_a()
            },
            DomainProfile {
                min_len: 9,
                max_len: 8,
                ..DomainProfile::default_a()
            },
        ] {
            assert!(matches!(
                generate_corpus(&p, 1),
                Err(Error::InvalidProfile(_))
            ));
        }
    }

    #[test]
    fn vocabulary_overlap_is_exact() {
        // Set-intersection oracle over the two generated vocabularies.
        let a: HashSet<String> = domain_vocabulary(&DomainProfile::default_a(), 11)
            .unwrap()
            .into_iter()
            .collect();
        let b = domain_vocabulary(&DomainProfile::default_b(), 11).unwrap();
        assert_eq!(b.len(), 100);
        assert_eq!(b.iter().collect::<HashSet<_>>().len(), 100);
        assert_eq!(b.iter().filter(|w| a.contains(*w)).count(), 50);
    }

    #[test]
    fn split_sizes() {
        for (n, expect) in [(1000, (900, 50, 50)), (201, (180, 10, 11))] {
            let (tr, dv, te) = split_partitions(&numbered(n), (0.90, 0.05, 0.05), 3).unwrap();
            assert_eq!((tr.len(), dv.len(), te.len()), expect);
            assert_eq!(tr.partition, Partition::Train);
            assert_eq!(te.partition, Partition::Test);
        }
    }

    #[test]
    fn split_errors() {
        let m = numbered(10);
        assert!(split_partitions(&m, (0.5, 0.5, 0.0), 1).is_err());
        assert!(split_partitions(&m, (0.5, 0.4, 0.2), 1).is_err());
        let empty = Manifest::new("e", Partition::Unsplit);
        assert!(matches!(
            split_partitions(&empty, (0.9, 0.05, 0.05), 1),
            Err(Error::EmptyManifest(_))
        ));
    }

    #[test]
    fn split_is_deterministic() {
        let m = numbered(57);
        let a = split_partitions(&m, (0.8, 0.1, 0.1), 5).unwrap();
        let b = split_partitions(&m, (0.8, 0.1, 0.1), 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stats_hand_counts() {
        let m = Manifest::from_utterances("m", Partition::Unsplit, [utt("1", "a b a")]).unwrap();
        let s = stats(&m);
        assert_eq!((s.n_word_tokens, s.n_word_types), (3, 2));
        assert_eq!(s.mean_length, 3.0);
        assert_eq!(stats(&Manifest::default()), CorpusStats::default());
    }

    #[test]
    fn header_is_optional_on_read() {
        let text = "{\"id\":\"u1\",\"text\":\"a b\",\"speaker_id\":\"s\",\"domain\":\"A\",\"origin\":\"human\"}\n";
        let m = Manifest::read_jsonl(text.as_bytes(), "plain").unwrap();
        assert_eq!(m.name, "plain");
        assert_eq!(m.len(), 1);
        assert_eq!(m.utterances()[0].embedding_ref, None);
    }
}
