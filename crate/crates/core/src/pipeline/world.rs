//! Seeded simulated worlds: corpora with human audio, speaker pools and
//! synthesizers for one or two domains.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    generate_corpus, generate_held_out, speaker_id, split_partitions, Domain, DomainProfile,
    Manifest, Partition, Utterance,
};
use crate::error::{Error, Result};
use crate::seed;
use crate::simasr::{train_on_manifest, ConfusionModel, DEFAULT_BETA};
use crate::simtts::{synthesize, ChannelConfig, Codebook, FailureModel, Synthesizer};
use crate::speaker::{EmbeddingPool, FactorModel, DEFAULT_RANK};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainWorldConfig {
    /// Training corpus; `n_speakers` counts training speakers only.
    pub profile: DomainProfile,
    /// Speakers absent from training whose utterances form the `test` set.
    #[serde(default)]
    pub held_out_speakers: usize,
    #[serde(default)]
    pub held_out_utterances: usize,
    /// Split the corpus by utterance into train/dev/test instead of holding
    /// out speakers.
    #[serde(default)]
    pub split: Option<[f64; 3]>,
    /// Pool speakers available to the synthesizer but absent from the corpus.
    #[serde(default)]
    pub extra_pool_speakers: usize,
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default)]
    pub channel: ChannelConfig,
    /// Failure behaviour of synthesis (human audio never fails).
    #[serde(default)]
    pub failure: FailureModel,
    /// Order of the LM trained for lexical arms; `None` disables them.
    #[serde(default)]
    pub lm_order: Option<usize>,
    #[serde(default = "default_lm_alpha")]
    pub lm_alpha: f64,
}

fn default_rank() -> usize {
    DEFAULT_RANK
}

fn default_lm_alpha() -> f64 {
    0.01
}

impl DomainWorldConfig {
    /// Long read speech: 2000 training utterances from 50 speakers plus 10
    /// held-out test speakers.
    pub fn default_a() -> Self {
        DomainWorldConfig {
            profile: DomainProfile::default_a(),
            held_out_speakers: 10,
            held_out_utterances: 400,
            split: None,
            extra_pool_speakers: 0,
            rank: DEFAULT_RANK,
            channel: ChannelConfig::default(),
            failure: FailureModel::default(),
            lm_order: Some(4),
            lm_alpha: default_lm_alpha(),
        }
    }

    /// Short isolated sentences split 90/5/5 by utterance.
    pub fn default_b() -> Self {
        DomainWorldConfig {
            profile: DomainProfile::default_b(),
            held_out_speakers: 0,
            held_out_utterances: 0,
            split: Some([0.90, 0.05, 0.05]),
            extra_pool_speakers: 0,
            rank: DEFAULT_RANK,
            channel: ChannelConfig::default(),
            failure: FailureModel::default(),
            lm_order: Some(3),
            lm_alpha: default_lm_alpha(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        self.failure.validate()?;
        let held_out = self.held_out_speakers > 0 && self.held_out_utterances > 0;
        if held_out == self.split.is_some() {
            return Err(Error::InvalidPlan(format!(
                "domain {} needs exactly one of held-out speakers or a split",
                self.profile.domain
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    #[serde(default)]
    pub a: Option<DomainWorldConfig>,
    #[serde(default)]
    pub b: Option<DomainWorldConfig>,
    #[serde(default = "default_beta")]
    pub asr_beta: f64,
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            a: Some(DomainWorldConfig::default_a()),
            b: None,
            asr_beta: DEFAULT_BETA,
        }
    }
}

impl WorldConfig {
    pub fn two_domain() -> Self {
        WorldConfig {
            a: Some(DomainWorldConfig::default_a()),
            b: Some(DomainWorldConfig::default_b()),
            asr_beta: DEFAULT_BETA,
        }
    }

    pub fn domain(&self, d: Domain) -> Option<&DomainWorldConfig> {
        match d {
            Domain::A => self.a.as_ref(),
            Domain::B => self.b.as_ref(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.is_none() && self.b.is_none() {
            return Err(Error::InvalidPlan("world has no domains".into()));
        }
        for (d, c) in [(Domain::A, &self.a), (Domain::B, &self.b)] {
            if let Some(c) = c {
                if c.profile.domain != d {
                    return Err(Error::InvalidPlan(format!(
                        "world.{} profile is tagged domain {}",
                        d.to_string().to_lowercase(),
                        c.profile.domain
                    )));
                }
                c.validate()?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DomainWorld {
    pub config: DomainWorldConfig,
    /// `train`, `test` and, for split domains, `dev`; all with human audio.
    pub sets: BTreeMap<String, Manifest>,
    /// Training speakers plus any synthesis-only speakers.
    pub synthesizer: Synthesizer,
    /// Every speaker of the domain, used when synthesis must sound like the
    /// original speaker.
    pub speaker_synthesizer: Synthesizer,
    /// Recognizer trained on the human training set; scores filter runs.
    pub filter_recognizer: ConfusionModel,
}

#[derive(Debug, Clone)]
pub struct World {
    pub seed: u64,
    pub domains: BTreeMap<Domain, DomainWorld>,
    /// SHA-256 over every manifest, pool and codebook of the world.
    pub digest: String,
}

impl World {
    pub fn domain(&self, d: Domain) -> Option<&DomainWorld> {
        self.domains.get(&d)
    }

    /// Resolve a set reference such as `A:train` or `B:test`.
    pub fn set(&self, reference: &str) -> Result<&Manifest> {
        let (d, name) = parse_set_ref(reference)?;
        self.domain(d)
            .and_then(|w| w.sets.get(name))
            .ok_or_else(|| Error::InvalidPlan(format!("unknown set `{reference}`")))
    }
}

/// `A:train` into `(Domain::A, "train")`.
pub fn parse_set_ref(reference: &str) -> Result<(Domain, &str)> {
    let bad = || Error::InvalidPlan(format!("bad set reference `{reference}`"));
    let (d, name) = reference.split_once(':').ok_or_else(bad)?;
    let d = match d {
        "A" | "a" => Domain::A,
        "B" | "b" => Domain::B,
        _ => return Err(bad()),
    };
    if name.is_empty() {
        return Err(bad());
    }
    Ok((d, name))
}

fn domain_world(cfg: &DomainWorldConfig, world_seed: u64, beta: f64) -> Result<DomainWorld> {
    cfg.validate()?;
    let d = cfg.profile.domain;
    let tag = d as u64;
    let corpus_seed = seed::derive(world_seed, "corpus", tag);
    let corpus = generate_corpus(&cfg.profile, corpus_seed)?;

    let n_train = cfg.profile.n_speakers;
    let n_held = if cfg.split.is_some() {
        0
    } else {
        cfg.held_out_speakers
    };
    let n_extra = cfg.extra_pool_speakers;
    let fm = FactorModel::random(cfg.rank, seed::derive(world_seed, "factor-model", tag))?;
    let pool_seed = seed::derive(world_seed, "pool", tag);
    let corpus_ids: Vec<String> = (0..n_train + n_held).map(|i| speaker_id(d, i)).collect();
    let extra_ids: Vec<String> = (0..n_extra).map(|i| format!("{d}-tts{i:03}")).collect();
    let synth_ids = corpus_ids[..n_train].iter().chain(&extra_ids);
    let all_pool = EmbeddingPool::sample(fm.clone(), &corpus_ids, pool_seed)?;
    let synth_pool = EmbeddingPool::sample(fm, synth_ids, pool_seed)?;

    // Canonical tokens are shared by all domains of a world.
    let codebook = Codebook::for_domain(d, seed::derive(world_seed, "codebook", 0));
    let speaker_synthesizer = Synthesizer::new(
        codebook.clone(),
        all_pool,
        cfg.channel.clone(),
        cfg.failure.clone(),
    );
    let synthesizer = Synthesizer::new(
        codebook,
        synth_pool,
        cfg.channel.clone(),
        cfg.failure.clone(),
    );

    let audio_seed = seed::derive(world_seed, "human-audio", tag);
    let voiced = |m: Manifest| -> Result<Manifest> {
        let name = m.name.clone();
        let partition = m.partition;
        let utts: Vec<Utterance> = m
            .into_utterances()
            .into_par_iter()
            .map(|mut u| {
                let profile = speaker_synthesizer
                    .pool_profile(&u.speaker_id)
                    .ok_or_else(|| Error::MissingEmbedding(u.id.clone()))?;
                u.audio = Some(synthesize(
                    &u.words(),
                    profile,
                    &FailureModel::none(),
                    seed::derive_str(audio_seed, "utterance", &u.id),
                )?);
                Ok(u)
            })
            .collect::<Result<_>>()?;
        Manifest::from_utterances(name, partition, utts)
    };

    let mut sets = BTreeMap::new();
    match cfg.split {
        Some([rt, rd, rs]) => {
            let (train, dev, test) = split_partitions(
                &corpus,
                (rt, rd, rs),
                seed::derive(world_seed, "split", tag),
            )?;
            sets.insert("train".to_string(), voiced(renamed(train, d, "train"))?);
            sets.insert("dev".to_string(), voiced(renamed(dev, d, "dev"))?);
            sets.insert("test".to_string(), voiced(renamed(test, d, "test"))?);
        }
        None => {
            let held = generate_held_out(
                &cfg.profile,
                corpus_seed,
                cfg.held_out_speakers,
                cfg.held_out_utterances,
            )?;
            sets.insert("train".to_string(), voiced(renamed(corpus, d, "train"))?);
            sets.insert("test".to_string(), voiced(renamed(held, d, "test"))?);
        }
    }
    let filter_recognizer = train_on_manifest(&sets["train"], beta)?;

    Ok(DomainWorld {
        config: cfg.clone(),
        sets,
        synthesizer,
        speaker_synthesizer,
        filter_recognizer,
    })
}

fn renamed(m: Manifest, d: Domain, name: &str) -> Manifest {
    let partition = match name {
        "train" => Partition::Train,
        "dev" => Partition::Dev,
        _ => Partition::Test,
    };
    Manifest::from_utterances(format!("{d}:{name}"), partition, m.into_utterances())
        .expect("ids were unique before renaming")
}

pub fn generate_world(cfg: &WorldConfig, world_seed: u64) -> Result<World> {
    cfg.validate()?;
    let mut domains = BTreeMap::new();
    for d in [Domain::A, Domain::B] {
        if let Some(c) = cfg.domain(d) {
            domains.insert(d, domain_world(c, world_seed, cfg.asr_beta)?);
        }
    }
    let digest = world_digest(&domains)?;
    Ok(World {
        seed: world_seed,
        domains,
        digest,
    })
}

fn world_digest(domains: &BTreeMap<Domain, DomainWorld>) -> Result<String> {
    let mut bytes = Vec::new();
    for (d, w) in domains {
        bytes.extend(d.to_string().as_bytes());
        for (name, m) in &w.sets {
            bytes.extend(name.as_bytes());
            bytes.extend(m.to_jsonl()?.as_bytes());
        }
        for synth in [&w.synthesizer, &w.speaker_synthesizer] {
            bytes.extend(serde_json::to_vec(&synth.pool)?);
            for g in 0..crate::simtts::GRAPHEME_COUNT {
                bytes.push(synth.codebook.canonical(g));
                bytes.extend(synth.codebook.alternates(g));
            }
        }
        bytes.extend(serde_json::to_vec(&w.filter_recognizer)?);
    }
    Ok(seed::digest_hex(&bytes))
}
