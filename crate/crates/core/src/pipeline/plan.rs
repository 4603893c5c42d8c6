//! Declarative experiment plans.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Domain;
use crate::error::{Error, Result};
use crate::lm::SamplingConstraints;
use crate::speaker::SpeakerStrategy;

use super::world::{parse_set_ref, WorldConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentationKind {
    None,
    /// Re-synthesize the source transcripts, one copy each.
    DuplicateCopy,
    /// Synthesize sentences sampled from an LM trained on the source.
    LexicalLm,
    /// Synthesize the transcripts of an evaluation set.
    Topline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub kind: AugmentationKind,
    #[serde(default = "default_strategy")]
    pub strategy: SpeakerStrategy,
    /// Set whose transcripts feed synthesis. Defaults to the arm's first
    /// training set, or to the plan's first evaluation set for `topline`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Number of LM samples (`lexical_lm`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth_count: Option<usize>,
    /// LM samples as a multiple of the source size, when `synth_count` is unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<SamplingConstraints>,
    /// Reject synthesized utterances recognized with a WER above this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<f64>,
    /// Domain whose synthesizer (codebook and speaker pool) renders the
    /// audio. Defaults to the source's domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesizer: Option<Domain>,
}

fn default_strategy() -> SpeakerStrategy {
    SpeakerStrategy::Sampled
}

impl AugmentationSpec {
    pub fn none() -> Self {
        Self::of(AugmentationKind::None, SpeakerStrategy::Sampled)
    }

    pub fn of(kind: AugmentationKind, strategy: SpeakerStrategy) -> Self {
        AugmentationSpec {
            kind,
            strategy,
            source: None,
            synth_count: None,
            synth_ratio: None,
            constraints: None,
            filter: None,
            synthesizer: None,
        }
    }

    pub fn with_source(mut self, source: &str) -> Self {
        self.source = Some(source.to_string());
        self
    }

    pub fn with_filter(mut self, threshold: f64) -> Self {
        self.filter = Some(threshold);
        self
    }

    pub fn with_synthesizer(mut self, d: Domain) -> Self {
        self.synthesizer = Some(d);
        self
    }

    pub fn with_ratio(mut self, ratio: f64, constraints: SamplingConstraints) -> Self {
        self.synth_ratio = Some(ratio);
        self.constraints = Some(constraints);
        self
    }

    fn validate(&self) -> Result<()> {
        if let Some(s) = &self.source {
            parse_set_ref(s)?;
        }
        if let Some(t) = self.filter {
            if t.is_nan() || t < 0.0 {
                return Err(Error::InvalidPlan(format!(
                    "filter threshold {t} is negative"
                )));
            }
        }
        if let Some(r) = self.synth_ratio {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::InvalidPlan(format!("synth_ratio {r} is invalid")));
            }
        }
        if let Some(c) = &self.constraints {
            c.validate()?;
        }
        Ok(())
    }
}

/// Human training data: a prefix of a seeded shuffle of `set`, so smaller
/// fractions are subsets of larger ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSource {
    pub set: String,
    #[serde(default = "one")]
    pub fraction: f64,
}

fn one() -> f64 {
    1.0
}

impl TrainSource {
    pub fn full(set: &str) -> Self {
        TrainSource {
            set: set.to_string(),
            fraction: 1.0,
        }
    }

    pub fn fraction(set: &str, fraction: f64) -> Self {
        TrainSource {
            set: set.to_string(),
            fraction,
        }
    }
}

/// Reference cell an arm is compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryRef {
    pub table: String,
    pub condition: String,
    pub column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub name: String,
    /// Overrides the plan's training sources.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<Vec<TrainSource>>,
    #[serde(default)]
    pub augment: Vec<AugmentationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry: Option<RegistryRef>,
}

impl ArmSpec {
    pub fn new(name: &str, augment: Vec<AugmentationSpec>) -> Self {
        ArmSpec {
            name: name.to_string(),
            train: None,
            augment,
            registry: None,
        }
    }

    pub fn train_on(mut self, sources: Vec<TrainSource>) -> Self {
        self.train = Some(sources);
        self
    }

    pub fn registry(mut self, table: &str, condition: &str, column: &str) -> Self {
        self.registry = Some(RegistryRef {
            table: table.to_string(),
            condition: condition.to_string(),
            column: column.to_string(),
        });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub name: String,
    pub seeds: Vec<u64>,
    pub train: Vec<TrainSource>,
    pub eval: Vec<String>,
    pub arms: Vec<ArmSpec>,
    #[serde(default)]
    pub world: WorldConfig,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPlan(m));
        if self.seeds.is_empty() {
            return bad("plan has no seeds".into());
        }
        if self.train.is_empty() {
            return bad("plan has no training sources".into());
        }
        if self.eval.is_empty() {
            return bad("plan has no evaluation sets".into());
        }
        if self.arms.is_empty() {
            return bad("plan has no arms".into());
        }
        self.world.validate()?;
        let mut names = std::collections::BTreeSet::new();
        for arm in &self.arms {
            if !names.insert(arm.name.as_str()) {
                return bad(format!("duplicate arm `{}`", arm.name));
            }
            for s in arm.train.as_ref().unwrap_or(&self.train) {
                parse_set_ref(&s.set)?;
                if !(0.0..=1.0).contains(&s.fraction) {
                    return bad(format!("fraction {} outside [0, 1]", s.fraction));
                }
            }
            for a in &arm.augment {
                a.validate()?;
            }
        }
        for e in &self.eval {
            parse_set_ref(e)?;
        }
        Ok(())
    }

    pub fn train_sources<'a>(&'a self, arm: &'a ArmSpec) -> &'a [TrainSource] {
        arm.train.as_deref().unwrap_or(&self.train)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: ExperimentPlan = toml::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidPlan(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}
