//! Building arm training sets and running paired experiments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Manifest, Origin, Partition, Utterance};
use crate::error::{Error, Result};
use crate::lm::{sample_utterances, train_lm, SamplingConstraints};
use crate::seed;
use crate::simasr::{evaluate, train_on_manifest, transcribe};
use crate::speaker::SpeakerStrategy;
use crate::textmetrics::filter_by_wer;

use super::plan::{ArmSpec, AugmentationKind, AugmentationSpec, ExperimentPlan, RegistryRef};
use super::world::{generate_world, parse_set_ref, World};

/// Outcome of one augmentation step of an arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationStats {
    pub kind: AugmentationKind,
    pub strategy: SpeakerStrategy,
    pub source: String,
    pub synthesizer: String,
    pub synthesized: usize,
    pub kept: usize,
    pub rejected: usize,
    pub rejection_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub manifest: Manifest,
    pub augmentations: Vec<AugmentationStats>,
}

/// The human part of an arm's training data.
fn human_sources(plan: &ExperimentPlan, arm: &ArmSpec, world: &World) -> Result<Manifest> {
    let mut out = Manifest::new(format!("{}-train", arm.name), Partition::Train);
    for (i, src) in plan.train_sources(arm).iter().enumerate() {
        let m = world.set(&src.set)?;
        let mut order: Vec<usize> = (0..m.len()).collect();
        order.shuffle(&mut seed::rng(seed::derive_str(
            world.seed, "fraction", &src.set,
        )));
        let n = (m.len() as f64 * src.fraction + 1e-9).floor() as usize;
        let mut chosen: Vec<usize> = order[..n].to_vec();
        chosen.sort_unstable();
        for k in chosen {
            out.push(m.utterances()[k].clone()).map_err(|e| {
                Error::InvalidPlan(format!("training source {i} overlaps another: {e}"))
            })?;
        }
    }
    Ok(out)
}

/// Training data for `arm` in a generated world: human sources plus every
/// synthetic set the arm's augmentations produce.
pub fn build_training_set(
    plan: &ExperimentPlan,
    arm: &ArmSpec,
    world: &World,
) -> Result<TrainingSet> {
    let mut manifest = human_sources(plan, arm, world)?;
    let mut augmentations = Vec::new();
    for (k, spec) in arm.augment.iter().enumerate() {
        if spec.kind == AugmentationKind::None {
            continue;
        }
        let (synthetic, stats) = synthesize_augmentation(plan, arm, spec, k, world)?;
        manifest.extend(synthetic.into_utterances())?;
        augmentations.push(stats);
    }
    Ok(TrainingSet {
        manifest,
        augmentations,
    })
}

fn synthesize_augmentation(
    plan: &ExperimentPlan,
    arm: &ArmSpec,
    spec: &AugmentationSpec,
    index: usize,
    world: &World,
) -> Result<(Manifest, AugmentationStats)> {
    let source = match (&spec.source, spec.kind) {
        (Some(s), _) => s.clone(),
        (None, AugmentationKind::Topline) => plan.eval[0].clone(),
        (None, _) => plan.train_sources(arm)[0].set.clone(),
    };
    let (source_domain, _) = parse_set_ref(&source)?;
    let synth_domain = spec.synthesizer.unwrap_or(source_domain);
    let missing_pool = || Error::MissingPool {
        arm: arm.name.clone(),
        domain: synth_domain.to_string(),
    };
    let synth_world = world.domain(synth_domain).ok_or_else(missing_pool)?;
    let synthesizer = match spec.strategy {
        SpeakerStrategy::Original => &synth_world.speaker_synthesizer,
        _ => &synth_world.synthesizer,
    };
    let source_set = world.set(&source)?;
    let prefix = format!("{}-s{index}", arm.name);
    let seed = seed::derive_str(world.seed, "augment", &prefix);

    let texts: Manifest = match spec.kind {
        AugmentationKind::None => unreachable!("skipped by the caller"),
        AugmentationKind::DuplicateCopy | AugmentationKind::Topline => source_set.clone(),
        AugmentationKind::LexicalLm => {
            let cfg = world
                .domain(source_domain)
                .map(|w| &w.config)
                .ok_or_else(|| Error::MissingLm(arm.name.clone()))?;
            let order = cfg
                .lm_order
                .ok_or_else(|| Error::MissingLm(arm.name.clone()))?;
            let lm = train_lm(source_set, order, cfg.lm_alpha)?;
            let count = spec.synth_count.unwrap_or_else(|| {
                (source_set.len() as f64 * spec.synth_ratio.unwrap_or(1.0)).round() as usize
            });
            let constraints = spec
                .constraints
                .unwrap_or_else(SamplingConstraints::long_form);
            let sentences =
                sample_utterances(&lm, &constraints, count, seed::derive(seed, "lm", 0))?;
            Manifest::from_utterances(
                format!("{prefix}-lm"),
                Partition::Unsplit,
                sentences
                    .into_iter()
                    .enumerate()
                    .map(|(i, words)| Utterance {
                        id: format!("{source_domain}-lm{i:06}"),
                        text: words.join(" "),
                        speaker_id: String::new(),
                        domain: source_domain,
                        origin: Origin::Human,
                        embedding_ref: None,
                        audio: None,
                    }),
            )?
        }
    };

    let synthetic = synthesizer.synthesize_manifest(&texts, spec.strategy, &prefix, seed)?;
    let synthesized = synthetic.len();
    let kept = match spec.filter {
        None => synthetic,
        Some(threshold) => {
            let hyps = transcribe(&synth_world.filter_recognizer, &synthetic);
            let pairs: Vec<(Utterance, String)> =
                synthetic.into_utterances().into_iter().zip(hyps).collect();
            let report = filter_by_wer(&pairs, threshold);
            report.kept
        }
    };
    let stats = AugmentationStats {
        kind: spec.kind,
        strategy: spec.strategy,
        source,
        synthesizer: synth_domain.to_string(),
        synthesized,
        kept: kept.len(),
        rejected: synthesized - kept.len(),
        rejection_fraction: if synthesized == 0 {
            0.0
        } else {
            (synthesized - kept.len()) as f64 / synthesized as f64
        },
    };
    Ok((kept, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub seed: u64,
    pub arm: String,
    pub world_digest: String,
    /// Corpus WER per evaluation set.
    pub wer: BTreeMap<String, f64>,
    pub n_human: usize,
    pub n_synthetic: usize,
    pub trained_pairs: usize,
    pub skipped_pairs: usize,
    pub augmentations: Vec<AugmentationStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry: Option<RegistryRef>,
    /// Mean corpus WER per evaluation set over seeds that completed.
    pub mean_wer: BTreeMap<String, f64>,
    pub completed_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub plan: String,
    pub seeds: Vec<u64>,
    pub eval: Vec<String>,
    pub arms: Vec<ArmSummary>,
    /// One entry per seed and arm, ordered by seed then arm.
    pub results: Vec<ArmResult>,
}

impl RunReport {
    pub fn result(&self, seed: u64, arm: &str) -> Option<&ArmResult> {
        self.results.iter().find(|r| r.seed == seed && r.arm == arm)
    }

    pub fn arm(&self, name: &str) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.name == name)
    }

    /// Mean WER of `arm` on `eval`.
    pub fn mean(&self, arm: &str, eval: &str) -> Option<f64> {
        self.arm(arm)?.mean_wer.get(eval).copied()
    }

    /// Per-seed WERs of `arm` on `eval`, in seed order.
    pub fn per_seed(&self, arm: &str, eval: &str) -> Vec<Option<f64>> {
        self.seeds
            .iter()
            .map(|&s| self.result(s, arm).and_then(|r| r.wer.get(eval).copied()))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "plan: {}  seeds: {:?}", self.plan, self.seeds);
        let width = self
            .arms
            .iter()
            .map(|a| a.name.len())
            .max()
            .unwrap_or(3)
            .max(3);
        let _ = write!(s, "{:<width$}", "arm");
        for e in &self.eval {
            let _ = write!(s, "  {e:>10}");
        }
        let _ = writeln!(s, "  {:>6}", "seeds");
        for a in &self.arms {
            let _ = write!(s, "{:<width$}", a.name);
            for e in &self.eval {
                match a.mean_wer.get(e) {
                    Some(w) => {
                        let _ = write!(s, "  {:>9.2}%", 100.0 * w);
                    }
                    None => {
                        let _ = write!(s, "  {:>10}", "-");
                    }
                }
            }
            let _ = writeln!(s, "  {:>6}", a.completed_seeds);
        }
        for r in self.results.iter().filter(|r| r.error.is_some()) {
            let _ = writeln!(
                s,
                "error: seed {} arm {}: {}",
                r.seed,
                r.arm,
                r.error.as_deref().unwrap_or_default()
            );
        }
        s
    }

    /// Write `report.json` and `summary.txt` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        std::fs::write(dir.join("summary.txt"), self.summary_table())?;
        Ok(())
    }

    pub fn read_from(dir: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(dir.as_ref().join("report.json"))?)
    }
}

fn run_arm(plan: &ExperimentPlan, arm: &ArmSpec, world: &World) -> ArmResult {
    let mut result = ArmResult {
        seed: world.seed,
        arm: arm.name.clone(),
        world_digest: world.digest.clone(),
        wer: BTreeMap::new(),
        n_human: 0,
        n_synthetic: 0,
        trained_pairs: 0,
        skipped_pairs: 0,
        augmentations: Vec::new(),
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let set = build_training_set(plan, arm, world)?;
        result.n_synthetic = set
            .manifest
            .iter()
            .filter(|u| u.origin == Origin::Synthetic)
            .count();
        result.n_human = set.manifest.len() - result.n_synthetic;
        result.augmentations = set.augmentations;
        let model = train_on_manifest(&set.manifest, plan.world.asr_beta)?;
        result.trained_pairs = model.trained_pairs;
        result.skipped_pairs = model.skipped_pairs;
        for e in &plan.eval {
            result
                .wer
                .insert(e.clone(), evaluate(&model, world.set(e)?).corpus_wer);
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        result.error = Some(e.to_string());
        result.wer.clear();
    }
    result
}

/// Run every arm on a shared world per seed and assemble the report.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<RunReport> {
    plan.validate()?;
    let per_seed: Vec<Vec<ArmResult>> = plan
        .seeds
        .par_iter()
        .map(|&s| -> Result<Vec<ArmResult>> {
            let world = generate_world(&plan.world, s)?;
            Ok(plan
                .arms
                .par_iter()
                .map(|arm| run_arm(plan, arm, &world))
                .collect())
        })
        .collect::<Result<_>>()?;
    let results: Vec<ArmResult> = per_seed.into_iter().flatten().collect();

    let arms = plan
        .arms
        .iter()
        .map(|arm| {
            let done: Vec<&ArmResult> = results
                .iter()
                .filter(|r| r.arm == arm.name && r.error.is_none())
                .collect();
            let mean_wer = plan
                .eval
                .iter()
                .filter(|_| !done.is_empty())
                .map(|e| {
                    let total: f64 = done.iter().map(|r| r.wer[e]).sum();
                    (e.clone(), total / done.len() as f64)
                })
                .collect();
            ArmSummary {
                name: arm.name.clone(),
                registry: arm.registry.clone(),
                mean_wer,
                completed_seeds: done.len(),
            }
        })
        .collect();

    Ok(RunReport {
        plan: plan.name.clone(),
        seeds: plan.seeds.clone(),
        eval: plan.eval.clone(),
        arms,
        results,
    })
}
