//! Ready-made plans mirroring the published experimental designs.

use crate::corpus::{Domain, DomainProfile};
use crate::error::{Error, Result};
use crate::lm::SamplingConstraints;
use crate::speaker::SpeakerStrategy;

use super::plan::{
    ArmSpec, AugmentationKind as K, AugmentationSpec as Aug, ExperimentPlan, TrainSource,
};
use super::world::{DomainWorldConfig, WorldConfig};

pub const PLAN_NAMES: [&str; 7] = [
    "table2", "table3", "table4", "table5", "table6", "table7", "table8",
];

pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

/// Synthesized copies are filtered at this WER, as for long read speech.
pub const FILTER_THRESHOLD: f64 = 0.20;

/// Desk-scale domain A: few enough training utterances that rare graphemes
/// and speaker alternates are under-observed.
pub fn trend_world_a() -> DomainWorldConfig {
    DomainWorldConfig {
        profile: DomainProfile {
            n_utterances: 25,
            min_len: 8,
            max_len: 20,
            ..DomainProfile::default_a()
        },
        held_out_utterances: 300,
        ..DomainWorldConfig::default_a()
    }
}

pub fn trend_world_b() -> DomainWorldConfig {
    DomainWorldConfig {
        profile: DomainProfile {
            n_utterances: 400,
            ..DomainProfile::default_b()
        },
        ..DomainWorldConfig::default_b()
    }
}

fn world_a() -> WorldConfig {
    WorldConfig {
        a: Some(trend_world_a()),
        b: None,
        ..WorldConfig::default()
    }
}

fn world_ab() -> WorldConfig {
    WorldConfig {
        a: Some(trend_world_a()),
        b: Some(trend_world_b()),
        ..WorldConfig::default()
    }
}

fn dup(strategy: SpeakerStrategy) -> Aug {
    Aug::of(K::DuplicateCopy, strategy).with_filter(FILTER_THRESHOLD)
}

fn plan(
    name: &str,
    train: &[&str],
    eval: &[&str],
    arms: Vec<ArmSpec>,
    world: WorldConfig,
) -> ExperimentPlan {
    ExperimentPlan {
        name: name.to_string(),
        seeds: DEFAULT_SEEDS.to_vec(),
        train: train.iter().map(|s| TrainSource::full(s)).collect(),
        eval: eval.iter().map(|s| s.to_string()).collect(),
        arms,
        world,
    }
}

/// Speaker strategies for duplicate-copy augmentation.
pub fn table2() -> ExperimentPlan {
    use SpeakerStrategy::*;
    let arms = vec![
        ArmSpec::new("none", vec![]).registry("table2", "None", "test-clean"),
        ArmSpec::new("original", vec![dup(Original)]).registry("table2", "Original", "test-clean"),
        ArmSpec::new("random", vec![dup(Random)]).registry("table2", "Random", "test-clean"),
        ArmSpec::new("sampled", vec![dup(Sampled)]).registry("table2", "Sampled", "test-clean"),
    ];
    plan("table2", &["A:train"], &["A:test"], arms, world_a())
}

/// Source fractions with and without a synthesized copy of the full set.
pub fn table3() -> ExperimentPlan {
    let mut arms = vec![
        ArmSpec::new("aug-only", vec![dup(SpeakerStrategy::Sampled)])
            .train_on(vec![TrainSource::fraction("A:train", 0.0)])
            .registry("table3", "0", "aug-clean"),
    ];
    for (label, fraction, condition) in [
        ("1/8", 0.125, Some("100-clean")),
        ("1/4", 0.25, None),
        ("1/2", 0.5, Some("460-clean")),
        ("1", 1.0, Some("960-all")),
    ] {
        let source = vec![TrainSource::fraction("A:train", fraction)];
        let mut only = ArmSpec::new(&format!("source-{label}"), vec![]).train_on(source.clone());
        let mut aug = ArmSpec::new(
            &format!("aug-{label}"),
            vec![dup(SpeakerStrategy::Sampled).with_source("A:train")],
        )
        .train_on(source);
        if let Some(c) = condition {
            only = only.registry("table3", c, "source-clean");
            aug = aug.registry("table3", c, "aug-clean");
        }
        arms.push(only);
        arms.push(aug);
    }
    plan("table3", &["A:train"], &["A:test"], arms, world_a())
}

/// Synthesizing the evaluation transcripts.
pub fn table4() -> ExperimentPlan {
    let topline = |s| Aug::of(K::Topline, s).with_filter(FILTER_THRESHOLD);
    let arms = vec![
        ArmSpec::new("none", vec![]).registry("table2", "None", "test-clean"),
        ArmSpec::new("topline-sampled", vec![topline(SpeakerStrategy::Sampled)]).registry(
            "table4",
            "Sampled",
            "test-clean",
        ),
        ArmSpec::new("topline-original", vec![topline(SpeakerStrategy::Original)]).registry(
            "table4",
            "Original",
            "test-clean",
        ),
    ];
    plan("table4", &["A:train"], &["A:test"], arms, world_a())
}

/// LM-sampled sentences at growing multiples of the source size.
pub fn table5() -> ExperimentPlan {
    let lex = |ratio| {
        Aug::of(K::LexicalLm, SpeakerStrategy::Sampled)
            .with_ratio(ratio, SamplingConstraints::long_form())
            .with_filter(FILTER_THRESHOLD)
    };
    let arms = vec![
        ArmSpec::new("none", vec![]).registry("table5", "0", "test-clean"),
        ArmSpec::new("lm-x0.17", vec![lex(1.0 / 6.0)]).registry("table5", "100k", "test-clean"),
        ArmSpec::new("lm-x1", vec![lex(1.0)]).registry("table5", "600k", "test-clean"),
        ArmSpec::new("lm-x2", vec![lex(2.0)]).registry("table5", "1.1M", "test-clean"),
    ];
    plan("table5", &["A:train"], &["A:test"], arms, world_a())
}

const IS: &str = "B:train";
const LS: &str = "A:train";

fn is_only() -> Vec<TrainSource> {
    vec![TrainSource::full(IS)]
}

fn is_ls() -> Vec<TrainSource> {
    vec![TrainSource::full(IS), TrainSource::full(LS)]
}

/// In-domain and out-of-domain synthesizers for the short-sentence domain.
pub fn table6() -> ExperimentPlan {
    let copy = |d| {
        Aug::of(K::DuplicateCopy, SpeakerStrategy::Sampled)
            .with_source(IS)
            .with_synthesizer(d)
    };
    let mut arms = Vec::new();
    for (train, column, sources) in [("is", "IS", is_only()), ("is+ls", "IS+LS", is_ls())] {
        arms.push(
            ArmSpec::new(&format!("{train}/none"), vec![])
                .train_on(sources.clone())
                .registry("table6", "None", column),
        );
        arms.push(
            ArmSpec::new(&format!("{train}/is-tts"), vec![copy(Domain::B)])
                .train_on(sources.clone())
                .registry("table6", "Isolated-Sentences", column),
        );
        arms.push(
            ArmSpec::new(&format!("{train}/ls-tts"), vec![copy(Domain::A)])
                .train_on(sources)
                .registry("table6", "LibriSpeech", column),
        );
    }
    plan("table6", &[IS], &["B:test"], arms, world_ab())
}

/// Topline for the short-sentence domain.
pub fn table7() -> ExperimentPlan {
    let top = |d| {
        Aug::of(K::Topline, SpeakerStrategy::Sampled)
            .with_source("B:test")
            .with_synthesizer(d)
    };
    let mut arms = Vec::new();
    for (train, column, sources) in [("is", "IS", is_only()), ("is+ls", "IS+LS", is_ls())] {
        arms.push(
            ArmSpec::new(&format!("{train}/topline-is-tts"), vec![top(Domain::B)])
                .train_on(sources.clone())
                .registry("table7", "Isolated-Sentences", column),
        );
        arms.push(
            ArmSpec::new(&format!("{train}/topline-ls-tts"), vec![top(Domain::A)])
                .train_on(sources)
                .registry("table7", "LibriSpeech", column),
        );
    }
    plan("table7", &[IS], &["B:test"], arms, world_ab())
}

/// LM-sampled short sentences rendered by either synthesizer.
pub fn table8() -> ExperimentPlan {
    let lex = |ratio, d| {
        Aug::of(K::LexicalLm, SpeakerStrategy::Sampled)
            .with_source(IS)
            .with_ratio(ratio, SamplingConstraints::short_form())
            .with_synthesizer(d)
    };
    let mut arms = Vec::new();
    for (train, column, sources) in [("is", "IS", is_only()), ("is+ls", "IS+LS", is_ls())] {
        arms.push(
            ArmSpec::new(&format!("{train}/none"), vec![])
                .train_on(sources.clone())
                .registry("table8", "0", &format!("{column}/IS-TTS")),
        );
        for (ratio, condition) in [(0.5, "100k"), (1.0, "200k"), (2.0, "400k")] {
            for (tts, d) in [("is-tts", Domain::B), ("ls-tts", Domain::A)] {
                arms.push(
                    ArmSpec::new(&format!("{train}/{tts}-x{ratio}"), vec![lex(ratio, d)])
                        .train_on(sources.clone())
                        .registry(
                            "table8",
                            condition,
                            &format!("{column}/{}", tts.to_uppercase()),
                        ),
                );
            }
        }
    }
    plan("table8", &[IS], &["B:test"], arms, world_ab())
}

pub fn builtin_plan(name: &str) -> Result<ExperimentPlan> {
    Ok(match name {
        "table2" => table2(),
        "table3" => table3(),
        "table4" => table4(),
        "table5" => table5(),
        "table6" => table6(),
        "table7" => table7(),
        "table8" => table8(),
        other => {
            return Err(Error::InvalidPlan(format!(
                "unknown built-in plan `{other}` (expected one of {})",
                PLAN_NAMES.join(", ")
            )))
        }
    })
}
