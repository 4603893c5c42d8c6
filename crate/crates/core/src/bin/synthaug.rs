use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use synthaug::corpus::{self, Domain, DomainProfile, Manifest, Origin, Partition, Utterance};
use synthaug::lm::{self, NGramModel, SamplingConstraints};
use synthaug::pipeline::registry::{load_registry, save_registry};
use synthaug::pipeline::{builtin_plan, compare_to_registry, registry, run_experiment};
use synthaug::pipeline::{ExperimentPlan, RunReport};
use synthaug::simasr::{self, ConfusionModel};
use synthaug::simtts::{ChannelConfig, Codebook, FailureModel, Synthesizer};
use synthaug::speaker::{self, EmbeddingPool, FactorModel, SpeakerStrategy};
use synthaug::textmetrics;

#[derive(Parser)]
#[command(
    name = "synthaug",
    version,
    about = "Simulated TTS augmentation for ASR training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, split and inspect manifests.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Build speaker embedding pools.
    #[command(subcommand)]
    Speaker(SpeakerCmd),
    /// Train and sample n-gram language models.
    #[command(subcommand)]
    Lm(LmCmd),
    /// Filter synthesized utterances by recognition WER.
    #[command(subcommand)]
    Filter(FilterCmd),
    /// Render manifests into audio tokens.
    #[command(subcommand)]
    Synth(SynthCmd),
    /// Train, decode with and evaluate the recognizer.
    #[command(subcommand)]
    Asr(AsrCmd),
    /// Run experiment plans.
    #[command(subcommand)]
    Experiment(ExperimentCmd),
    /// Compare run reports with the published reference values.
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Generate a corpus from a TOML domain profile (or a built-in default).
    Gen {
        #[arg(long, conflicts_with = "domain")]
        profile: Option<PathBuf>,
        /// Use the default profile of this domain.
        #[arg(long, value_parser = parse_domain)]
        domain: Option<Domain>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a manifest into train, dev and test manifests.
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "0.9,0.05,0.05")]
        ratios: String,
        #[arg(long)]
        seed: u64,
        /// Directory receiving train.jsonl, dev.jsonl and test.jsonl.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print corpus statistics as JSON.
    Stats { path: PathBuf },
}

#[derive(Subcommand)]
enum SpeakerCmd {
    /// Sample a pool on a fresh low-rank factor model.
    Pool {
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = speaker::DEFAULT_RANK)]
        rank: usize,
        #[arg(long)]
        seed: u64,
        /// Name speakers as the corpus generator does for this domain.
        #[arg(long, value_parser = parse_domain)]
        domain: Option<Domain>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum LmCmd {
    Train {
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample constrained sentences into a manifest without speakers.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 20)]
        max_words: usize,
        #[arg(long, default_value_t = 500.0)]
        max_ppl: f64,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_parser = parse_domain, default_value = "A")]
        domain: Domain,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum FilterCmd {
    Wer {
        #[arg(long, default_value_t = 0.20)]
        threshold: f64,
        #[arg(long)]
        refs: PathBuf,
        /// Lines of `id<TAB>hypothesis`.
        #[arg(long)]
        hyps: PathBuf,
        #[arg(long)]
        keep: PathBuf,
        #[arg(long)]
        reject: PathBuf,
    },
}

#[derive(Args)]
struct ChannelArgs {
    /// Codebook seed; defaults to the synthesis seed.
    #[arg(long)]
    codebook_seed: Option<u64>,
    /// Codebook domain; defaults to the domain of the first utterance.
    #[arg(long, value_parser = parse_domain)]
    codebook_domain: Option<Domain>,
    /// TOML file with a ChannelConfig.
    #[arg(long)]
    channel: Option<PathBuf>,
    /// TOML file with a FailureModel.
    #[arg(long, conflicts_with = "no_failure")]
    failure: Option<PathBuf>,
    /// Disable truncation and babbling.
    #[arg(long)]
    no_failure: bool,
}

#[derive(Subcommand)]
enum SynthCmd {
    Run {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, default_value = "sampled")]
        strategy: SpeakerStrategy,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "tts")]
        prefix: String,
        /// Keep source ids and human origin (for rendering human audio).
        #[arg(long)]
        as_human: bool,
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum AsrCmd {
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = simasr::DEFAULT_BETA)]
        beta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write `id<TAB>hypothesis` lines for every utterance with audio.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Run a plan file or a built-in plan name (table2 ... table8).
    Run {
        plan: String,
        /// Override the plan's seeds, e.g. `1,2,3`.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a built-in plan as TOML.
    Show { name: String },
}

#[derive(Subcommand)]
enum ReportCmd {
    Compare {
        #[arg(long)]
        run: PathBuf,
        /// Registry JSON; defaults to the built-in reference values.
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Also write the comparison as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Export the built-in registry as JSON.
    Registry {
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_domain(s: &str) -> std::result::Result<Domain, String> {
    match s {
        "A" | "a" => Ok(Domain::A),
        "B" | "b" => Ok(Domain::B),
        other => Err(format!("unknown domain `{other}` (expected A or B)")),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|e| anyhow::anyhow!("bad list element `{x}`: {e}"))
        })
        .collect()
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_manifest(path: &Path) -> Result<Manifest> {
    Manifest::load(path).with_context(|| format!("loading manifest {}", path.display()))
}

fn read_hyps(path: &Path) -> Result<Vec<(String, String)>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, hyp) = line.split_once('\t').unwrap_or((line.as_str(), ""));
        if id.is_empty() {
            bail!("{}:{}: missing utterance id", path.display(), i + 1);
        }
        out.push((id.to_string(), hyp.to_string()));
    }
    Ok(out)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Corpus(c) => corpus_cmd(c),
        Command::Speaker(SpeakerCmd::Pool {
            n,
            rank,
            seed,
            domain,
            out,
        }) => {
            let fm = FactorModel::random(rank, seed)?;
            let ids: Vec<String> = (0..n)
                .map(|i| match domain {
                    Some(d) => corpus::speaker_id(d, i),
                    None => format!("spk{i:03}"),
                })
                .collect();
            EmbeddingPool::sample(fm, ids, seed)?.save(&out)?;
            Ok(())
        }
        Command::Lm(c) => lm_cmd(c),
        Command::Filter(FilterCmd::Wer {
            threshold,
            refs,
            hyps,
            keep,
            reject,
        }) => {
            let refs = load_manifest(&refs)?;
            let mut pairs = Vec::new();
            for (id, hyp) in read_hyps(&hyps)? {
                let Some(u) = refs.iter().find(|u| u.id == id) else {
                    bail!("hypothesis for unknown utterance `{id}`");
                };
                pairs.push((u.clone(), hyp));
            }
            let report = textmetrics::filter_by_wer(&pairs, threshold);
            report.kept.save(&keep)?;
            report.rejected.save(&reject)?;
            println!(
                "kept {} rejected {} ({:.2}%)",
                report.kept.len(),
                report.rejected.len(),
                100.0 * report.rejection_fraction
            );
            Ok(())
        }
        Command::Synth(SynthCmd::Run {
            pool,
            strategy,
            input,
            seed,
            prefix,
            as_human,
            channel,
            out,
        }) => {
            let m = load_manifest(&input)?;
            let pool = EmbeddingPool::load(&pool)?;
            let domain = channel
                .codebook_domain
                .or_else(|| m.iter().next().map(|u| u.domain))
                .unwrap_or(Domain::A);
            let codebook = Codebook::for_domain(domain, channel.codebook_seed.unwrap_or(seed));
            let channel_cfg: ChannelConfig = match &channel.channel {
                Some(p) => read_toml(p)?,
                None => ChannelConfig::default(),
            };
            let failure = match (&channel.failure, channel.no_failure) {
                (_, true) => FailureModel::none(),
                (Some(p), false) => read_toml(p)?,
                (None, false) => FailureModel::default(),
            };
            failure.validate()?;
            let synth = Synthesizer::new(codebook, pool, channel_cfg, failure);
            let mut rendered = synth.synthesize_manifest(&m, strategy, &prefix, seed)?;
            if as_human {
                let utts = m
                    .iter()
                    .zip(rendered.into_utterances())
                    .map(|(src, r)| Utterance {
                        audio: r.audio,
                        ..src.clone()
                    });
                rendered = Manifest::from_utterances(m.name.clone(), m.partition, utts)?;
            }
            rendered.save(&out)?;
            Ok(())
        }
        Command::Asr(c) => asr_cmd(c),
        Command::Experiment(ExperimentCmd::Run { plan, seeds, out }) => {
            let mut plan = if Path::new(&plan).exists() {
                ExperimentPlan::load(&plan)?
            } else {
                builtin_plan(&plan)?
            };
            if let Some(s) = seeds {
                plan.seeds = parse_list(&s)?;
            }
            let report = run_experiment(&plan)?;
            report.write_to(&out)?;
            print!("{}", report.summary_table());
            Ok(())
        }
        Command::Experiment(ExperimentCmd::Show { name }) => {
            print!("{}", builtin_plan(&name)?.to_toml()?);
            Ok(())
        }
        Command::Report(ReportCmd::Compare {
            run,
            registry: path,
            json,
        }) => {
            let report = RunReport::read_from(&run)?;
            let entries = match path {
                Some(p) => load_registry(p)?,
                None => registry(),
            };
            let cmp = compare_to_registry(&report, &entries);
            if let Some(p) = json {
                fs::write(p, cmp.to_json()?)?;
            }
            print!("{}", cmp.render());
            Ok(())
        }
        Command::Report(ReportCmd::Registry { out }) => {
            save_registry(&registry(), out)?;
            Ok(())
        }
    }
}

fn corpus_cmd(c: CorpusCmd) -> Result<()> {
    match c {
        CorpusCmd::Gen {
            profile,
            domain,
            seed,
            out,
        } => {
            let profile: DomainProfile = match (profile, domain) {
                (Some(p), _) => read_toml(&p)?,
                (None, Some(Domain::B)) => DomainProfile::default_b(),
                (None, _) => DomainProfile::default_a(),
            };
            corpus::generate_corpus(&profile, seed)?.save(&out)?;
        }
        CorpusCmd::Split {
            input,
            ratios,
            seed,
            out_dir,
        } => {
            let r: Vec<f64> = parse_list(&ratios)?;
            let [rt, rd, rs] = r[..] else {
                bail!("--ratios needs exactly three values");
            };
            let m = load_manifest(&input)?;
            let (train, dev, test) = corpus::split_partitions(&m, (rt, rd, rs), seed)?;
            fs::create_dir_all(&out_dir)?;
            train.save(out_dir.join("train.jsonl"))?;
            dev.save(out_dir.join("dev.jsonl"))?;
            test.save(out_dir.join("test.jsonl"))?;
        }
        CorpusCmd::Stats { path } => {
            let s = corpus::stats(&load_manifest(&path)?);
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
    }
    Ok(())
}

fn lm_cmd(c: LmCmd) -> Result<()> {
    match c {
        LmCmd::Train {
            order,
            alpha,
            input,
            out,
        } => lm::train_lm(&load_manifest(&input)?, order, alpha)?.save(&out)?,
        LmCmd::Sample {
            model,
            max_words,
            max_ppl,
            count,
            seed,
            domain,
            out,
        } => {
            let model = NGramModel::load(&model)?;
            let c = SamplingConstraints::new(max_words, max_ppl);
            let sentences = lm::sample_utterances(&model, &c, count, seed)?;
            let utts = sentences
                .into_iter()
                .enumerate()
                .map(|(i, words)| Utterance {
                    id: format!("{domain}-lm{i:06}"),
                    text: words.join(" "),
                    speaker_id: String::new(),
                    domain,
                    origin: Origin::Human,
                    embedding_ref: None,
                    audio: None,
                });
            Manifest::from_utterances("lm-samples", Partition::Unsplit, utts)?.save(&out)?;
        }
    }
    Ok(())
}

fn asr_cmd(c: AsrCmd) -> Result<()> {
    match c {
        AsrCmd::Train { input, beta, out } => {
            let model = simasr::train_on_manifest(&load_manifest(&input)?, beta)?;
            eprintln!(
                "trained on {} pairs, skipped {}",
                model.trained_pairs, model.skipped_pairs
            );
            model.save(&out)?;
        }
        AsrCmd::Decode { model, input, out } => {
            let model = ConfusionModel::load(&model)?;
            let m = load_manifest(&input)?;
            let hyps = simasr::transcribe(&model, &m);
            let mut w = std::io::BufWriter::new(File::create(&out)?);
            for (u, h) in m.iter().zip(hyps) {
                if u.audio.is_some() {
                    writeln!(w, "{}\t{h}", u.id)?;
                }
            }
        }
        AsrCmd::Eval {
            model,
            test,
            report,
        } => {
            let model = ConfusionModel::load(&model)?;
            let r = simasr::evaluate(&model, &load_manifest(&test)?);
            fs::write(&report, serde_json::to_string_pretty(&r)? + "\n")?;
            println!(
                "WER {:.2}% over {} utterances",
                100.0 * r.corpus_wer,
                r.n_scored
            );
        }
    }
    Ok(())
}
