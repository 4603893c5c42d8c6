use std::path::Path;
use std::process::{Command, Output};

use synthaug::corpus::{Manifest, Origin};
use synthaug::pipeline::RunReport;

fn invoke(dir: &Path, args: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_synthaug"))
        .current_dir(dir)
        .args(args.split_whitespace())
        .output()
        .unwrap()
}

fn run(dir: &Path, args: &str) -> String {
    let out = invoke(dir, args);
    assert!(
        out.status.success(),
        "synthaug {args} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn corpus_to_filter_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("profile.toml"),
        "domain = \"A\"\nvocab_size = 80\nmin_len = 4\nmax_len = 12\n\
         n_speakers = 8\nn_utterances = 120\n",
    )
    .unwrap();
    run(
        d,
        "corpus gen --profile profile.toml --seed 3 --out all.jsonl",
    );
    assert!(run(d, "corpus stats all.jsonl").contains("\"n_utterances\": 120"));
    run(d, "corpus split --in all.jsonl --seed 3 --out-dir split");
    let train = Manifest::load(d.join("split/train.jsonl")).unwrap();
    assert_eq!(train.len(), 108);

    run(d, "speaker pool --n 8 --seed 3 --domain A --out pool.jsonl");
    run(
        d,
        "synth run --pool pool.jsonl --strategy original --in split/train.jsonl \
         --seed 3 --as-human --no-failure --out human.jsonl",
    );
    let human = Manifest::load(d.join("human.jsonl")).unwrap();
    assert!(human
        .iter()
        .all(|u| u.origin == Origin::Human && u.audio.is_some()));
    assert_eq!(
        human.iter().next().unwrap().id,
        train.iter().next().unwrap().id
    );

    run(d, "asr train --in human.jsonl --out asr.json");
    run(
        d,
        "synth run --pool pool.jsonl --strategy sampled --in split/train.jsonl \
         --seed 3 --out tts.jsonl",
    );
    run(
        d,
        "asr decode --model asr.json --in tts.jsonl --out hyps.tsv",
    );
    let msg = run(
        d,
        "filter wer --threshold 0.2 --refs tts.jsonl --hyps hyps.tsv \
         --keep keep.jsonl --reject reject.jsonl",
    );
    assert!(msg.starts_with("kept"));
    let kept = Manifest::load(d.join("keep.jsonl")).unwrap();
    let rejected = Manifest::load(d.join("reject.jsonl")).unwrap();
    assert_eq!(kept.len() + rejected.len(), 108);

    let eval = run(
        d,
        "asr eval --model asr.json --test human.jsonl --report eval.json",
    );
    assert!(eval.starts_with("WER"));

    run(d, "lm train --order 3 --in split/train.jsonl --out lm.json");
    run(
        d,
        "lm sample --model lm.json --max-words 10 --max-ppl 500 --count 25 \
         --seed 1 --out lm.jsonl",
    );
    let lm = Manifest::load(d.join("lm.jsonl")).unwrap();
    assert_eq!(lm.len(), 25);
    assert!(lm.iter().all(|u| u.word_count() < 10));
}

#[test]
fn experiment_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let plan = run(d, "experiment show table4");
    std::fs::write(d.join("plan.toml"), plan).unwrap();
    run(d, "experiment run plan.toml --seeds 1,2 --out r1");
    run(d, "experiment run table4 --seeds 1,2 --out r2");
    let a = std::fs::read(d.join("r1/report.json")).unwrap();
    let b = std::fs::read(d.join("r2/report.json")).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        RunReport::read_from(d.join("r1")).unwrap().seeds,
        vec![1, 2]
    );

    let cmp = run(d, "report compare --run r1 --json cmp.json");
    assert!(cmp.contains("topline-sampled"));
    run(d, "report registry --out registry.json");
    let again = run(d, "report compare --run r1 --registry registry.json");
    assert_eq!(cmp, again);
}

#[test]
fn bad_arguments_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let fails = |args: &str| !invoke(tmp.path(), args).status.success();
    assert!(fails("experiment run table9 --out x"));
    assert!(fails("corpus stats missing.jsonl"));
    assert!(fails("corpus gen --domain C --seed 1 --out x"));
    assert!(fails(
        "corpus split --in x --ratios 0.5,0.5 --seed 1 --out-dir y"
    ));
}
