mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sarclip::eval::{EvalReport, SummaryRow};
use sarclip::train::{Checkpoint, StageTag};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sarclip")).args(args).env_remove("SARCLIP_CONFIG").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn is_hex_fingerprint(f: &str) -> bool {
    f.len() == 16 && f.chars().all(|c| c.is_ascii_hexdigit())
}

struct Bench {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Bench {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        ok(&["synthetic-corpus", "--out", p(&root.join("bench")), "--seed", "3"]);
        Self { _dir: dir, root }
    }

    fn file(&self, name: &str) -> PathBuf {
        self.root.join("bench").join(name)
    }

    fn train(&self, out: &str, epochs: usize, extra: &[&str]) -> PathBuf {
        let ckpt = self.root.join(out);
        let mut args = vec![
            "train",
            "--pairs",
            p(&self.file("train.jsonl")),
            "--features",
            p(&self.file("features.f64")),
            "--out",
            p(&ckpt),
            "--epochs",
            &epochs.to_string(),
            "--batch-size",
            "64",
            "--lr",
            "0.002",
        ]
        .into_iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>();
        args.extend(extra.iter().map(|s| s.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        ok(&refs);
        ckpt
    }
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["train"]).status.code(), Some(1));
}

#[test]
fn missing_input_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["synth", "--manifests", p(&dir.path().join("absent")), "--out", p(&dir.path().join("x.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("sarclip: error"));
}

#[test]
fn invalid_manifest_exits_one_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m");
    std::fs::create_dir(&m).unwrap();
    std::fs::write(
        m.join("bad.json"),
        r#"{"images":[{"id":"a","width":10,"height":10,"split":"train"},{"id":"b","width":10,"height":10,"split":"train"}],
            "annotations":[{"image_id":"a","category":"ship","bbox":[5,5,20,2]},
                           {"image_id":"b","category":"ship","bbox":[1,1,2,2]}]}"#,
    )
    .unwrap();
    let pairs = dir.path().join("pairs.jsonl");
    let out = run(&["synth", "--manifests", p(&m), "--out", p(&pairs), "--strict"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!pairs.exists());
    let out = run(&["synth", "--manifests", p(&m), "--out", p(&pairs), "--permissive"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sarclip: warning: dropped a"));
    assert_eq!(std::fs::read_to_string(&pairs).unwrap().lines().count(), 5);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["--set", "train.no_such_knob=3", "synthetic-corpus", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[train]\nbogus = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sarclip"))
        .args(["synthetic-corpus", "--out", p(&dir.path().join("b"))])
        .env("SARCLIP_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn synth_is_byte_identical_and_fingerprinted() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m");
    common::write_small_manifests(&m);
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    ok(&["synth", "--manifests", p(&m), "--out", p(&a), "--seed", "42"]);
    ok(&["synth", "--manifests", p(&m), "--out", p(&b), "--seed", "42"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let stats: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a.jsonl.stats.json")).unwrap()).unwrap();
    assert_eq!(stats["format_version"], sarclip::FORMAT_VERSION);
    assert!(stats["fingerprint"].as_str().is_some_and(is_hex_fingerprint));

    let c = dir.path().join("c.jsonl");
    ok(&["synth", "--manifests", p(&m), "--out", p(&c), "--seed", "43"]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn two_stage_training_evaluation_and_report() {
    let bench = Bench::new();
    let stage1 = bench.train("stage1.ckpt", 30, &[]);
    assert_eq!(Checkpoint::load(&stage1).unwrap().stage, StageTag::Stage1);
    let stage2 = bench.train("stage2.ckpt", 5, &["--init", p(&stage1)]);
    let ckpt2 = Checkpoint::load(&stage2).unwrap();
    assert_eq!(ckpt2.stage, StageTag::Stage2);
    assert!(is_hex_fingerprint(&ckpt2.fingerprint));

    let retrieval = bench.root.join("retrieval.json");
    let out = ok(&[
        "eval", "retrieval", "--ckpt", p(&stage2), "--features", p(&bench.file("features.f64")),
        "--pairs", p(&bench.file("test.jsonl")), "--k", "1,5,10", "--out", p(&retrieval),
    ]);
    let report = EvalReport::read_json(&retrieval).unwrap();
    for dir in ["i2t", "t2i"] {
        for k in [1, 5, 10] {
            let v = report.metric(&format!("{dir}_r@{k}")).unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
    assert!(report.metric("mean_recall").unwrap() > 0.5);
    assert!(String::from_utf8_lossy(&out.stdout).contains("mean"));

    let zeroshot = bench.root.join("zeroshot.json");
    ok(&[
        "eval", "zeroshot", "--ckpt", p(&stage2), "--features", p(&bench.file("features.f64")),
        "--labels", p(&bench.file("test_labels.csv")), "--out", p(&zeroshot),
    ]);
    let probe = bench.root.join("probe.json");
    ok(&[
        "eval", "probe", "--ckpt", p(&stage2), "--features", p(&bench.file("features.f64")),
        "--labels", p(&bench.file("test_labels.csv")), "--out", p(&probe),
    ]);
    assert_eq!(Checkpoint::load(&stage2).unwrap().params.content_hash(), ckpt2.params.content_hash());

    let summaries: Vec<PathBuf> = ["retrieval", "zeroshot", "probe"]
        .iter()
        .map(|t| bench.root.join(format!("{t}.json.summary.csv")))
        .collect();
    let table = bench.root.join("table.csv");
    let mut args = vec!["report", "--out", p(&table)];
    args.extend(summaries.iter().map(|s| p(s)));
    ok(&args);
    let text = std::fs::read_to_string(&table).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().next().unwrap().contains("i2t_r@1"));

    let mut rows = SummaryRow::read_csv(&summaries[0]).unwrap();
    rows[0].format_version += 1;
    let future = bench.root.join("future.csv");
    rows[0].write_csv(&future).unwrap();
    let refused = run(&["report", p(&summaries[1]), p(&future)]);
    assert_eq!(refused.status.code(), Some(1));
}

#[test]
fn stage_two_rejects_a_mismatched_vocabulary() {
    let bench = Bench::new();
    let stage1 = bench.train("stage1.ckpt", 3, &["--set", "train.warmup_steps=2"]);
    let other_vocab = bench.root.join("other.vocab");
    std::fs::write(&other_vocab, "<unk>\nonly\nthree\n").unwrap();
    let ckpt = bench.root.join("stage2.ckpt");
    let out = run(&[
        "train", "--pairs", p(&bench.file("train.jsonl")), "--features", p(&bench.file("features.f64")),
        "--vocab", p(&other_vocab), "--init", p(&stage1), "--out", p(&ckpt),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!ckpt.exists());
}

#[test]
fn gradcheck_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("grad.json");
    ok(&["gradcheck", "--models", "5", "--out", p(&report)]);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert!(v.to_string().contains("max_rel_error"));

    let bench = Bench::new();
    let ckpt = bench.train("m.ckpt", 3, &["--set", "train.warmup_steps=2"]);
    let emb = bench.root.join("emb.f64");
    ok(&[
        "export-embeddings", "--ckpt", p(&ckpt), "--features", p(&bench.file("features.f64")),
        "--pairs", p(&bench.file("test.jsonl")), "--out", p(&emb),
    ]);
    let images = sarclip::embed::FeatureStore::read(&emb).unwrap();
    let texts = sarclip::embed::FeatureStore::read(bench.root.join("emb.f64.text")).unwrap();
    assert_eq!(images.len(), 128);
    assert_eq!(texts.len(), 128);
    assert_eq!(images.dim(), texts.dim());
}
