//! The `sarclip` command line.
//!
//! Configuration is layered: defaults, then the TOML file given by
//! `--config` (or the `SARCLIP_CONFIG` environment variable), then
//! `--set section.key=value` overrides, then explicit subcommand flags.
//! Unknown keys are rejected. Sections: `synth`, `synthetic`, `train`, `probe`.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 internal failure.
//! Errors go to stderr as `sarclip: error[<kind>]: <message>`.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::io::Write;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::caption::{synthesize_corpus_to_file, read_pairs, CorpusStats, RuleVerifier, SynthOptions};
use crate::embed::{encode_images, encode_texts, tokenize, FeatureStore, Vocab};
use crate::eval::{
    retrieval_eval, train_linear_probe, zero_shot_classify, ClassPromptSet, EvalReport, ProbeConfig, SummaryRow,
    DEFAULT_KS,
};
use crate::fingerprint::fingerprint;
use crate::ingest::{load_manifest_dir, read_classification_manifest, AnnotationKind, ValidationMode};
use crate::synthetic::{generate, SyntheticConfig};
use crate::train::{
    train_stage_with, Checkpoint, GradcheckCase, LossLog, Preset, StageTag, TrainConfig, TrainCorpus,
};
use crate::{Error, Result, FORMAT_VERSION};

pub const CONFIG_ENV: &str = "SARCLIP_CONFIG";

/// Every tunable setting, as read from the config file and overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub synth: SynthOptions,
    pub synthetic: SyntheticConfig,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
}

impl RunConfig {
    pub fn fingerprint(&self) -> String {
        fingerprint(self)
    }
}

#[derive(Parser, Debug)]
#[command(name = "sarclip", version, about = "Contrastive image-text alignment toolkit for SAR imagery")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML config file (default: $SARCLIP_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Config override such as `train.base_lr=0.001`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// More progress output on stderr.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Annotation manifests to an image-caption pair corpus.
    Synth(SynthArgs),
    /// Write the clustered 8-class synthetic benchmark.
    SyntheticCorpus(SyntheticArgs),
    /// Contrastive training; stage 2 when --init is given.
    Train(TrainArgs),
    /// Retrieval, zero-shot or linear-probe evaluation.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Finite-difference check of the loss gradients on random small models.
    Gradcheck(GradcheckArgs),
    /// Image (and optionally caption) embeddings as a feature store.
    ExportEmbeddings(ExportArgs),
    /// Aggregate evaluation summary rows into one table.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Directory of manifests (.json detection, .csv classification or caption).
    #[arg(long)]
    manifests: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    captions_per_image: Option<usize>,
    /// Fail on any invalid record (the default).
    #[arg(long, conflicts_with = "permissive")]
    strict: bool,
    /// Drop invalid records instead of failing.
    #[arg(long)]
    permissive: bool,
    /// Statistics file (default: <out>.stats.json).
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SyntheticArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mixing_seed: Option<u64>,
    /// Domain perturbation of the mixing matrix.
    #[arg(long)]
    shift: Option<f64>,
    #[arg(long)]
    train_pairs: Option<usize>,
    #[arg(long)]
    test_pairs: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum PresetArg {
    Small,
    Large,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    pairs: PathBuf,
    /// Feature store holding each pair's `feature_ref`.
    #[arg(long)]
    features: PathBuf,
    /// Vocabulary file (default: the init checkpoint's, else built from the pairs).
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Stage-1 checkpoint to start from.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Per-step loss log (default: <out>.loss.csv).
    #[arg(long)]
    loss_log: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum EvalCommand {
    Retrieval(RetrievalArgs),
    Zeroshot(ZeroshotArgs),
    Probe(ProbeArgs),
}

#[derive(Args, Debug)]
struct ModelInputs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Vocabulary file (default: <ckpt>.vocab).
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Report file; a summary row goes to <out>.summary.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RetrievalArgs {
    #[command(flatten)]
    model: ModelInputs,
    /// Test corpus with one caption per image.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_KS.to_vec())]
    k: Vec<usize>,
}

#[derive(Args, Debug)]
struct ZeroshotArgs {
    #[command(flatten)]
    model: ModelInputs,
    /// Classification manifest with the true labels.
    #[arg(long)]
    labels: PathBuf,
    /// JSON object mapping class names to prompt lists (default: general templates).
    #[arg(long)]
    prompts: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ProbeArgs {
    #[command(flatten)]
    model: ModelInputs,
    /// Classification manifest with the labels.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Also save the encoder plus probe head as a probe checkpoint.
    #[arg(long)]
    head_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    models: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    /// JSON report file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Image embedding store; caption embeddings go to <out>.text when --pairs is given.
    #[arg(long)]
    out: PathBuf,
    /// Restrict to these pairs' images and also export their captions.
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Summary CSV files written by `eval`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output table (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `argv` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            report_error(&e);
            if e.is_user_error() {
                1
            } else {
                2
            }
        }
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Parse { .. } => "parse",
        Error::Validation(_) => "validation",
        Error::InvalidInput(_) => "input",
        Error::Shape(_) => "shape",
        Error::Numeric(_) => "numeric",
        Error::Format(_) => "format",
        Error::Config(_) => "config",
        Error::Contract(_) => "contract",
        Error::Io { .. } => "io",
    }
}

fn report_error(e: &Error) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "sarclip: error[{}]: {e}", error_kind(e));
    if let Error::Validation(issues) = e {
        for issue in issues.iter().take(50) {
            let _ = writeln!(err, "sarclip: issue: {issue}");
        }
        if issues.len() > 50 {
            let _ = writeln!(err, "sarclip: issue: ... {} more", issues.len() - 50);
        }
    }
}

fn warn(message: impl std::fmt::Display) {
    eprintln!("sarclip: warning: {message}");
}

fn execute(cli: &Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Synth(a) => cmd_synth(cli, a),
        Command::SyntheticCorpus(a) => cmd_synthetic(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Eval(EvalCommand::Retrieval(a)) => cmd_eval_retrieval(cli, a),
        Command::Eval(EvalCommand::Zeroshot(a)) => cmd_eval_zeroshot(cli, a),
        Command::Eval(EvalCommand::Probe(a)) => cmd_eval_probe(cli, a),
        Command::Gradcheck(a) => cmd_gradcheck(cli, a),
        Command::ExportEmbeddings(a) => cmd_export(cli, a),
        Command::Report(a) => cmd_report(a),
    })
}

// ---- configuration ----

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed config key `{key}`")));
    }
    let mut current = table;
    for part in &parts[..parts.len() - 1] {
        let entry = current.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("config key `{key}`: `{part}` is not a section")))?;
    }
    current.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Builds the effective config from the file, `--set` overrides and `flags`.
fn load_config(cli: &Cli, flags: &[(&str, toml::Value)]) -> Result<RunConfig> {
    let path = cli.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let mut table = match &path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(format!("reading config {}", p.display()), e))?;
            toml::from_str::<toml::Table>(&text).map_err(|e| Error::parse(p, e.to_string()))?
        }
        None => toml::Table::new(),
    };
    for item in &cli.set {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
        set_path(&mut table, key.trim(), parse_value(raw.trim()))?;
    }
    for (key, value) in flags {
        set_path(&mut table, key, value.clone())?;
    }
    toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
}

fn int(v: impl TryInto<i64>) -> toml::Value {
    toml::Value::Integer(v.try_into().unwrap_or(i64::MAX))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// Header embedded in every JSON artifact.
#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    format_version: u32,
    fingerprint: &'a str,
    #[serde(flatten)]
    body: T,
}

fn write_json<T: Serialize>(path: &Path, fingerprint: &str, body: T) -> Result<()> {
    let doc = Stamped { format_version: FORMAT_VERSION, fingerprint, body };
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn load_vocab(explicit: Option<&PathBuf>, ckpt: &Path) -> Result<Vocab> {
    Vocab::read(explicit.cloned().unwrap_or_else(|| sibling(ckpt, ".vocab")))
}

// ---- commands ----

#[derive(Serialize)]
struct SynthMeta<'a> {
    options: SynthOptions,
    dropped_records: usize,
    stats: &'a CorpusStats,
}

fn cmd_synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let mut flags = Vec::new();
    if let Some(s) = a.seed {
        flags.push(("synth.seed", int(s)));
    }
    if let Some(n) = a.captions_per_image {
        flags.push(("synth.captions_per_image", int(n)));
    }
    let cfg = load_config(cli, &flags)?;
    let fp = cfg.fingerprint();
    let mode = if a.permissive { ValidationMode::Permissive } else { ValidationMode::Strict };
    let report = load_manifest_dir(&a.manifests, mode)?;
    for issue in &report.issues {
        warn(format!("dropped {issue}"));
    }
    if report.accepted.is_empty() {
        return Err(Error::InvalidInput(format!("no valid records in {}", a.manifests.display())));
    }
    let stats = synthesize_corpus_to_file(&report.accepted, cfg.synth, &RuleVerifier, &a.out)?;
    let stats_path = a.stats.clone().unwrap_or_else(|| sibling(&a.out, ".stats.json"));
    let meta = SynthMeta { options: cfg.synth, dropped_records: report.issues.len(), stats: &stats };
    write_json(&stats_path, &fp, meta)?;
    println!(
        "synth: {} images, {} captions -> {} (stats {})",
        stats.total_images,
        stats.total_captions,
        a.out.display(),
        stats_path.display()
    );
    Ok(())
}

fn cmd_synthetic(cli: &Cli, a: &SyntheticArgs) -> Result<()> {
    let mut flags = Vec::new();
    if let Some(s) = a.seed {
        flags.push(("synthetic.seed", int(s)));
    }
    if let Some(s) = a.mixing_seed {
        flags.push(("synthetic.mixing_seed", int(s)));
    }
    if let Some(s) = a.shift {
        flags.push(("synthetic.shift", toml::Value::Float(s)));
    }
    if let Some(n) = a.train_pairs {
        flags.push(("synthetic.train_pairs", int(n)));
    }
    if let Some(n) = a.test_pairs {
        flags.push(("synthetic.test_pairs", int(n)));
    }
    let cfg = load_config(cli, &flags)?;
    let bench = generate(&cfg.synthetic)?;
    let files = bench.write_to(&a.out)?;
    write_json(&a.out.join("meta.json"), &cfg.fingerprint(), BTreeMap::from([("synthetic", cfg.synthetic)]))?;
    println!(
        "synthetic-corpus: {} train / {} test pairs -> {} (features {}, vocab {}, labels {})",
        bench.train.len(),
        bench.test.len(),
        a.out.display(),
        files.features.display(),
        files.vocab.display(),
        files.test_labels.display()
    );
    Ok(())
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let store = FeatureStore::read(&a.features)?;
    let mut flags = Vec::new();
    if let Some(p) = a.preset {
        let preset = match p {
            PresetArg::Small => Preset::Small,
            PresetArg::Large => Preset::Large,
        };
        let m = preset.model(store.dim());
        flags.push(("train.model.token_dim", int(m.token_dim)));
        flags.push(("train.model.hidden_dim", int(m.hidden_dim)));
        flags.push(("train.model.embed_dim", int(m.embed_dim)));
        flags.push(("train.model.depth", int(m.depth)));
        flags.push(("train.base_lr", toml::Value::Float(preset.base_lr())));
    }
    flags.push(("train.model.image_dim", int(store.dim())));
    if let Some(s) = a.seed {
        flags.push(("train.seed", int(s)));
    }
    if let Some(n) = a.epochs {
        flags.push(("train.epochs", int(n)));
    }
    if let Some(n) = a.batch_size {
        flags.push(("train.batch_size", int(n)));
    }
    if let Some(lr) = a.lr {
        flags.push(("train.base_lr", toml::Value::Float(lr)));
    }
    let cfg = load_config(cli, &flags)?;
    let fp = cfg.fingerprint();

    let pairs = read_pairs(&a.pairs)?;
    let init = a.init.as_ref().map(Checkpoint::load).transpose()?;
    let vocab = match (&a.vocab, &a.init) {
        (Some(v), _) => Vocab::read(v)?,
        (None, Some(i)) => Vocab::read(sibling(i, ".vocab"))?,
        (None, None) => Vocab::build(pairs.iter().map(|p| p.caption_text.as_str())),
    };
    let corpus = TrainCorpus::from_pairs(&pairs, &store, &vocab)?;

    let log_path = a.loss_log.clone().unwrap_or_else(|| sibling(&a.out, ".loss.csv"));
    let mut log = LossLog::append_to(&log_path)?;
    let mut log_error = None;
    let verbose = cli.verbose > 0;
    let outcome = train_stage_with(&corpus, &cfg.train, init.as_ref(), |r| {
        if verbose {
            eprintln!("step {:>6} epoch {:>4} loss {:.6} lr {:.3e} |g| {:.4} tau {:.4}", r.step, r.epoch, r.loss, r.lr, r.grad_norm, r.tau);
        }
        match log.record(r) {
            Ok(()) => ControlFlow::Continue(()),
            Err(e) => {
                log_error = Some(e);
                ControlFlow::Break(())
            }
        }
    })?;
    if let Some(e) = log_error {
        return Err(e);
    }
    let mut ckpt = outcome.checkpoint;
    ckpt.fingerprint = fp;
    ckpt.save(&a.out)?;
    vocab.write(sibling(&a.out, ".vocab"))?;
    let last = outcome.losses.last().map(|r| r.loss).unwrap_or(f64::NAN);
    println!(
        "train: {} checkpoint -> {} ({} steps, final loss {last:.6}, loss log {})",
        ckpt.stage.as_str(),
        a.out.display(),
        outcome.losses.len(),
        log_path.display()
    );
    Ok(())
}

fn finish_eval(report: &EvalReport, out: &Path) -> Result<()> {
    for w in &report.warnings {
        warn(w);
    }
    report.write_json(out)?;
    let summary = sibling(out, ".summary.csv");
    report.summary_row().write_csv(&summary)?;
    let metrics: Vec<String> = report.metrics.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
    println!("eval {}: {} (report {})", report.task.as_str(), metrics.join(" "), out.display());
    Ok(())
}

fn eval_fingerprint(cfg: &RunConfig, ckpt: &Checkpoint) -> String {
    fingerprint(&(cfg.fingerprint(), &ckpt.fingerprint))
}

fn cmd_eval_retrieval(cli: &Cli, a: &RetrievalArgs) -> Result<()> {
    let cfg = load_config(cli, &[])?;
    let ckpt = Checkpoint::load(&a.model.ckpt)?;
    let vocab = load_vocab(a.model.vocab.as_ref(), &a.model.ckpt)?;
    let store = FeatureStore::read(&a.model.features)?;
    let pairs = read_pairs(&a.pairs)?;
    let report = retrieval_eval(&pairs, &store, &vocab, &ckpt, &a.k)?;
    finish_eval(&EvalReport::from_retrieval(report, eval_fingerprint(&cfg, &ckpt)), &a.model.out)
}

/// Feature rows and labels for every record of a classification manifest.
fn labeled_features(manifest: &Path, store: &FeatureStore) -> Result<(crate::embed::DenseMatrix, Vec<String>)> {
    let records = read_classification_manifest(manifest)?;
    let mut labels = Vec::with_capacity(records.len());
    for r in &records {
        match &r.kind {
            AnnotationKind::Classification(c) => labels.push(c.clone()),
            _ => return Err(Error::InvalidInput(format!("{}: not a classification record", r.image_id()))),
        }
    }
    let features = store.gather(records.iter().map(|r| r.meta.feature_ref.as_str()))?;
    Ok((features, labels))
}

fn cmd_eval_zeroshot(cli: &Cli, a: &ZeroshotArgs) -> Result<()> {
    let cfg = load_config(cli, &[])?;
    let ckpt = Checkpoint::load(&a.model.ckpt)?;
    let vocab = load_vocab(a.model.vocab.as_ref(), &a.model.ckpt)?;
    let store = FeatureStore::read(&a.model.features)?;
    let (features, labels) = labeled_features(&a.labels, &store)?;
    let prompts = match &a.prompts {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(format!("reading {}", p.display()), e))?;
            let map: BTreeMap<String, Vec<String>> =
                serde_json::from_str(&text).map_err(|e| Error::parse(p, e.to_string()))?;
            ClassPromptSet::new(map)?
        }
        None => {
            let classes: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
            ClassPromptSet::from_general_templates(&classes.into_iter().collect::<Vec<_>>())?
        }
    };
    let mut report = zero_shot_classify(&features, &labels, &prompts, &vocab, &ckpt)?;
    report.fingerprint = eval_fingerprint(&cfg, &ckpt);
    finish_eval(&report, &a.model.out)
}

fn cmd_eval_probe(cli: &Cli, a: &ProbeArgs) -> Result<()> {
    let flags: Vec<(&str, toml::Value)> = a.seed.map(|s| ("probe.seed", int(s))).into_iter().collect();
    let cfg = load_config(cli, &flags)?;
    let ckpt = Checkpoint::load(&a.model.ckpt)?;
    let store = FeatureStore::read(&a.model.features)?;
    let (features, labels) = labeled_features(&a.labels, &store)?;
    let mut outcome = train_linear_probe(&features, &labels, &ckpt, &cfg.probe)?;
    outcome.report.fingerprint = eval_fingerprint(&cfg, &ckpt);
    if let Some(path) = &a.head_out {
        let mut probe = ckpt.clone();
        probe.stage = StageTag::Probe;
        probe.optimizer = None;
        probe.fingerprint = outcome.report.fingerprint.clone();
        probe.extras = outcome.head.to_tensors()?;
        probe.save(path)?;
        write_json(&sibling(path, ".classes.json"), &probe.fingerprint, BTreeMap::from([("classes", &outcome.head.classes)]))?;
    }
    finish_eval(&outcome.report, &a.model.out)
}

#[derive(Serialize)]
struct GradcheckLine {
    seed: u64,
    parameters: usize,
    max_rel_error: f64,
    log_tau_rel_error: Option<f64>,
    passed: bool,
}

fn cmd_gradcheck(cli: &Cli, a: &GradcheckArgs) -> Result<()> {
    let cfg = load_config(cli, &[])?;
    let mut lines = Vec::new();
    for seed in a.seed..a.seed + a.models {
        let case = GradcheckCase::random(seed)?;
        let r = case.check(a.h)?;
        let passed = r.passes(a.tolerance);
        println!(
            "gradcheck: model seed {seed}: {} parameters, max rel error {:.3e}{}",
            r.checked,
            r.max_rel_error,
            if passed { "" } else { " FAIL" }
        );
        lines.push(GradcheckLine {
            seed,
            parameters: r.checked,
            max_rel_error: r.max_rel_error,
            log_tau_rel_error: r.log_tau_rel_error,
            passed,
        });
    }
    if let Some(out) = &a.out {
        write_json(out, &cfg.fingerprint(), BTreeMap::from([("models", &lines)]))?;
    }
    let failed = lines.iter().filter(|l| !l.passed).count();
    if failed > 0 {
        return Err(Error::Numeric(format!("{failed} of {} models exceed relative error {:e}", lines.len(), a.tolerance)));
    }
    Ok(())
}

fn cmd_export(cli: &Cli, a: &ExportArgs) -> Result<()> {
    let cfg = load_config(cli, &[])?;
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let store = FeatureStore::read(&a.features)?;
    let fp = eval_fingerprint(&cfg, &ckpt);
    let pairs = a.pairs.as_ref().map(read_pairs).transpose()?;
    let keys: Vec<String> = match &pairs {
        Some(p) => {
            let mut seen = BTreeSet::new();
            p.iter().filter(|x| seen.insert(x.feature_ref.clone())).map(|x| x.feature_ref.clone()).collect()
        }
        None => store.keys().to_vec(),
    };
    let z = encode_images(&store.gather(keys.iter().map(String::as_str))?, &ckpt.params)?;
    let mut out = FeatureStore::new(z.cols());
    for (i, k) in keys.iter().enumerate() {
        out.insert(k.clone(), z.row(i))?;
    }
    out.write(&a.out)?;
    let mut text_count = 0;
    if let Some(pairs) = &pairs {
        let vocab = load_vocab(a.vocab.as_ref(), &a.ckpt)?;
        if vocab.content_hash() != ckpt.vocab_hash {
            return Err(Error::Shape("vocabulary does not match the checkpoint".into()));
        }
        let tokens: Vec<Vec<usize>> = pairs.iter().map(|p| tokenize(&p.caption_text, &vocab)).collect();
        if let Some(i) = tokens.iter().position(Vec::is_empty) {
            return Err(Error::InvalidInput(format!("{}: caption has no words", pairs[i].image_id)));
        }
        let zt = encode_texts(&tokens, &ckpt.params)?;
        let mut texts = FeatureStore::new(zt.cols());
        let mut per_image: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, p) in pairs.iter().enumerate() {
            let n = per_image.entry(p.image_id.as_str()).or_default();
            texts.insert(format!("{}#{n}", p.image_id), zt.row(i))?;
            *n += 1;
        }
        texts.write(sibling(&a.out, ".text"))?;
        text_count = pairs.len();
    }
    #[derive(Serialize)]
    struct ExportMeta {
        images: usize,
        captions: usize,
        dim: usize,
    }
    write_json(&sibling(&a.out, ".meta.json"), &fp, ExportMeta { images: keys.len(), captions: text_count, dim: z.cols() })?;
    println!("export-embeddings: {} image and {text_count} caption embeddings -> {}", keys.len(), a.out.display());
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let mut rows = Vec::new();
    for path in &a.inputs {
        for row in SummaryRow::read_csv(path)? {
            if row.format_version != FORMAT_VERSION {
                return Err(Error::Format(format!(
                    "{}: format version {} cannot be aggregated with version {FORMAT_VERSION}",
                    path.display(),
                    row.format_version
                )));
            }
            rows.push(row);
        }
    }
    let parsed = rows.iter().map(SummaryRow::parsed_metrics).collect::<Result<Vec<_>>>()?;
    let columns: BTreeSet<&str> = parsed.iter().flat_map(|m| m.keys().map(String::as_str)).collect();
    let mut header = vec!["task", "format_version", "fingerprint", "samples"];
    header.extend(columns.iter().copied());

    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| Error::io(format!("creating {}", p.display()), e))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (row, metrics) in rows.iter().zip(&parsed) {
        let mut record = vec![row.task.clone(), row.format_version.to_string(), row.fingerprint.clone(), row.samples.to_string()];
        record.extend(columns.iter().map(|c| metrics.get(*c).map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("writing report", e))
}
