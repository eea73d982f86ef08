//! Retrieval report through the file-based path: corpus files on disk, a saved
//! checkpoint, and the JSON report plus summary row.

use sarclip::caption::read_pairs;
use sarclip::embed::{FeatureStore, Vocab};
use sarclip::eval::{retrieval_eval, EvalReport, DEFAULT_KS};
use sarclip::synthetic::{generate, SyntheticConfig};
use sarclip::train::{train_stage, Checkpoint, TauMode, TrainConfig};

fn main() -> sarclip::Result<()> {
    let dir = std::env::temp_dir().join("sarclip-retrieval-example");
    let bench = generate(&SyntheticConfig::default())?;
    let files = bench.write_to(&dir)?;

    let mut config = TrainConfig { epochs: 60, batch_size: 64, base_lr: 2e-3, warmup_steps: 20, ..TrainConfig::default() };
    config.model.image_dim = 32;
    config.tau = TauMode::Fixed(0.07);
    let ckpt_path = dir.join("model.ckpt");
    train_stage(&bench.train_corpus()?, &config, None)?.checkpoint.save(&ckpt_path)?;

    let ckpt = Checkpoint::load(&ckpt_path)?;
    let pairs = read_pairs(&files.test_pairs)?;
    let store = FeatureStore::read(&files.features)?;
    let vocab = Vocab::read(&files.vocab)?;
    let retrieval = retrieval_eval(&pairs, &store, &vocab, &ckpt, &DEFAULT_KS)?;
    let report = EvalReport::from_retrieval(retrieval, ckpt.fingerprint.clone());
    for (name, value) in &report.metrics {
        println!("{name:<12} {value:.3}");
    }
    report.write_json(dir.join("retrieval.json"))?;
    println!("summary: {}", report.summary_row().metrics);
    Ok(())
}
