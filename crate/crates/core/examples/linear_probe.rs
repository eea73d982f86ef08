//! Linear probe on frozen image embeddings, with a shuffled-label null model.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sarclip::eval::{train_linear_probe, ProbeConfig};
use sarclip::synthetic::{generate, SyntheticConfig};
use sarclip::train::{train_stage, TauMode, TrainConfig};

fn main() -> sarclip::Result<()> {
    let bench = generate(&SyntheticConfig::default())?;
    let mut config = TrainConfig { epochs: 60, batch_size: 64, base_lr: 2e-3, warmup_steps: 20, ..TrainConfig::default() };
    config.model.image_dim = 32;
    config.tau = TauMode::Fixed(0.07);
    let ckpt = train_stage(&bench.train_corpus()?, &config, None)?.checkpoint;

    let ids = bench.train.iter().chain(&bench.test).map(|p| p.feature_ref.as_str());
    let features = bench.features.gather(ids)?;
    let mut labels: Vec<String> = bench.train_attributes.iter().map(|a| a.class_name().to_string()).collect();
    labels.extend(bench.test_labels());

    let hash = ckpt.params.content_hash();
    let probe = train_linear_probe(&features, &labels, &ckpt, &ProbeConfig::default())?;
    println!("encoder hash {hash} unchanged: {}", hash == ckpt.params.content_hash());
    println!(
        "probe: {} epochs, train {:.3}, val {:.3}",
        probe.epochs_run,
        probe.report.metric("train_accuracy").unwrap_or(0.0),
        probe.report.metric("val_accuracy").unwrap_or(0.0)
    );

    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let null = train_linear_probe(&features, &labels, &ckpt, &ProbeConfig::default())?;
    println!("shuffled labels: val {:.3} (chance 0.125)", null.report.metric("val_accuracy").unwrap_or(0.0));
    Ok(())
}
