//! Zero-shot classification from class prompts, with default and custom prompt sets.

use std::collections::BTreeMap;

use sarclip::eval::{zero_shot_classify, ClassPromptSet};
use sarclip::synthetic::{generate, SyntheticConfig, CLASSES};
use sarclip::train::{train_stage, TauMode, TrainConfig};

fn main() -> sarclip::Result<()> {
    let bench = generate(&SyntheticConfig::default())?;
    let mut config = TrainConfig { epochs: 60, batch_size: 64, base_lr: 2e-3, warmup_steps: 20, ..TrainConfig::default() };
    config.model.image_dim = 32;
    config.tau = TauMode::Fixed(0.07);
    let ckpt = train_stage(&bench.train_corpus()?, &config, None)?.checkpoint;

    let features = bench.test_features()?;
    let labels = bench.test_labels();
    let general = ClassPromptSet::from_general_templates(&CLASSES)?;
    println!("prompts for `ship`: {:?}", general.prompts("ship").unwrap_or_default());
    let report = zero_shot_classify(&features, &labels, &general, &bench.vocab, &ckpt)?;
    println!("general templates: accuracy {:.3}", report.metric("accuracy").unwrap_or(0.0));
    for c in &report.per_class {
        println!("  {:<9} {:.3} ({} images)", c.class, c.accuracy, c.support);
    }

    let single: BTreeMap<String, Vec<String>> =
        CLASSES.iter().map(|c| (c.to_string(), vec![format!("A SAR image of a {c}.")])).collect();
    let report = zero_shot_classify(&features, &labels, &ClassPromptSet::new(single)?, &bench.vocab, &ckpt)?;
    println!("single prompt: accuracy {:.3}", report.metric("accuracy").unwrap_or(0.0));
    Ok(())
}
