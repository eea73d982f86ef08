//! Stage 1 on a shifted source domain, stage 2 on the target domain, compared
//! with training the target from scratch.

use std::ops::ControlFlow;

use sarclip::synthetic::{generate, SyntheticConfig};
use sarclip::train::{train_stage, train_stage_with, Checkpoint, TauMode, TrainConfig, TrainCorpus};

const THRESHOLD: f64 = 1.0;

fn config(seed: u64) -> TrainConfig {
    let mut c = TrainConfig::default();
    c.model.image_dim = 32;
    c.batch_size = 64;
    c.base_lr = 2e-3;
    c.epochs = 50;
    c.warmup_steps = 20;
    c.seed = seed;
    c.tau = TauMode::Fixed(0.07);
    c
}

fn steps_to_threshold(corpus: &TrainCorpus, seed: u64, init: Option<&Checkpoint>) -> sarclip::Result<Option<usize>> {
    let mut hit = None;
    train_stage_with(corpus, &config(seed), init, |r| {
        if r.loss < THRESHOLD {
            hit = Some(r.step);
            return ControlFlow::Break(());
        }
        ControlFlow::Continue(())
    })?;
    Ok(hit)
}

fn main() -> sarclip::Result<()> {
    for seed in 0..3 {
        let source = generate(&SyntheticConfig { seed: 100 + seed, shift: 0.3, ..SyntheticConfig::default() })?;
        let target = generate(&SyntheticConfig { seed, ..SyntheticConfig::default() })?;
        let stage1 = train_stage(&source.train_corpus()?, &config(seed), None)?.checkpoint;
        let corpus = target.train_corpus()?;
        let transfer = steps_to_threshold(&corpus, seed, Some(&stage1))?;
        let scratch = steps_to_threshold(&corpus, seed, None)?;
        println!("seed {seed}: steps to loss < {THRESHOLD}: from stage 1 {transfer:?}, from scratch {scratch:?}");
    }
    Ok(())
}
