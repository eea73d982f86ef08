//! Stage-1 contrastive training on the synthetic 8-class benchmark.

use sarclip::eval::{retrieval_eval_encoded, DEFAULT_KS};
use sarclip::synthetic::{generate, SyntheticConfig};
use sarclip::train::{train_stage, TauMode, TrainConfig};

fn main() -> sarclip::Result<()> {
    let bench = generate(&SyntheticConfig::default())?;
    let corpus = bench.train_corpus()?;
    let mut config = TrainConfig::default();
    config.model.image_dim = bench.config.image_dim;
    config.batch_size = 64;
    config.base_lr = 2e-3;
    config.epochs = 100;
    config.warmup_steps = 20;
    config.tau = TauMode::Fixed(0.07);

    let start = std::time::Instant::now();
    let outcome = train_stage(&corpus, &config, None)?;
    for (epoch, loss) in outcome.epoch_mean_losses().iter().enumerate().step_by(10) {
        println!("epoch {epoch:>3}  loss {loss:.4}");
    }
    println!("trained {} steps in {:.2}s", outcome.losses.len(), start.elapsed().as_secs_f64());

    let test = bench.test_corpus()?;
    let report = retrieval_eval_encoded(test.features(), test.tokens(), &outcome.checkpoint.params, &DEFAULT_KS)?;
    for k in DEFAULT_KS {
        println!(
            "R@{k:<2} image->text {:.3}  text->image {:.3}",
            report.image_to_text.at(k).unwrap_or(0.0),
            report.text_to_image.at(k).unwrap_or(0.0)
        );
    }
    println!("mean recall {:.3}", report.mean_recall);
    Ok(())
}
