use std::fs::{File, OpenOptions};
use std::ops::ControlFlow;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::checkpoint::{Checkpoint, StageTag};
use super::config::{TauMode, TrainConfig};
use super::loss::infonce_loss_and_grads;
use super::schedule::lr_at_step;
use crate::caption::PairRecord;
use crate::embed::{tokenize, DenseMatrix, EncoderParams, FeatureStore, Vocab};
use crate::fingerprint::sub_seed;
use crate::{Error, Result};

/// Matched (feature, token sequence) pairs ready for training.
#[derive(Debug, Clone)]
pub struct TrainCorpus {
    features: DenseMatrix,
    tokens: Vec<Vec<usize>>,
    vocab_size: usize,
    vocab_hash: String,
}

impl TrainCorpus {
    pub fn new(features: DenseMatrix, tokens: Vec<Vec<usize>>, vocab: &Vocab) -> Result<Self> {
        if features.rows() != tokens.len() {
            return Err(Error::Shape(format!("{} feature rows vs {} captions", features.rows(), tokens.len())));
        }
        if let Some(i) = tokens.iter().position(Vec::is_empty) {
            return Err(Error::InvalidInput(format!("pair {i}: caption has no tokens")));
        }
        if let Some(&t) = tokens.iter().flatten().find(|&&t| t >= vocab.len()) {
            return Err(Error::Shape(format!("token index {t} outside vocabulary of {}", vocab.len())));
        }
        Ok(Self { features, tokens, vocab_size: vocab.len(), vocab_hash: vocab.content_hash() })
    }

    /// Looks up each pair's feature by `feature_ref` and tokenizes its caption.
    pub fn from_pairs(pairs: &[PairRecord], store: &FeatureStore, vocab: &Vocab) -> Result<Self> {
        let features = store.gather(pairs.iter().map(|p| p.feature_ref.as_str()))?;
        let mut tokens = Vec::with_capacity(pairs.len());
        for p in pairs {
            let t = tokenize(&p.caption_text, vocab);
            if t.is_empty() {
                return Err(Error::InvalidInput(format!("{}: caption `{}` has no words", p.image_id, p.caption_text)));
            }
            tokens.push(t);
        }
        Self::new(features, tokens, vocab)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn tokens(&self) -> &[Vec<usize>] {
        &self.tokens
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn vocab_hash(&self) -> &str {
        &self.vocab_hash
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    /// Norm of the trainable gradient before clipping.
    pub grad_norm: f64,
    pub tau: f64,
}

/// Append-only CSV log, one row per step.
pub struct LossLog {
    writer: csv::Writer<File>,
}

impl LossLog {
    /// Opens `path` for appending; the header is written only to an empty file.
    pub fn append_to(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        let empty = file.metadata().map_err(|e| Error::io(format!("reading {}", path.display()), e))?.len() == 0;
        let writer = csv::WriterBuilder::new().has_headers(empty).from_writer(file);
        Ok(Self { writer })
    }

    pub fn record(&mut self, report: &LossReport) -> Result<()> {
        self.writer.serialize(report).map_err(|e| Error::Format(e.to_string()))?;
        self.writer.flush().map_err(|e| Error::io("flushing loss log", e))
    }
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub checkpoint: Checkpoint,
    pub losses: Vec<LossReport>,
}

impl StageOutcome {
    /// Mean loss per epoch, in epoch order.
    pub fn epoch_mean_losses(&self) -> Vec<f64> {
        let mut sums: Vec<(f64, usize)> = Vec::new();
        for r in &self.losses {
            if sums.len() <= r.epoch {
                sums.resize(r.epoch + 1, (0.0, 0));
            }
            sums[r.epoch].0 += r.loss;
            sums[r.epoch].1 += 1;
        }
        sums.into_iter().filter(|s| s.1 > 0).map(|(s, n)| s / n as f64).collect()
    }
}

/// Loss and parameter gradients for one batch. Gradients of frozen tensors
/// are exactly zero. The temperature gradient is with respect to `log tau`.
pub fn batch_loss_and_grads(
    params: &EncoderParams,
    features: &DenseMatrix,
    tokens: &[Vec<usize>],
    config: &TrainConfig,
) -> Result<(f64, EncoderParams)> {
    let image = params.image_forward(features)?;
    let text = params.text_forward(tokens)?;
    let tau = params.tau();
    let g = infonce_loss_and_grads(image.embeddings(), text.embeddings(), tau)?;
    let mut grads = params.zeros_like();
    params.image_backward(&image, &g.d_image, &mut grads)?;
    params.text_backward(&text, &g.d_text, &mut grads)?;
    grads.log_tau = g.d_tau * tau;
    let trainable: Vec<bool> = params.tensors().iter().map(|t| config.is_trainable(t.group, params)).collect();
    for (tensor, keep) in grads.tensors_mut().into_iter().zip(trainable) {
        if !keep {
            tensor.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok((g.loss, grads))
}

fn grad_norm(grads: &EncoderParams) -> f64 {
    grads.tensors().iter().flat_map(|t| t.data.iter()).map(|v| v * v).sum::<f64>().sqrt()
}

fn initial_params(corpus: &TrainCorpus, config: &TrainConfig, init: Option<&Checkpoint>) -> Result<EncoderParams> {
    let fresh = EncoderParams::init(&config.model, corpus.vocab_size(), config.tau.initial(), sub_seed(config.seed, "init"))?;
    let Some(ckpt) = init else {
        return Ok(fresh);
    };
    if ckpt.vocab_hash != corpus.vocab_hash() {
        return Err(Error::Shape(format!(
            "init checkpoint vocabulary {} differs from corpus vocabulary {}",
            ckpt.vocab_hash,
            corpus.vocab_hash()
        )));
    }
    fresh.check_same_layout(&ckpt.params)?;
    let mut params = ckpt.params.clone();
    if let TauMode::Fixed(t) = config.tau {
        params.log_tau = t.ln();
    }
    Ok(params)
}

/// [`train_stage_with`] without a step callback.
pub fn train_stage(corpus: &TrainCorpus, config: &TrainConfig, init: Option<&Checkpoint>) -> Result<StageOutcome> {
    train_stage_with(corpus, config, init, |_| ControlFlow::Continue(()))
}

/// Trains for `config.epochs` epochs. Each epoch shuffles with an RNG derived
/// from the seed and epoch number, and drops the last partial batch. The
/// checkpoint is tagged stage 1 without `init` and stage 2 with it; optimizer
/// moments always start from zero. `on_step` may stop training early.
pub fn train_stage_with(
    corpus: &TrainCorpus,
    config: &TrainConfig,
    init: Option<&Checkpoint>,
    mut on_step: impl FnMut(&LossReport) -> ControlFlow<()>,
) -> Result<StageOutcome> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::InvalidInput("training corpus is empty".into()));
    }
    if corpus.len() < config.batch_size {
        return Err(Error::Config(format!(
            "corpus has {} pairs, fewer than one batch of {}",
            corpus.len(),
            config.batch_size
        )));
    }
    if corpus.features().cols() != config.model.image_dim {
        return Err(Error::Shape(format!(
            "corpus features have {} dims, model.image_dim is {}",
            corpus.features().cols(),
            config.model.image_dim
        )));
    }
    let total = config.total_steps(corpus.len());
    if config.warmup_steps >= total {
        return Err(Error::Config(format!("warmup_steps {} must be below total steps {total}", config.warmup_steps)));
    }

    let mut params = initial_params(corpus, config, init)?;
    let mut state = AdamState::new(&params);
    let mut losses = Vec::with_capacity(total);
    let batches = corpus.len() / config.batch_size;
    let mut step = 0;
    'epochs: for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(sub_seed(config.seed, &format!("epoch-{epoch}"))));
        for b in 0..batches {
            let rows = &order[b * config.batch_size..(b + 1) * config.batch_size];
            let x = corpus.features().select_rows(rows);
            let t: Vec<Vec<usize>> = rows.iter().map(|&r| corpus.tokens()[r].clone()).collect();
            let lr = lr_at_step(step, config.base_lr, config.warmup_steps, total);
            let tau = params.tau();
            let (loss, mut grads) = batch_loss_and_grads(&params, &x, &t, config)?;
            let norm = grad_norm(&grads);
            if !loss.is_finite() || !norm.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss {loss} (grad norm {norm}) at step {step}, epoch {epoch}, lr {lr:e}, tau {tau}"
                )));
            }
            if let Some(clip) = config.grad_clip {
                if norm > clip {
                    let scale = clip / norm;
                    for tensor in grads.tensors_mut() {
                        tensor.data.iter_mut().for_each(|v| *v *= scale);
                    }
                }
            }
            adam_step(&mut params, &grads, &mut state, lr, config)?;
            let report = LossReport { step, epoch, loss, lr, grad_norm: norm, tau };
            losses.push(report);
            step += 1;
            if on_step(&report).is_break() {
                break 'epochs;
            }
        }
    }
    if !params.all_finite() {
        return Err(Error::Numeric(format!("parameters became non-finite after {step} steps")));
    }
    let stage = if init.is_some() { StageTag::Stage2 } else { StageTag::Stage1 };
    let mut checkpoint = Checkpoint::new(stage, params, corpus.vocab_hash().to_string(), config.clone());
    checkpoint.optimizer = Some(state);
    Ok(StageOutcome { checkpoint, losses })
}
