use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::report::{accuracy, per_class_accuracy, EvalReport, EvalTask};
use crate::embed::{encode_images, DenseMatrix};
use crate::train::{adam_update, AdamConfig, Checkpoint};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub lr: f64,
    pub max_epochs: usize,
    /// Evaluations without a new best validation loss before stopping.
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { lr: 0.05, max_epochs: 2000, patience: 20, val_fraction: 0.2, seed: 0, adam: AdamConfig::default() }
    }
}

/// Linear classifier `logits = z W + b` over image embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeHead {
    pub classes: Vec<String>,
    /// `d x C`.
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl ProbeHead {
    fn zeros(dim: usize, classes: Vec<String>) -> Self {
        let c = classes.len();
        Self { classes, weight: DenseMatrix::zeros(dim, c), bias: vec![0.0; c] }
    }

    pub fn logits(&self, z: &DenseMatrix) -> Result<DenseMatrix> {
        let mut out = z.matmul(&self.weight)?;
        for r in 0..out.rows() {
            for (v, b) in out.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(out)
    }

    /// Predicted class index per row; ties go to the lower index.
    pub fn predict(&self, z: &DenseMatrix) -> Result<Vec<usize>> {
        let logits = self.logits(z)?;
        Ok((0..logits.rows())
            .map(|r| {
                let row = logits.row(r);
                (0..row.len()).fold(0, |best, j| if row[j] > row[best] { j } else { best })
            })
            .collect())
    }

    /// Tensors for storing the head inside a probe checkpoint.
    pub fn to_tensors(&self) -> Result<Vec<(String, DenseMatrix)>> {
        Ok(vec![
            ("probe.weight".into(), self.weight.clone()),
            ("probe.bias".into(), DenseMatrix::from_vec(1, self.bias.len(), self.bias.clone())?),
        ])
    }
}

#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub head: ProbeHead,
    pub report: EvalReport,
    pub epochs_run: usize,
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
fn cross_entropy(logits: &DenseMatrix, targets: &[usize]) -> (f64, DenseMatrix) {
    let n = logits.rows() as f64;
    let mut grad = DenseMatrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for (r, &y) in targets.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss -= row[y] - lse;
        for (g, v) in grad.row_mut(r).iter_mut().zip(row) {
            *g = (v - lse).exp() / n;
        }
        let g = grad.get(r, y);
        grad.set(r, y, g - 1.0 / n);
    }
    (loss / n, grad)
}

/// Trains a probe head on precomputed embeddings with a seeded train /
/// validation split. Full-batch Adam; stops after `patience` epochs without
/// a lower validation loss and keeps the best head.
pub fn train_probe_on_embeddings(
    embeddings: &DenseMatrix,
    labels: &[String],
    config: &ProbeConfig,
    fingerprint: &str,
) -> Result<ProbeOutcome> {
    if embeddings.rows() != labels.len() {
        return Err(Error::Shape(format!("{} embeddings vs {} labels", embeddings.rows(), labels.len())));
    }
    let classes: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(Error::InvalidInput(format!("a probe needs at least two classes, got {}", classes.len())));
    }
    if !(config.val_fraction > 0.0 && config.val_fraction < 1.0) {
        return Err(Error::Config(format!("val_fraction must be in (0, 1), got {}", config.val_fraction)));
    }
    let n = labels.len();
    let n_val = ((n as f64 * config.val_fraction).round() as usize).clamp(1, n.saturating_sub(1));
    if n < 2 {
        return Err(Error::InvalidInput("a probe needs at least two labeled images".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let (val_idx, train_idx) = order.split_at(n_val);
    let target = |i: &usize| classes.binary_search(&labels[*i]).expect("label in class list");
    let (z_train, y_train) = (embeddings.select_rows(train_idx), train_idx.iter().map(target).collect::<Vec<_>>());
    let (z_val, y_val) = (embeddings.select_rows(val_idx), val_idx.iter().map(target).collect::<Vec<_>>());

    let mut head = ProbeHead::zeros(embeddings.cols(), classes.clone());
    let (mut mw, mut vw) = (vec![0.0; head.weight.values().len()], vec![0.0; head.weight.values().len()]);
    let (mut mb, mut vb) = (vec![0.0; head.bias.len()], vec![0.0; head.bias.len()]);
    let mut best = (f64::INFINITY, head.clone());
    let mut since_best = 0;
    let mut epochs_run = 0;
    let a = config.adam;
    for epoch in 1..=config.max_epochs {
        let (_, g) = cross_entropy(&head.logits(&z_train)?, &y_train);
        let dw = z_train.transpose_matmul(&g)?;
        let db = g.column_sums();
        let t = epoch as u64;
        adam_update(head.weight.values_mut(), dw.values(), &mut mw, &mut vw, t, config.lr, a.beta1, a.beta2, a.eps);
        adam_update(&mut head.bias, &db, &mut mb, &mut vb, t, config.lr, a.beta1, a.beta2, a.eps);
        epochs_run = epoch;

        let (val_loss, _) = cross_entropy(&head.logits(&z_val)?, &y_val);
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("probe validation loss became {val_loss} at epoch {epoch}")));
        }
        if val_loss < best.0 {
            best = (val_loss, head.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    let head = best.1;

    let name = |i: usize| classes[i].clone();
    let train_pred: Vec<String> = head.predict(&z_train)?.into_iter().map(name).collect();
    let val_pred: Vec<String> = head.predict(&z_val)?.into_iter().map(name).collect();
    let train_truth: Vec<String> = y_train.iter().map(|&i| name(i)).collect();
    let val_truth: Vec<String> = y_val.iter().map(|&i| name(i)).collect();

    let mut report = EvalReport::new(EvalTask::Probe, fingerprint, n);
    report.metrics.insert("train_accuracy".into(), accuracy(&train_pred, &train_truth)?);
    report.metrics.insert("val_accuracy".into(), accuracy(&val_pred, &val_truth)?);
    report.metrics.insert("val_loss".into(), best.0);
    report.metrics.insert("epochs".into(), epochs_run as f64);
    report.per_class = per_class_accuracy(&val_pred, &val_truth);
    Ok(ProbeOutcome { head, report, epochs_run })
}

/// Embeds `features` once with the frozen image tower and trains a probe
/// head on the result. Fails if the encoder parameters change.
pub fn train_linear_probe(
    features: &DenseMatrix,
    labels: &[String],
    ckpt: &Checkpoint,
    config: &ProbeConfig,
) -> Result<ProbeOutcome> {
    let before = ckpt.params.content_hash();
    let z = encode_images(features, &ckpt.params)?;
    let outcome = train_probe_on_embeddings(&z, labels, config, &ckpt.fingerprint)?;
    let after = ckpt.params.content_hash();
    if before != after {
        return Err(Error::Contract(format!("encoder parameters changed during probe training ({before} -> {after})")));
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn clustered(n: usize, classes: usize, seed: u64) -> (DenseMatrix, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = i % classes;
            rows.push((0..classes).map(|d| if d == c { 1.0 } else { 0.0 } + rng.gen_range(-0.2..0.2)).collect::<Vec<f64>>());
            labels.push(format!("c{c}"));
        }
        (DenseMatrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn separable_embeddings_are_learned() {
        let (z, labels) = clustered(200, 4, 1);
        let out = train_probe_on_embeddings(&z, &labels, &ProbeConfig::default(), "fp").unwrap();
        assert!(out.report.metric("val_accuracy").unwrap() >= 0.95, "{:?}", out.report);
        assert_eq!(out.head.weight.shape(), (4, 4));
        assert_eq!(out.head.classes, vec!["c0", "c1", "c2", "c3"]);
    }

    #[test]
    fn single_class_is_rejected() {
        let (z, _) = clustered(10, 2, 2);
        let labels = vec!["only".to_string(); 10];
        assert!(matches!(
            train_probe_on_embeddings(&z, &labels, &ProbeConfig::default(), "fp").unwrap_err(),
            Error::InvalidInput(_)
        ));
    }

    #[test]
    fn cross_entropy_gradient_matches_differences() {
        let logits = DenseMatrix::from_rows(&[[0.2, -0.5, 1.0], [0.0, 0.3, -0.1]]).unwrap();
        let targets = [2, 0];
        let (_, g) = cross_entropy(&logits, &targets);
        let h = 1e-6;
        for i in 0..6 {
            let mut p = logits.clone();
            p.values_mut()[i] += h;
            let mut m = logits.clone();
            m.values_mut()[i] -= h;
            let numeric = (cross_entropy(&p, &targets).0 - cross_entropy(&m, &targets).0) / (2.0 * h);
            assert!((numeric - g.values()[i]).abs() < 1e-8);
        }
    }
}
