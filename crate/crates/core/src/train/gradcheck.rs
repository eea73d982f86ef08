//! Central finite differences against the analytic InfoNCE gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{TauMode, TrainConfig};
use super::stage::batch_loss_and_grads;
use crate::embed::{DenseMatrix, EncoderParams, ModelConfig};
use crate::train::infonce_loss;
use crate::{Error, Result};

/// Relative error is `|a - n| / max(|a|, |n|, GRADCHECK_DENOM_FLOOR)`, so
/// entries whose true gradient is near zero are judged on absolute error.
pub const GRADCHECK_DENOM_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Tensor name and element index of the worst entry.
    pub worst: Option<(String, usize)>,
    /// Trainable entries compared.
    pub checked: usize,
    /// Frozen entries whose analytic gradient was confirmed to be exactly zero.
    pub frozen_checked: usize,
    /// Frozen entries with a nonzero analytic gradient (must be 0).
    pub frozen_nonzero: usize,
    /// Relative error of the log-temperature gradient when it is trainable.
    pub log_tau_rel_error: Option<f64>,
}

impl GradcheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance && self.frozen_nonzero == 0 && self.max_rel_error.is_finite()
    }
}

/// A random small model with a random batch, for gradient checking.
#[derive(Debug, Clone)]
pub struct GradcheckCase {
    pub params: EncoderParams,
    pub features: DenseMatrix,
    pub tokens: Vec<Vec<usize>>,
    pub config: TrainConfig,
}

impl GradcheckCase {
    /// Batch of 2 to 8 pairs, all widths in 2..=16, depth 1 to 3, learnable
    /// temperature initialized in [0.2, 1].
    pub fn random(seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = ModelConfig {
            image_dim: rng.gen_range(2..=16),
            token_dim: rng.gen_range(2..=16),
            hidden_dim: rng.gen_range(2..=16),
            embed_dim: rng.gen_range(2..=16),
            depth: rng.gen_range(1..=3),
        };
        let vocab = rng.gen_range(4..=20);
        let n = rng.gen_range(2..=8);
        let tau = rng.gen_range(0.2..=1.0);
        let config = TrainConfig { model, tau: TauMode::Learnable(tau), ..TrainConfig::default() };
        let params = EncoderParams::init(&model, vocab, tau, rng.gen())?;
        let values = (0..n * model.image_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let features = DenseMatrix::from_vec(n, model.image_dim, values)?;
        let tokens = (0..n).map(|_| (0..rng.gen_range(1..=5)).map(|_| rng.gen_range(0..vocab)).collect()).collect();
        Ok(Self { params, features, tokens, config })
    }

    pub fn check(&self, h: f64) -> Result<GradcheckReport> {
        finite_diff_gradcheck(&self.params, &self.features, &self.tokens, &self.config, h)
    }
}

fn loss_at(params: &EncoderParams, features: &DenseMatrix, tokens: &[Vec<usize>]) -> Result<f64> {
    let zv = params.image_embeddings(features)?;
    let zt = params.text_embeddings(tokens)?;
    infonce_loss(&zv, &zt, params.tau())
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADCHECK_DENOM_FLOOR)
}

/// Compares every trainable parameter's analytic gradient with
/// `(f(theta + h) - f(theta - h)) / 2h`. Frozen tensors are not perturbed;
/// their analytic gradient must be exactly zero.
pub fn finite_diff_gradcheck(
    params: &EncoderParams,
    features: &DenseMatrix,
    tokens: &[Vec<usize>],
    config: &TrainConfig,
    h: f64,
) -> Result<GradcheckReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("step h must be positive, got {h}")));
    }
    let (_, grads) = batch_loss_and_grads(params, features, tokens, config)?;
    let trainable: Vec<bool> = params.tensors().iter().map(|t| config.is_trainable(t.group, params)).collect();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.data.to_vec()).collect();
    let names: Vec<String> = params.tensors().into_iter().map(|t| t.name).collect();

    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: None,
        checked: 0,
        frozen_checked: 0,
        frozen_nonzero: 0,
        log_tau_rel_error: None,
    };
    let mut probe = params.clone();
    for (ti, name) in names.iter().enumerate() {
        if !trainable[ti] {
            report.frozen_checked += analytic[ti].len();
            report.frozen_nonzero += analytic[ti].iter().filter(|&&g| g != 0.0).count();
            continue;
        }
        for j in 0..analytic[ti].len() {
            let original = probe.tensors()[ti].data[j];
            probe.tensors_mut()[ti].data[j] = original + h;
            let plus = loss_at(&probe, features, tokens)?;
            probe.tensors_mut()[ti].data[j] = original - h;
            let minus = loss_at(&probe, features, tokens)?;
            probe.tensors_mut()[ti].data[j] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[ti][j];
            let rel = rel_error(a, numeric);
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = rel;
                report.worst = Some((name.clone(), j));
            }
            if name == "log_tau" {
                report.log_tau_rel_error = Some(rel);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::ModelConfig;
    use crate::train::{FreezeSpec, TauMode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(tau: TauMode, freeze: FreezeSpec) -> (EncoderParams, DenseMatrix, Vec<Vec<usize>>, TrainConfig) {
        let model = ModelConfig { image_dim: 8, token_dim: 8, hidden_dim: 8, embed_dim: 8, depth: 2 };
        let config = TrainConfig { model, tau, freeze, ..TrainConfig::default() };
        let params = EncoderParams::init(&model, 12, tau.initial(), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let features = DenseMatrix::from_vec(4, 8, (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let tokens = (0..4).map(|_| (0..3).map(|_| rng.gen_range(0..12)).collect()).collect();
        (params, features, tokens, config)
    }

    #[test]
    fn small_model_matches_finite_differences() {
        let (p, x, t, cfg) = setup(TauMode::Fixed(0.5), FreezeSpec::default());
        let r = finite_diff_gradcheck(&p, &x, &t, &cfg, 1e-5).unwrap();
        assert!(r.passes(1e-5), "{r:?}");
        assert_eq!(r.log_tau_rel_error, None);
        assert_eq!(r.frozen_checked, 1);
    }

    #[test]
    fn learnable_tau_is_checked() {
        let (p, x, t, cfg) = setup(TauMode::Learnable(0.3), FreezeSpec::default());
        let r = finite_diff_gradcheck(&p, &x, &t, &cfg, 1e-5).unwrap();
        assert!(r.passes(1e-5), "{r:?}");
        assert!(r.log_tau_rel_error.unwrap() < 1e-5);
        assert_eq!(r.frozen_checked, 0);
    }

    #[test]
    fn frozen_tensors_report_zero_gradient() {
        let (p, x, t, cfg) = setup(TauMode::Fixed(0.5), FreezeSpec { image: Some(1), text: Some(0) });
        let r = finite_diff_gradcheck(&p, &x, &t, &cfg, 1e-5).unwrap();
        assert_eq!(r.frozen_nonzero, 0);
        assert!(r.frozen_checked > 0);
        assert!(r.passes(1e-5), "{r:?}");
    }

    #[test]
    fn random_cases_pass() {
        for seed in 0..5 {
            let case = GradcheckCase::random(seed).unwrap();
            let r = case.check(1e-5).unwrap();
            assert!(r.passes(1e-5), "seed {seed}: {r:?}");
            assert!(r.log_tau_rel_error.is_some());
        }
    }

    #[test]
    fn rejects_bad_step() {
        let (p, x, t, cfg) = setup(TauMode::Fixed(0.5), FreezeSpec::default());
        assert!(finite_diff_gradcheck(&p, &x, &t, &cfg, 0.0).is_err());
    }
}
