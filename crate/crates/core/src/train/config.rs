use serde::{Deserialize, Serialize};

use crate::embed::{EncoderParams, ModelConfig, ParamGroup, DEFAULT_TAU};
use crate::{Error, Result};

pub const TAU_MIN: f64 = 0.01;
pub const TAU_MAX: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauMode {
    Fixed(f64),
    /// Trained as `log tau` from this initial value, clamped to [`TAU_MIN`, `TAU_MAX`].
    Learnable(f64),
}

impl TauMode {
    pub fn initial(self) -> f64 {
        match self {
            TauMode::Fixed(t) | TauMode::Learnable(t) => t,
        }
    }

    pub fn is_learnable(self) -> bool {
        matches!(self, TauMode::Learnable(_))
    }
}

/// Trainable layers per tower, counted from the top. `None` trains the whole
/// tower and `Some(0)` freezes it. The text tower's bottom layer is the token
/// embedding table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FreezeSpec {
    pub image: Option<usize>,
    pub text: Option<usize>,
}

impl FreezeSpec {
    pub fn fully_frozen() -> Self {
        Self { image: Some(0), text: Some(0) }
    }

    pub fn text_frozen() -> Self {
        Self { image: None, text: Some(0) }
    }

    fn top_trainable(limit: Option<usize>, position: usize, stack: usize) -> bool {
        match limit {
            None => true,
            Some(k) => position + k >= stack,
        }
    }

    /// Whether a tower parameter group is trainable; temperature is decided by [`TauMode`].
    pub fn tower_trainable(&self, group: ParamGroup, params: &EncoderParams) -> bool {
        let image_layers = params.image.layers.len();
        let text_stack = params.text.layers.len() + 1;
        match group {
            ParamGroup::ImageLayer(l) => Self::top_trainable(self.image, l, image_layers),
            ParamGroup::TokenEmbedding => Self::top_trainable(self.text, 0, text_stack),
            ParamGroup::TextLayer(l) => Self::top_trainable(self.text, l + 1, text_stack),
            ParamGroup::Temperature => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Architecture presets with their default learning rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 2 layers, hidden 64, d = 32; lr 5e-4.
    Small,
    /// 3 layers, hidden 256, d = 64; lr 5e-5.
    Large,
}

impl Preset {
    pub fn model(self, image_dim: usize) -> ModelConfig {
        match self {
            Preset::Small => ModelConfig { image_dim, ..ModelConfig::default() },
            Preset::Large => ModelConfig { image_dim, token_dim: 64, hidden_dim: 256, embed_dim: 64, depth: 3 },
        }
    }

    pub fn base_lr(self) -> f64 {
        match self {
            Preset::Small => 5e-4,
            Preset::Large => 5e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub batch_size: usize,
    pub base_lr: f64,
    pub epochs: usize,
    pub warmup_steps: usize,
    pub seed: u64,
    pub tau: TauMode,
    pub freeze: FreezeSpec,
    pub adam: AdamConfig,
    /// Global gradient-norm clip; off when `None`.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            batch_size: 256,
            base_lr: Preset::Small.base_lr(),
            epochs: 10,
            warmup_steps: 10,
            seed: 0,
            tau: TauMode::Fixed(DEFAULT_TAU),
            freeze: FreezeSpec::default(),
            adam: AdamConfig::default(),
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn for_preset(preset: Preset, image_dim: usize) -> Self {
        Self { model: preset.model(image_dim), base_lr: preset.base_lr(), ..Self::default() }
    }

    pub fn is_trainable(&self, group: ParamGroup, params: &EncoderParams) -> bool {
        match group {
            ParamGroup::Temperature => self.tau.is_learnable(),
            other => self.freeze.tower_trainable(other, params),
        }
    }

    /// Checks everything that does not depend on the corpus size.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        let tau = self.tau.initial();
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {tau}")));
        }
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr must be non-negative, got {}", self.base_lr)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        let AdamConfig { beta1, beta2, eps } = self.adam;
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
            return Err(Error::Config(format!("invalid Adam settings {:?}", self.adam)));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("grad_clip must be positive, got {c}")));
            }
        }
        Ok(())
    }

    pub fn total_steps(&self, corpus_len: usize) -> usize {
        self.epochs * (corpus_len / self.batch_size)
    }
}
