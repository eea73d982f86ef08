//! The two towers. Image tower: MLP over a feature vector. Text tower:
//! mean-pooled token embeddings followed by an MLP. Hidden layers use tanh,
//! the last layer is affine, and outputs are L2-normalized.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::matrix::dot;
use super::DenseMatrix;
use crate::{Error, Result};

pub const DEFAULT_TAU: f64 = 0.07;

/// Rows encoded per parallel task in the batched encoders.
const ENCODE_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub image_dim: usize,
    pub token_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    /// Affine layers per tower MLP.
    pub depth: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { image_dim: 32, token_dim: 32, hidden_dim: 64, embed_dim: 32, depth: 2 }
    }
}

impl ModelConfig {
    fn layer_dims(&self, input: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat(self.hidden_dim).take(self.depth.saturating_sub(1)));
        dims.push(self.embed_dim);
        dims
    }

    pub fn validate(&self) -> Result<()> {
        let ModelConfig { image_dim, token_dim, hidden_dim, embed_dim, depth } = *self;
        if [image_dim, token_dim, hidden_dim, embed_dim, depth].contains(&0) {
            return Err(Error::Config(format!("model dimensions and depth must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// `out x in`.
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl Linear {
    fn init<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (input + output) as f64).sqrt();
        let values = (0..input * output).map(|_| rng.gen_range(-bound..bound)).collect();
        Self {
            weight: DenseMatrix::from_vec(output, input, values).expect("sized"),
            bias: vec![0.0; output],
        }
    }

    fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut y = x.matmul_transposed(&self.weight)?;
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Inputs seen by each layer during a forward pass; the input of layer
/// `l + 1` is `tanh` of layer `l`'s output.
#[derive(Debug, Clone)]
struct MlpCache {
    inputs: Vec<DenseMatrix>,
}

impl Mlp {
    fn init<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        Self { layers: dims.windows(2).map(|w| Linear::init(w[0], w[1], rng)).collect() }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map(|l| l.weight.cols()).unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.weight.rows()).unwrap_or(0)
    }

    fn run(&self, x: DenseMatrix, mut cache: Option<&mut MlpCache>) -> Result<DenseMatrix> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&h)?;
            if l < last {
                y.map_inplace(f64::tanh);
            }
            if let Some(c) = cache.as_deref_mut() {
                c.inputs.push(h);
            }
            h = y;
        }
        Ok(h)
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the MLP input.
    fn backward(&self, cache: &MlpCache, d_out: DenseMatrix, grads: &mut Mlp) -> Result<DenseMatrix> {
        let mut d = d_out;
        for l in (0..self.layers.len()).rev() {
            let input = &cache.inputs[l];
            let g = &mut grads.layers[l];
            let dw = d.transpose_matmul(input)?;
            for (acc, v) in g.weight.values_mut().iter_mut().zip(dw.values()) {
                *acc += v;
            }
            for (acc, v) in g.bias.iter_mut().zip(d.column_sums()) {
                *acc += v;
            }
            let mut d_in = d.matmul(&self.layers[l].weight)?;
            if l > 0 {
                // input of layer l is tanh(pre-activation of layer l - 1)
                for (dv, a) in d_in.values_mut().iter_mut().zip(input.values()) {
                    *dv *= 1.0 - a * a;
                }
            }
            d = d_in;
        }
        Ok(d)
    }

    fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Linear {
                    weight: DenseMatrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }
}

/// Unit-norm embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        dot(&self.0, &other.0)
    }
}

/// Which part of the model a tensor belongs to; used for freezing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    ImageLayer(usize),
    TokenEmbedding,
    TextLayer(usize),
    Temperature,
}

pub struct TensorRef<'a> {
    pub name: String,
    pub group: ParamGroup,
    pub shape: (usize, usize),
    pub data: &'a [f64],
}

pub struct TensorMut<'a> {
    pub name: String,
    pub group: ParamGroup,
    pub data: &'a mut [f64],
}

/// Weights of both towers plus the log-temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub image: Mlp,
    /// `vocab_size x token_dim`.
    pub token_embedding: DenseMatrix,
    pub text: Mlp,
    pub log_tau: f64,
}

/// State kept from a forward pass for backprop.
#[derive(Debug, Clone)]
pub struct TowerCache {
    mlp: MlpCache,
    norms: Vec<f64>,
    embeddings: DenseMatrix,
    tokens: Option<Vec<Vec<usize>>>,
}

impl TowerCache {
    pub fn embeddings(&self) -> &DenseMatrix {
        &self.embeddings
    }
}

fn normalize_rows(u: DenseMatrix) -> Result<(DenseMatrix, Vec<f64>)> {
    let mut z = u;
    let mut norms = Vec::with_capacity(z.rows());
    for r in 0..z.rows() {
        let row = z.row_mut(r);
        let norm = dot(row, row).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Numeric(format!("degenerate embedding (row {r}, norm {norm})")));
        }
        for v in row.iter_mut() {
            *v /= norm;
        }
        norms.push(norm);
    }
    Ok((z, norms))
}

/// Backprop through `z = u / |u|`: `du = (g - z (z . g)) / |u|`.
fn normalize_backward(z: &DenseMatrix, norms: &[f64], dz: &DenseMatrix) -> DenseMatrix {
    let mut du = dz.clone();
    for r in 0..z.rows() {
        let zr = z.row(r);
        let proj = dot(zr, dz.row(r));
        for (d, zv) in du.row_mut(r).iter_mut().zip(zr) {
            *d = (*d - zv * proj) / norms[r];
        }
    }
    du
}

impl EncoderParams {
    /// Xavier-uniform weights, zero biases, uniform token embeddings in [-1, 1).
    pub fn init(config: &ModelConfig, vocab_size: usize, tau: f64, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab_size == 0 {
            return Err(Error::Config("vocabulary is empty".into()));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {tau}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let image = Mlp::init(&config.layer_dims(config.image_dim), &mut rng);
        let emb = (0..vocab_size * config.token_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let token_embedding = DenseMatrix::from_vec(vocab_size, config.token_dim, emb)?;
        let text = Mlp::init(&config.layer_dims(config.token_dim), &mut rng);
        Ok(Self { image, token_embedding, text, log_tau: tau.ln() })
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            image_dim: self.image.input_dim(),
            token_dim: self.token_embedding.cols(),
            hidden_dim: if self.image.layers.len() > 1 { self.image.layers[0].weight.rows() } else { 0 },
            embed_dim: self.image.output_dim(),
            depth: self.image.layers.len(),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.token_embedding.rows()
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            image: self.image.zeros_like(),
            token_embedding: DenseMatrix::zeros(self.token_embedding.rows(), self.token_embedding.cols()),
            text: self.text.zeros_like(),
            log_tau: 0.0,
        }
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        for (l, layer) in self.image.layers.iter().enumerate() {
            out.push(TensorRef {
                name: format!("image.{l}.weight"),
                group: ParamGroup::ImageLayer(l),
                shape: layer.weight.shape(),
                data: layer.weight.values(),
            });
            out.push(TensorRef {
                name: format!("image.{l}.bias"),
                group: ParamGroup::ImageLayer(l),
                shape: (1, layer.bias.len()),
                data: &layer.bias,
            });
        }
        out.push(TensorRef {
            name: "text.embedding".into(),
            group: ParamGroup::TokenEmbedding,
            shape: self.token_embedding.shape(),
            data: self.token_embedding.values(),
        });
        for (l, layer) in self.text.layers.iter().enumerate() {
            out.push(TensorRef {
                name: format!("text.{l}.weight"),
                group: ParamGroup::TextLayer(l),
                shape: layer.weight.shape(),
                data: layer.weight.values(),
            });
            out.push(TensorRef {
                name: format!("text.{l}.bias"),
                group: ParamGroup::TextLayer(l),
                shape: (1, layer.bias.len()),
                data: &layer.bias,
            });
        }
        out.push(TensorRef {
            name: "log_tau".into(),
            group: ParamGroup::Temperature,
            shape: (1, 1),
            data: std::slice::from_ref(&self.log_tau),
        });
        out
    }

    /// Same order as [`EncoderParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = Vec::new();
        for (l, layer) in self.image.layers.iter_mut().enumerate() {
            out.push(TensorMut {
                name: format!("image.{l}.weight"),
                group: ParamGroup::ImageLayer(l),
                data: layer.weight.values_mut(),
            });
            out.push(TensorMut {
                name: format!("image.{l}.bias"),
                group: ParamGroup::ImageLayer(l),
                data: &mut layer.bias,
            });
        }
        out.push(TensorMut {
            name: "text.embedding".into(),
            group: ParamGroup::TokenEmbedding,
            data: self.token_embedding.values_mut(),
        });
        for (l, layer) in self.text.layers.iter_mut().enumerate() {
            out.push(TensorMut {
                name: format!("text.{l}.weight"),
                group: ParamGroup::TextLayer(l),
                data: layer.weight.values_mut(),
            });
            out.push(TensorMut {
                name: format!("text.{l}.bias"),
                group: ParamGroup::TextLayer(l),
                data: &mut layer.bias,
            });
        }
        out.push(TensorMut {
            name: "log_tau".into(),
            group: ParamGroup::Temperature,
            data: std::slice::from_mut(&mut self.log_tau),
        });
        out
    }

    /// Names and shapes of every tensor, for compatibility checks.
    pub fn layout(&self) -> Vec<(String, (usize, usize))> {
        self.tensors().into_iter().map(|t| (t.name, t.shape)).collect()
    }

    pub fn check_same_layout(&self, other: &EncoderParams) -> Result<()> {
        let (a, b) = (self.layout(), other.layout());
        if a != b {
            let diff = a
                .iter()
                .zip(&b)
                .find(|(x, y)| x != y)
                .map(|(x, y)| format!("{} {:?} vs {} {:?}", x.0, x.1, y.0, y.1))
                .unwrap_or_else(|| format!("{} vs {} tensors", a.len(), b.len()));
            return Err(Error::Shape(format!("parameter layouts differ: {diff}")));
        }
        Ok(())
    }

    /// SHA-256 over every tensor's name and raw bits.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for t in self.tensors() {
            hasher.update(t.name.as_bytes());
            for v in t.data {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    fn pool_tokens(&self, tokens: &[Vec<usize>]) -> Result<DenseMatrix> {
        let dim = self.token_embedding.cols();
        let mut pooled = DenseMatrix::zeros(tokens.len(), dim);
        for (r, seq) in tokens.iter().enumerate() {
            if seq.is_empty() {
                return Err(Error::InvalidInput(format!("text {r}: empty token list")));
            }
            let dst = pooled.row_mut(r);
            for &t in seq {
                if t >= self.token_embedding.rows() {
                    return Err(Error::Shape(format!("token index {t} outside vocabulary of {}", self.vocab_size())));
                }
                for (d, v) in dst.iter_mut().zip(self.token_embedding.row(t)) {
                    *d += v;
                }
            }
            let n = seq.len() as f64;
            dst.iter_mut().for_each(|d| *d /= n);
        }
        Ok(pooled)
    }

    fn check_image_input(&self, x: &DenseMatrix) -> Result<()> {
        if x.cols() != self.image.input_dim() {
            return Err(Error::Shape(format!("image features have {} dims, model expects {}", x.cols(), self.image.input_dim())));
        }
        if !x.all_finite() {
            return Err(Error::InvalidInput("image features contain non-finite values".into()));
        }
        Ok(())
    }

    /// Unit-norm image embeddings for a batch of features (one per row).
    pub fn image_embeddings(&self, features: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_image_input(features)?;
        Ok(normalize_rows(self.image.run(features.clone(), None)?)?.0)
    }

    pub fn text_embeddings(&self, tokens: &[Vec<usize>]) -> Result<DenseMatrix> {
        let pooled = self.pool_tokens(tokens)?;
        Ok(normalize_rows(self.text.run(pooled, None)?)?.0)
    }

    pub fn image_forward(&self, features: &DenseMatrix) -> Result<TowerCache> {
        self.check_image_input(features)?;
        let mut mlp = MlpCache { inputs: Vec::new() };
        let u = self.image.run(features.clone(), Some(&mut mlp))?;
        let (embeddings, norms) = normalize_rows(u)?;
        Ok(TowerCache { mlp, norms, embeddings, tokens: None })
    }

    pub fn text_forward(&self, tokens: &[Vec<usize>]) -> Result<TowerCache> {
        let pooled = self.pool_tokens(tokens)?;
        let mut mlp = MlpCache { inputs: Vec::new() };
        let u = self.text.run(pooled, Some(&mut mlp))?;
        let (embeddings, norms) = normalize_rows(u)?;
        Ok(TowerCache { mlp, norms, embeddings, tokens: Some(tokens.to_vec()) })
    }

    /// Accumulates image-tower gradients for upstream gradient `dz` on the embeddings.
    pub fn image_backward(&self, cache: &TowerCache, dz: &DenseMatrix, grads: &mut EncoderParams) -> Result<()> {
        let du = normalize_backward(&cache.embeddings, &cache.norms, dz);
        self.image.backward(&cache.mlp, du, &mut grads.image)?;
        Ok(())
    }

    pub fn text_backward(&self, cache: &TowerCache, dz: &DenseMatrix, grads: &mut EncoderParams) -> Result<()> {
        let tokens = cache
            .tokens
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("text_backward needs a text-tower cache".into()))?;
        let du = normalize_backward(&cache.embeddings, &cache.norms, dz);
        let d_pooled = self.text.backward(&cache.mlp, du, &mut grads.text)?;
        for (r, seq) in tokens.iter().enumerate() {
            let scale = 1.0 / seq.len() as f64;
            let src = d_pooled.row(r);
            for &t in seq {
                for (acc, v) in grads.token_embedding.row_mut(t).iter_mut().zip(src) {
                    *acc += v * scale;
                }
            }
        }
        Ok(())
    }
}

pub fn encode_text(tokens: &[usize], params: &EncoderParams) -> Result<Embedding> {
    let z = params.text_embeddings(&[tokens.to_vec()])?;
    Ok(Embedding(z.into_values()))
}

pub fn encode_image(feature: &[f64], params: &EncoderParams) -> Result<Embedding> {
    let x = DenseMatrix::from_vec(1, feature.len(), feature.to_vec())?;
    Ok(Embedding(params.image_embeddings(&x)?.into_values()))
}

fn concat_rows(parts: Vec<DenseMatrix>, cols: usize) -> Result<DenseMatrix> {
    let rows = parts.iter().map(|p| p.rows()).sum();
    let mut values = Vec::with_capacity(rows * cols);
    for p in parts {
        values.extend(p.into_values());
    }
    DenseMatrix::from_vec(rows, cols, values)
}

/// Batched image encoding, parallel over row chunks. Each row is computed
/// independently, so results do not depend on chunking or thread count.
pub fn encode_images(features: &DenseMatrix, params: &EncoderParams) -> Result<DenseMatrix> {
    let chunks: Vec<Vec<usize>> =
        (0..features.rows()).collect::<Vec<_>>().chunks(ENCODE_CHUNK).map(<[usize]>::to_vec).collect();
    let parts = chunks
        .par_iter()
        .map(|rows| params.image_embeddings(&features.select_rows(rows)))
        .collect::<Result<Vec<_>>>()?;
    concat_rows(parts, params.image.output_dim())
}

pub fn encode_texts(tokens: &[Vec<usize>], params: &EncoderParams) -> Result<DenseMatrix> {
    let parts = tokens
        .par_chunks(ENCODE_CHUNK)
        .map(|chunk| params.text_embeddings(chunk))
        .collect::<Result<Vec<_>>>()?;
    concat_rows(parts, params.text.output_dim())
}

/// `N x M` matrix of dot products between unit-norm rows, i.e. cosine similarities.
pub fn cosine_similarity_matrix(image: &DenseMatrix, text: &DenseMatrix) -> Result<DenseMatrix> {
    image.matmul_transposed(text)
}
