//! Dense math, tokenization, feature storage and the two encoder towers.

mod features;
mod matrix;
mod model;
mod vocab;

pub use features::FeatureStore;
pub use matrix::DenseMatrix;
pub use model::{
    cosine_similarity_matrix, encode_image, encode_images, encode_text, encode_texts, Embedding, EncoderParams,
    Linear, Mlp, ModelConfig, ParamGroup, TensorMut, TensorRef, TowerCache, DEFAULT_TAU,
};
pub use vocab::{split_words, tokenize, Vocab, UNK, UNK_INDEX};
