//! Contrastive image-text alignment for SAR imagery at desk scale.
//!
//! The crate covers the whole pipeline:
//!
//! - [`ingest`]: annotation manifests (detection, classification, caption) into records
//! - [`caption`]: templated caption synthesis and the pair corpus format
//! - [`embed`]: dense math, vocabulary, feature store and the two encoder towers
//! - [`train`]: symmetric InfoNCE with manual backprop, Adam, warmup+cosine, checkpoints
//! - [`eval`]: retrieval recall, zero-shot classification, linear probing
//! - [`synthetic`]: the clustered 8-class benchmark used for smoke tests and demos
//! - [`cli`]: the `sarclip` command line

pub mod caption;
pub mod cli;
pub mod embed;
pub mod error;
pub mod eval;
pub mod fingerprint;
pub mod ingest;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};

/// Version tag written into every artifact (corpora stats, checkpoints, reports).
pub const FORMAT_VERSION: u32 = 1;
