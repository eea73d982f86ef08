use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::caption::PairRecord;
use crate::embed::{cosine_similarity_matrix, encode_images, encode_texts, DenseMatrix, EncoderParams, FeatureStore, Vocab};
use crate::train::{Checkpoint, TrainCorpus};
use crate::{Error, Result};

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];

/// Zero-based rank of item `truth` in `scores`. Items scoring higher, or
/// equal with a lower index, rank ahead of it.
pub fn rank_of_truth(scores: &[f64], truth: usize) -> usize {
    let s = scores[truth];
    scores.iter().enumerate().filter(|&(j, &v)| v > s || (v == s && j < truth)).count()
}

fn check_similarities(similarities: &DenseMatrix, truth: &[usize]) -> Result<()> {
    if truth.len() != similarities.rows() {
        return Err(Error::Shape(format!("{} ground-truth entries for {} queries", truth.len(), similarities.rows())));
    }
    if let Some(&t) = truth.iter().find(|&&t| t >= similarities.cols()) {
        return Err(Error::InvalidInput(format!("ground-truth item {t} outside {} items", similarities.cols())));
    }
    if !similarities.all_finite() {
        return Err(Error::Numeric("similarity matrix contains non-finite values".into()));
    }
    Ok(())
}

fn ranks(similarities: &DenseMatrix, truth: &[usize]) -> Vec<usize> {
    (0..similarities.rows()).into_par_iter().map(|i| rank_of_truth(similarities.row(i), truth[i])).collect()
}

/// Fraction of queries (rows) whose true item ranks within the top `k`.
pub fn recall_at_k(similarities: &DenseMatrix, truth: &[usize], k: usize) -> Result<f64> {
    check_similarities(similarities, truth)?;
    if k == 0 || k > similarities.cols() {
        return Err(Error::InvalidInput(format!("k = {k} must be in 1..={}", similarities.cols())));
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("no queries".into()));
    }
    let hits = ranks(similarities, truth).into_iter().filter(|&r| r < k).count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalDirection {
    ImageToText,
    TextToImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallAt {
    pub k: usize,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalRecall {
    pub direction: RetrievalDirection,
    pub recall: Vec<RecallAt>,
}

impl DirectionalRecall {
    fn compute(direction: RetrievalDirection, similarities: &DenseMatrix, truth: &[usize], ks: &[usize]) -> Result<Self> {
        check_similarities(similarities, truth)?;
        let r = ranks(similarities, truth);
        let n = truth.len() as f64;
        let recall = ks.iter().map(|&k| RecallAt { k, recall: r.iter().filter(|&&x| x < k).count() as f64 / n }).collect();
        Ok(Self { direction, recall })
    }

    pub fn at(&self, k: usize) -> Option<f64> {
        self.recall.iter().find(|r| r.k == k).map(|r| r.recall)
    }

    /// Recall is non-decreasing in `k`.
    pub fn is_monotone(&self) -> bool {
        let mut sorted = self.recall.clone();
        sorted.sort_by_key(|r| r.k);
        sorted.windows(2).all(|w| w[0].recall <= w[1].recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub pairs: usize,
    pub image_to_text: DirectionalRecall,
    pub text_to_image: DirectionalRecall,
    /// Mean over every recall value in both directions.
    pub mean_recall: f64,
    pub warnings: Vec<String>,
}

impl RetrievalReport {
    pub fn is_monotone(&self) -> bool {
        self.image_to_text.is_monotone() && self.text_to_image.is_monotone()
    }
}

fn duplicate_rows(m: &DenseMatrix) -> usize {
    let mut seen = HashSet::new();
    (0..m.rows()).filter(|&r| !seen.insert(m.row(r).iter().map(|v| v.to_bits()).collect::<Vec<_>>())).count()
}

fn duplicate_texts(tokens: &[Vec<usize>]) -> usize {
    let mut seen = HashSet::new();
    tokens.iter().filter(|t| !seen.insert(*t)).count()
}

fn check_ks(ks: &[usize], n: usize) -> Result<()> {
    if ks.is_empty() {
        return Err(Error::InvalidInput("no K values given".into()));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > n) {
        return Err(Error::InvalidInput(format!("K = {k} must be in 1..={n} for {n} test pairs")));
    }
    Ok(())
}

/// Retrieval over matched rows: item `i` of each side is the truth for query `i`.
pub fn retrieval_eval_encoded(
    features: &DenseMatrix,
    tokens: &[Vec<usize>],
    params: &EncoderParams,
    ks: &[usize],
) -> Result<RetrievalReport> {
    let n = features.rows();
    if n != tokens.len() {
        return Err(Error::Shape(format!("{n} images vs {} captions", tokens.len())));
    }
    if n == 0 {
        return Err(Error::InvalidInput("empty test corpus".into()));
    }
    check_ks(ks, n)?;
    let zv = encode_images(features, params)?;
    let zt = encode_texts(tokens, params)?;
    let sim = cosine_similarity_matrix(&zv, &zt)?;
    let truth: Vec<usize> = (0..n).collect();
    let image_to_text = DirectionalRecall::compute(RetrievalDirection::ImageToText, &sim, &truth, ks)?;
    let text_to_image = DirectionalRecall::compute(RetrievalDirection::TextToImage, &sim.transpose(), &truth, ks)?;
    let all: Vec<f64> = image_to_text.recall.iter().chain(&text_to_image.recall).map(|r| r.recall).collect();
    let mean_recall = all.iter().sum::<f64>() / all.len() as f64;

    let mut warnings = Vec::new();
    let dup_images = duplicate_rows(features);
    if dup_images > 0 {
        warnings.push(format!("{dup_images} duplicate image feature rows; recall is degenerate for them"));
    }
    let dup_texts = duplicate_texts(tokens);
    if dup_texts > 0 {
        warnings.push(format!("{dup_texts} duplicate captions after tokenization; recall is degenerate for them"));
    }
    let report = RetrievalReport { pairs: n, image_to_text, text_to_image, mean_recall, warnings };
    debug_assert!(report.is_monotone());
    Ok(report)
}

/// Encodes a 1:1 test corpus and reports recall in both directions.
pub fn retrieval_eval(
    pairs: &[PairRecord],
    store: &FeatureStore,
    vocab: &Vocab,
    ckpt: &Checkpoint,
    ks: &[usize],
) -> Result<RetrievalReport> {
    let mut seen = HashSet::new();
    if let Some(p) = pairs.iter().find(|p| !seen.insert(p.image_id.as_str())) {
        return Err(Error::InvalidInput(format!(
            "retrieval needs one caption per image, `{}` appears more than once",
            p.image_id
        )));
    }
    if vocab.content_hash() != ckpt.vocab_hash {
        return Err(Error::Shape("vocabulary does not match the checkpoint".into()));
    }
    let corpus = TrainCorpus::from_pairs(pairs, store, vocab)?;
    retrieval_eval_encoded(corpus.features(), corpus.tokens(), &ckpt.params, ks)
}
