use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::report::{accuracy, per_class_accuracy, EvalReport, EvalTask};
use crate::caption::templates::GENERAL;
use crate::caption::fill_template;
use crate::embed::{encode_images, encode_texts, tokenize, DenseMatrix, EncoderParams, Vocab};
use crate::train::Checkpoint;
use crate::{Error, Result};

/// Prompt texts per class name. Classes are kept sorted by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPromptSet {
    classes: BTreeMap<String, Vec<String>>,
}

impl ClassPromptSet {
    pub fn new(classes: BTreeMap<String, Vec<String>>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::InvalidInput("prompt set has no classes".into()));
        }
        for (name, prompts) in &classes {
            if prompts.is_empty() || prompts.iter().any(|p| p.trim().is_empty()) {
                return Err(Error::InvalidInput(format!("class `{name}` needs at least one non-empty prompt")));
            }
        }
        Ok(Self { classes })
    }

    /// Every general caption template filled with each class name.
    pub fn from_general_templates<S: AsRef<str>>(class_names: &[S]) -> Result<Self> {
        let mut classes = BTreeMap::new();
        for name in class_names {
            let name = name.as_ref();
            let slots = HashMap::from([("class", name.to_string())]);
            let prompts = GENERAL.iter().map(|t| fill_template(t, &slots)).collect::<Result<Vec<_>>>()?;
            classes.insert(name.to_string(), prompts);
        }
        Self::new(classes)
    }

    pub fn class_names(&self) -> Vec<&str> {
        self.classes.keys().map(String::as_str).collect()
    }

    pub fn prompts(&self, class: &str) -> Option<&[String]> {
        self.classes.get(class).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// One row per class (in [`ClassPromptSet::class_names`] order): the
/// L2-normalized mean of the class's prompt embeddings.
pub fn class_embeddings(prompts: &ClassPromptSet, vocab: &Vocab, params: &EncoderParams) -> Result<DenseMatrix> {
    let mut rows = Vec::with_capacity(prompts.len());
    for (name, texts) in &prompts.classes {
        let tokens: Vec<Vec<usize>> = texts.iter().map(|t| tokenize(t, vocab)).collect();
        if tokens.iter().any(Vec::is_empty) {
            return Err(Error::InvalidInput(format!("class `{name}` has a prompt without words")));
        }
        let z = encode_texts(&tokens, params)?;
        let mut mean = vec![0.0; z.cols()];
        for r in 0..z.rows() {
            for (m, v) in mean.iter_mut().zip(z.row(r)) {
                *m += v;
            }
        }
        let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Numeric(format!("class `{name}` prompts average to a zero vector")));
        }
        mean.iter_mut().for_each(|v| *v /= norm);
        rows.push(mean);
    }
    DenseMatrix::from_rows(&rows)
}

/// Index of the most similar class per image; ties go to the lower index.
pub fn zero_shot_predict(image_embeddings: &DenseMatrix, class_embeddings: &DenseMatrix) -> Result<Vec<usize>> {
    let sim = image_embeddings.matmul_transposed(class_embeddings)?;
    Ok((0..sim.rows())
        .map(|r| {
            let row = sim.row(r);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

/// Classifies each feature row by its nearest class prompt embedding.
pub fn zero_shot_classify(
    features: &DenseMatrix,
    labels: &[String],
    prompts: &ClassPromptSet,
    vocab: &Vocab,
    ckpt: &Checkpoint,
) -> Result<EvalReport> {
    if features.rows() != labels.len() {
        return Err(Error::Shape(format!("{} images vs {} labels", features.rows(), labels.len())));
    }
    if vocab.content_hash() != ckpt.vocab_hash {
        return Err(Error::Shape("vocabulary does not match the checkpoint".into()));
    }
    let classes = class_embeddings(prompts, vocab, &ckpt.params)?;
    let zv = encode_images(features, &ckpt.params)?;
    let names = prompts.class_names();
    let predicted: Vec<String> =
        zero_shot_predict(&zv, &classes)?.into_iter().map(|i| names[i].to_string()).collect();

    let mut report = EvalReport::new(EvalTask::Zeroshot, ckpt.fingerprint.clone(), labels.len());
    report.metrics.insert("accuracy".into(), accuracy(&predicted, labels)?);
    report.per_class = per_class_accuracy(&predicted, labels);
    let unknown = labels.iter().filter(|l| prompts.prompts(l).is_none()).count();
    if unknown > 0 {
        report.warnings.push(format!("{unknown} labels have no prompts and always count as wrong"));
    }
    Ok(report)
}
