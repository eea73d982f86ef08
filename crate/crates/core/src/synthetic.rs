//! Clustered 8-class benchmark with known ground truth.
//!
//! Each image has latent attributes (class, region, count). Its feature
//! vector is a fixed random linear mix of the one-hot attributes plus
//! uniform noise. Captions come from the general templates (class only) or
//! the absolute-region templates (count, class and region). Test pairs cover
//! distinct attribute combinations, so every test caption is unique.
//!
//! Domains that share `mixing_seed` but differ in `shift` are related: the
//! shifted mixing matrix is the base matrix plus `shift` times an independent
//! random matrix.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::caption::templates::{ABSOLUTE, GENERAL};
use crate::caption::{fill_template, summarize_objects, CaptionKind, PairRecord, RegionLabel, Template};
use crate::embed::{DenseMatrix, FeatureStore, Vocab};
use crate::fingerprint::sub_seed;
use crate::ingest::{AnnotationKind, AnnotationRecord, ImageMeta, Split};
use crate::train::TrainCorpus;
use crate::{Error, Result};

pub const CLASSES: [&str; 8] = ["aircraft", "bridge", "building", "car", "harbor", "oiltank", "ship", "tank"];
pub const MAX_COUNT: usize = 4;
pub const SOURCE_NAME: &str = "synthetic";
const LATENT_DIM: usize = CLASSES.len() + 5 + MAX_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Attributes {
    pub class: usize,
    pub region: RegionLabel,
    pub count: usize,
}

impl Attributes {
    /// Every combination: 8 classes x 5 regions x counts 1..=4.
    pub fn all() -> Vec<Attributes> {
        let mut out = Vec::with_capacity(CLASSES.len() * 5 * MAX_COUNT);
        for class in 0..CLASSES.len() {
            for region in RegionLabel::ALL {
                for count in 1..=MAX_COUNT {
                    out.push(Attributes { class, region, count });
                }
            }
        }
        out
    }

    fn latent(&self) -> [f64; LATENT_DIM] {
        let mut v = [0.0; LATENT_DIM];
        v[self.class] = 1.0;
        let r = RegionLabel::ALL.iter().position(|&r| r == self.region).expect("known region");
        v[CLASSES.len() + r] = 1.0;
        v[CLASSES.len() + 5 + self.count - 1] = 1.0;
        v
    }

    pub fn class_name(&self) -> &'static str {
        CLASSES[self.class]
    }

    fn caption(&self, template: &Template) -> Result<String> {
        let objects = summarize_objects(std::iter::repeat(self.class_name()).take(self.count));
        let slots = HashMap::from([
            ("class", self.class_name().to_string()),
            ("classes", objects),
            ("location", self.region.phrase().to_string()),
        ]);
        fill_template(template, &slots)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    /// Seeds attribute sampling, caption choice and noise.
    pub seed: u64,
    /// Seeds the base mixing matrix shared by related domains.
    pub mixing_seed: u64,
    /// Scale of the domain perturbation added to the base mixing matrix.
    pub shift: f64,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub image_dim: usize,
    /// Half-width of the uniform feature noise.
    pub noise: f64,
    /// Share of training captions drawn from the general (class-only) templates.
    pub general_fraction: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mixing_seed: 0,
            shift: 0.0,
            train_pairs: 512,
            test_pairs: 128,
            image_dim: 32,
            noise: 0.1,
            general_fraction: 0.3,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        let combos = CLASSES.len() * 5 * MAX_COUNT;
        if self.test_pairs > combos {
            return Err(Error::Config(format!("at most {combos} unique test pairs, asked for {}", self.test_pairs)));
        }
        if self.train_pairs == 0 || self.image_dim == 0 {
            return Err(Error::Config("train_pairs and image_dim must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.general_fraction) || !(self.noise >= 0.0) || !self.shift.is_finite() {
            return Err(Error::Config(format!("invalid synthetic settings {self:?}")));
        }
        Ok(())
    }
}

fn uniform_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 3f64.sqrt();
    let values = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    DenseMatrix::from_vec(rows, cols, values).expect("sized")
}

/// `image_dim x latent` matrix mapping one-hot attributes to features.
pub fn mixing_matrix(config: &SyntheticConfig) -> DenseMatrix {
    let mut m = uniform_matrix(config.image_dim, LATENT_DIM, sub_seed(config.mixing_seed, "mixing"));
    if config.shift != 0.0 {
        let p = uniform_matrix(config.image_dim, LATENT_DIM, sub_seed(config.mixing_seed, "shift"));
        for (a, b) in m.values_mut().iter_mut().zip(p.values()) {
            *a += config.shift * b;
        }
    }
    m
}

/// Vocabulary covering every caption and default prompt the generator can emit.
pub fn benchmark_vocab() -> Vocab {
    let mut texts: Vec<String> = Vec::new();
    for a in Attributes::all() {
        for t in GENERAL.iter().chain(&ABSOLUTE) {
            texts.push(a.caption(t).expect("templates fill"));
        }
    }
    Vocab::build(texts.iter().map(String::as_str))
}

#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub config: SyntheticConfig,
    pub train: Vec<PairRecord>,
    pub test: Vec<PairRecord>,
    pub train_attributes: Vec<Attributes>,
    pub test_attributes: Vec<Attributes>,
    pub features: FeatureStore,
    pub vocab: Vocab,
}

fn pair(id: String, split: Split, text: String, template: &Template) -> PairRecord {
    PairRecord {
        image_id: id.clone(),
        source: SOURCE_NAME.to_string(),
        split,
        feature_ref: id,
        caption_text: text,
        template_id: template.id.to_string(),
        template_kind: CaptionKind::from(template.kind),
    }
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticBenchmark> {
    config.validate()?;
    let mixing = mixing_matrix(config);
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, "synthetic"));
    let mut features = FeatureStore::new(config.image_dim);
    let feature = |rng: &mut ChaCha8Rng, a: &Attributes| -> Vec<f64> {
        let z = a.latent();
        (0..config.image_dim)
            .map(|r| {
                let clean: f64 = mixing.row(r).iter().zip(&z).map(|(m, v)| m * v).sum();
                clean + rng.gen_range(-1.0..=1.0) * config.noise
            })
            .collect()
    };

    let mut combos = Attributes::all();
    combos.shuffle(&mut rng);
    let test_attributes: Vec<Attributes> = combos.into_iter().take(config.test_pairs).collect();
    let mut test = Vec::with_capacity(config.test_pairs);
    for (i, a) in test_attributes.iter().enumerate() {
        let id = format!("syn-test-{i:04}");
        let template = &ABSOLUTE[rng.gen_range(0..ABSOLUTE.len())];
        features.insert(id.clone(), &feature(&mut rng, a))?;
        test.push(pair(id, Split::Test, a.caption(template)?, template));
    }

    let all = Attributes::all();
    let mut train = Vec::with_capacity(config.train_pairs);
    let mut train_attributes = Vec::with_capacity(config.train_pairs);
    for i in 0..config.train_pairs {
        let a = all[rng.gen_range(0..all.len())];
        let id = format!("syn-train-{i:04}");
        let template = if rng.gen_bool(config.general_fraction) {
            &GENERAL[rng.gen_range(0..GENERAL.len())]
        } else {
            &ABSOLUTE[rng.gen_range(0..ABSOLUTE.len())]
        };
        features.insert(id.clone(), &feature(&mut rng, &a))?;
        train.push(pair(id, Split::Train, a.caption(template)?, template));
        train_attributes.push(a);
    }

    Ok(SyntheticBenchmark {
        config: *config,
        train,
        test,
        train_attributes,
        test_attributes,
        features,
        vocab: benchmark_vocab(),
    })
}

/// File locations written by [`SyntheticBenchmark::write_to`].
#[derive(Debug, Clone)]
pub struct BenchmarkFiles {
    pub train_pairs: PathBuf,
    pub test_pairs: PathBuf,
    pub features: PathBuf,
    pub vocab: PathBuf,
    pub test_labels: PathBuf,
}

impl BenchmarkFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            train_pairs: dir.join("train.jsonl"),
            test_pairs: dir.join("test.jsonl"),
            features: dir.join("features.f64"),
            vocab: dir.join("vocab.txt"),
            test_labels: dir.join("test_labels.csv"),
        }
    }
}

impl SyntheticBenchmark {
    pub fn class_names(&self) -> Vec<&'static str> {
        CLASSES.to_vec()
    }

    pub fn train_corpus(&self) -> Result<TrainCorpus> {
        TrainCorpus::from_pairs(&self.train, &self.features, &self.vocab)
    }

    pub fn test_corpus(&self) -> Result<TrainCorpus> {
        TrainCorpus::from_pairs(&self.test, &self.features, &self.vocab)
    }

    pub fn test_labels(&self) -> Vec<String> {
        self.test_attributes.iter().map(|a| a.class_name().to_string()).collect()
    }

    pub fn test_features(&self) -> Result<DenseMatrix> {
        self.features.gather(self.test.iter().map(|p| p.feature_ref.as_str()))
    }

    /// Test images as classification records, for zero-shot evaluation.
    pub fn test_label_records(&self) -> Vec<AnnotationRecord> {
        self.test
            .iter()
            .zip(&self.test_attributes)
            .map(|(p, a)| AnnotationRecord {
                meta: ImageMeta {
                    image_id: p.image_id.clone(),
                    width: 128,
                    height: 128,
                    source: SOURCE_NAME.to_string(),
                    split: Split::Test,
                    feature_ref: p.feature_ref.clone(),
                },
                kind: AnnotationKind::Classification(a.class_name().to_string()),
            })
            .collect()
    }

    /// Writes pair corpora, feature store, vocabulary and test labels into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<BenchmarkFiles> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let files = BenchmarkFiles::in_dir(dir);
        crate::caption::write_pairs(&files.train_pairs, &self.train)?;
        crate::caption::write_pairs(&files.test_pairs, &self.test)?;
        self.features.write(&files.features)?;
        self.vocab.write(&files.vocab)?;
        crate::ingest::write_classification_manifest(&files.test_labels, &self.test_label_records())?;
        Ok(files)
    }
}
