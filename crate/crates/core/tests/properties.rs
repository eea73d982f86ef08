mod common;

use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sarclip::caption::{
    read_pairs, synthesize_corpus, synthesize_corpus_to_file, verify_text, CaptionKind, RuleVerifier, SynthOptions,
};
use sarclip::embed::{cosine_similarity_matrix, encode_images, encode_texts, DenseMatrix, EncoderParams, ModelConfig};
use sarclip::eval::{accuracy, zero_shot_predict};
use sarclip::ingest::{
    load_manifest_dir, read_caption_manifest, read_classification_manifest, read_detection_manifest,
    validate_records, write_caption_manifest, write_classification_manifest, write_detection_manifest,
    AnnotationKind, AnnotationRecord, BoundingBox, DetectionEntry, ImageMeta, Split, ValidationMode,
};
use sarclip::synthetic::{generate, SyntheticConfig};
use sarclip::train::{train_stage, TrainConfig};
use sarclip::Error;

const LABELS: [&str; 5] = ["ship", "tank", "aircraft", "oil tank", "bridge"];

fn meta(rng: &mut ChaCha8Rng, source: &str, i: usize) -> ImageMeta {
    let id = format!("{source}-{i:04}");
    let split = [Split::Train, Split::Val, Split::Test][rng.gen_range(0..3)];
    ImageMeta {
        feature_ref: format!("f/{id}"),
        image_id: id,
        width: rng.gen_range(8..200),
        height: rng.gen_range(8..200),
        source: source.to_string(),
        split,
    }
}

fn random_box(rng: &mut ChaCha8Rng, w: u32, h: u32) -> BoundingBox {
    let (w, h) = (w as i64, h as i64);
    let x0 = rng.gen_range(0..w);
    let y0 = rng.gen_range(0..h);
    BoundingBox::new(x0, y0, rng.gen_range(x0 + 1..=w), rng.gen_range(y0 + 1..=h))
}

fn detection_records(seed: u64, n: usize) -> Vec<AnnotationRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let meta = meta(&mut rng, "det", i);
            let entries = (0..rng.gen_range(1..5))
                .map(|_| DetectionEntry {
                    class_label: LABELS[rng.gen_range(0..LABELS.len())].to_string(),
                    bbox: random_box(&mut rng, meta.width, meta.height),
                })
                .collect();
            AnnotationRecord { meta, kind: AnnotationKind::Detection(entries) }
        })
        .collect()
}

fn classification_records(seed: u64, n: usize) -> Vec<AnnotationRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| AnnotationRecord {
            meta: meta(&mut rng, "cls", i),
            kind: AnnotationKind::Classification(LABELS[rng.gen_range(0..LABELS.len())].to_string()),
        })
        .collect()
}

fn caption_records(seed: u64, n: usize) -> Vec<AnnotationRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let texts = (0..rng.gen_range(1..4))
                .map(|c| format!("A view of {} {}, \"scene\" {c}.", rng.gen_range(1..9), LABELS[c % LABELS.len()]))
                .collect();
            AnnotationRecord { meta: meta(&mut rng, "cap", i), kind: AnnotationKind::Caption(texts) }
        })
        .collect()
}

fn write_manifest_dir(dir: &std::path::Path, seed: u64, n: usize) {
    write_detection_manifest(dir.join("det.json"), &detection_records(seed, n)).unwrap();
    write_classification_manifest(dir.join("cls.csv"), &classification_records(seed + 1, n)).unwrap();
    write_caption_manifest(dir.join("cap.csv"), &caption_records(seed + 2, n)).unwrap();
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[derive(Debug, Clone, Copy)]
enum Violation {
    OutOfRange,
    ZeroArea,
    DuplicateId,
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn manifests_round_trip(seed in 0u64..10_000, n in 1usize..30) {
        let dir = tempfile::tempdir().unwrap();
        let det = detection_records(seed, n);
        let cls = classification_records(seed, n);
        let cap = caption_records(seed, n);
        write_detection_manifest(dir.path().join("det.json"), &det).unwrap();
        write_classification_manifest(dir.path().join("cls.csv"), &cls).unwrap();
        write_caption_manifest(dir.path().join("cap.csv"), &cap).unwrap();
        prop_assert_eq!(read_detection_manifest(dir.path().join("det.json")).unwrap(), det);
        prop_assert_eq!(read_classification_manifest(dir.path().join("cls.csv")).unwrap(), cls);
        prop_assert_eq!(read_caption_manifest(dir.path().join("cap.csv")).unwrap(), cap);
    }

    #[test]
    fn parsing_is_independent_of_threads(seed in 0u64..10_000, n in 1usize..40) {
        let dir = tempfile::tempdir().unwrap();
        write_manifest_dir(dir.path(), seed, n);
        let one = in_pool(1, || load_manifest_dir(dir.path(), ValidationMode::Strict).unwrap());
        let four = in_pool(4, || load_manifest_dir(dir.path(), ValidationMode::Strict).unwrap());
        prop_assert_eq!(&one.accepted, &four.accepted);
        prop_assert_eq!(one.accepted.len(), 3 * n);
        prop_assert!(one.accepted.windows(2).all(|w| w[0].image_id() < w[1].image_id()));
    }

    #[test]
    fn validation_catches_injected_violations(
        seed in 0u64..10_000,
        n in 5usize..60,
        injections in prop::collection::vec((0usize..1000, 0usize..3), 1..8),
    ) {
        let mut records = detection_records(seed, n);
        let mut bad = HashSet::new();
        let mut duplicates = Vec::new();
        for (pick, kind) in injections {
            let i = pick % n;
            if bad.contains(&i) {
                continue;
            }
            let violation = [Violation::OutOfRange, Violation::ZeroArea, Violation::DuplicateId][kind];
            let record = &mut records[i];
            let AnnotationKind::Detection(entries) = &mut record.kind else { unreachable!() };
            match violation {
                Violation::OutOfRange => entries[0].bbox.x_max = record.meta.width as i64 + 1,
                Violation::ZeroArea => entries[0].bbox.y_max = entries[0].bbox.y_min,
                Violation::DuplicateId => duplicates.push(record.clone()),
            }
            bad.insert(i);
        }
        let injected = bad.len();
        records.extend(duplicates.iter().cloned());
        let report = validate_records(records.clone(), ValidationMode::Permissive).unwrap();
        let flagged: HashSet<&str> = report.issues.iter().map(|i| i.image_id.as_str()).collect();
        let expected_ids: HashSet<String> = bad.iter().map(|&i| records[i].meta.image_id.clone()).collect();
        prop_assert_eq!(flagged.len(), injected);
        prop_assert!(expected_ids.iter().all(|id| flagged.contains(id.as_str())));
        let dup_ids: HashSet<&str> = duplicates.iter().map(|r| r.image_id()).collect();
        prop_assert_eq!(report.accepted.len(), n - injected + dup_ids.len());
        let strict = validate_records(records, ValidationMode::Strict);
        prop_assert!(matches!(strict, Err(Error::Validation(_))));
    }

    #[test]
    fn corpus_invariants(seed in 0u64..10_000, n in 1usize..25, per_image in 1usize..8) {
        let mut records = detection_records(seed, n);
        records.extend(classification_records(seed + 1, n));
        records.extend(caption_records(seed + 2, n));
        let options = SynthOptions { seed, captions_per_image: per_image };
        let mut first = Vec::new();
        let stats = synthesize_corpus(&records, options, &RuleVerifier, &mut first).unwrap();
        let mut second = Vec::new();
        in_pool(3, || synthesize_corpus(&records, options, &RuleVerifier, &mut second).unwrap());
        prop_assert_eq!(&first, &second);
        prop_assert_eq!(stats.rejected, 0);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        synthesize_corpus_to_file(&records, options, &RuleVerifier, &path).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), first);

        let pairs = read_pairs(&path).unwrap();
        let mut per: BTreeMap<&str, usize> = BTreeMap::new();
        for p in &pairs {
            prop_assert!(verify_text(&p.caption_text).is_accept());
            *per.entry(p.image_id.as_str()).or_default() += 1;
        }
        for r in &records {
            let count = per.get(r.image_id()).copied().unwrap_or(0);
            match (&r.kind, r.meta.split) {
                (_, Split::Test) => prop_assert_eq!(count, 1),
                (AnnotationKind::Caption(texts), _) => prop_assert_eq!(count, texts.len()),
                _ => prop_assert_eq!(count, per_image),
            }
        }
        let native = pairs.iter().filter(|p| p.template_kind == CaptionKind::Native).count();
        let available: usize = records
            .iter()
            .map(|r| match &r.kind {
                AnnotationKind::Caption(t) => t.len(),
                _ => 0,
            })
            .sum();
        prop_assert!(native <= available);
    }

    #[test]
    fn embeddings_are_unit_norm_and_stable(seed in 0u64..10_000, rows in 1usize..20) {
        let config = ModelConfig { image_dim: 6, token_dim: 5, hidden_dim: 9, embed_dim: 4, depth: 2 };
        let params = EncoderParams::init(&config, 12, 0.07, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DenseMatrix::from_vec(rows, 6, (0..rows * 6).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let tokens: Vec<Vec<usize>> =
            (0..rows).map(|_| (0..rng.gen_range(1..6)).map(|_| rng.gen_range(0..12)).collect()).collect();
        let zi = encode_images(&x, &params).unwrap();
        let zt = encode_texts(&tokens, &params).unwrap();
        for z in [&zi, &zt] {
            for r in 0..rows {
                let norm = z.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!((norm - 1.0).abs() < 1e-9);
            }
            let sim = cosine_similarity_matrix(z, z).unwrap();
            for r in 0..rows {
                prop_assert!((sim.get(r, r) - 1.0).abs() < 1e-9);
            }
        }
        let again = in_pool(2, || encode_images(&x, &params).unwrap());
        prop_assert_eq!(zi.values(), again.values());
        let zt_again = encode_texts(&tokens, &params).unwrap();
        prop_assert_eq!(zt.values(), zt_again.values());
    }

    #[test]
    fn zero_shot_ignores_uniform_rescaling(seed in 0u64..10_000, scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut unit = |rows: usize| {
            let mut m = DenseMatrix::from_vec(rows, 4, (0..rows * 4).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            for r in 0..rows {
                let n = m.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                m.row_mut(r).iter_mut().for_each(|v| *v /= n);
            }
            m
        };
        let images = unit(20);
        let classes = unit(5);
        let mut scaled = classes.clone();
        scaled.map_inplace(|v| v * scale);
        prop_assert_eq!(zero_shot_predict(&images, &classes).unwrap(), zero_shot_predict(&images, &scaled).unwrap());
    }

    #[test]
    fn binary_accuracy_complement(labels in prop::collection::vec(0u8..2, 1..100), flips in prop::collection::vec(any::<bool>(), 100)) {
        let preds: Vec<u8> = labels.iter().zip(&flips).map(|(&l, &f)| if f { 1 - l } else { l }).collect();
        let complement: Vec<u8> = preds.iter().map(|&p| 1 - p).collect();
        let a = accuracy(&preds, &labels).unwrap();
        let b = accuracy(&complement, &labels).unwrap();
        prop_assert!((a - (1.0 - b)).abs() < 1e-12);
    }
}

#[test]
fn training_is_bit_identical_across_threads() {
    let bench = generate(&SyntheticConfig { train_pairs: 256, ..SyntheticConfig::default() }).unwrap();
    let corpus = bench.train_corpus().unwrap();
    let config = TrainConfig { warmup_steps: 4, ..common::synthetic_config(11, 4) };
    let bytes = |threads| {
        in_pool(threads, || train_stage(&corpus, &config, None).unwrap().checkpoint.to_bytes().unwrap())
    };
    let one = bytes(1);
    assert_eq!(one, bytes(1));
    assert_eq!(one, bytes(4));
}
