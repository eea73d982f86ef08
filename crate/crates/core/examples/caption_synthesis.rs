//! Turns a detection record and a classification record into templated
//! captions, then writes a small pair corpus and prints its statistics.

use sarclip::caption::{corpus_captions, synthesize_corpus, RuleVerifier, SynthOptions};
use sarclip::ingest::{AnnotationKind, AnnotationRecord, BoundingBox, DetectionEntry, ImageMeta, Split};

fn meta(id: &str, source: &str, split: Split) -> ImageMeta {
    ImageMeta {
        image_id: id.into(),
        width: 512,
        height: 512,
        source: source.into(),
        split,
        feature_ref: id.into(),
    }
}

fn main() -> sarclip::Result<()> {
    let harbor = AnnotationRecord {
        meta: meta("sardet-0001", "SARDet-100K", Split::Train),
        kind: AnnotationKind::Detection(vec![
            DetectionEntry { class_label: "ship".into(), bbox: BoundingBox::from_xywh(40, 30, 60, 25) },
            DetectionEntry { class_label: "ship".into(), bbox: BoundingBox::from_xywh(90, 60, 50, 20) },
            DetectionEntry { class_label: "harbor".into(), bbox: BoundingBox::from_xywh(300, 320, 150, 120) },
        ]),
    };
    let tank = AnnotationRecord {
        meta: meta("mstar-0001", "MSTAR", Split::Test),
        kind: AnnotationKind::Classification("T-72".into()),
    };

    for record in [&harbor, &tank] {
        println!("{}:", record.image_id());
        for c in corpus_captions(record, 42, 5)? {
            println!("  [{:<8} {:?}] {}", c.template_id, c.kind, c.text);
        }
    }

    let mut jsonl = Vec::new();
    let stats = synthesize_corpus(&[harbor, tank], SynthOptions { seed: 42, ..SynthOptions::default() }, &RuleVerifier, &mut jsonl)?;
    println!("\n{} images, {} captions, {} rejected", stats.total_images, stats.total_captions, stats.rejected);
    for (source, s) in &stats.per_source {
        println!("  {source}: {} images, {} captions", s.images, s.captions);
    }
    println!("first line: {}", String::from_utf8_lossy(&jsonl).lines().next().unwrap_or(""));
    Ok(())
}
