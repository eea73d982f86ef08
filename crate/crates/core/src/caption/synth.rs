use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::geometry::{assign_region, relative_direction, RegionLabel};
use super::phrase::summarize_objects;
use super::templates::{self, fill_template, Template};
use super::{Caption, CaptionKind, NATIVE_TEMPLATE_ID};
use crate::fingerprint::sub_seed;
use crate::ingest::{AnnotationKind, AnnotationRecord, DetectionEntry, Split};
use crate::{Error, Result};

pub const DEFAULT_CAPTIONS_PER_IMAGE: usize = 5;

/// Per-record generator seeded from `(seed, image_id)`, so synthesis does not
/// depend on record order or thread scheduling.
pub fn record_rng(seed: u64, image_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, image_id))
}

fn caption(template: &Template, slots: &HashMap<&str, String>, image_id: &str) -> Result<Caption> {
    Ok(Caption {
        text: fill_template(template, slots)?,
        template_id: template.id.to_string(),
        kind: template.kind.into(),
        image_id: image_id.to_string(),
    })
}

/// Cycles through independent random permutations of `pool`.
struct Deck<'a, T> {
    pool: &'a [T],
    order: Vec<usize>,
    next: usize,
}

impl<'a, T> Deck<'a, T> {
    fn new(pool: &'a [T]) -> Self {
        Self { pool, order: Vec::new(), next: 0 }
    }

    fn draw<R: Rng>(&mut self, rng: &mut R) -> &'a T {
        if self.next == self.order.len() {
            self.order = (0..self.pool.len()).collect();
            self.order.shuffle(rng);
            self.next = 0;
        }
        let item = &self.pool[self.order[self.next]];
        self.next += 1;
        item
    }
}

fn class_slot(value: String) -> HashMap<&'static str, String> {
    HashMap::from([("class", value)])
}

#[derive(Clone, Copy)]
enum Slot {
    ClassLevel,
    Absolute,
    Relative,
}

/// Detection mix for five captions: two class-level, two absolute-region,
/// one relative-region. Longer or shorter requests repeat or truncate it.
const DETECTION_MIX: [Slot; 5] = [Slot::ClassLevel, Slot::ClassLevel, Slot::Absolute, Slot::Absolute, Slot::Relative];

fn detection_captions<R: Rng>(
    record: &AnnotationRecord,
    entries: &[DetectionEntry],
    rng: &mut R,
    n: usize,
) -> Result<Vec<Caption>> {
    let id = record.image_id();
    let (w, h) = (record.meta.width, record.meta.height);
    let pool = templates::class_level_pool();
    let mut class_deck = Deck::new(&pool);
    let mut abs_deck = Deck::new(&templates::ABSOLUTE);
    let mut rel_deck = Deck::new(&templates::RELATIVE);

    let everything = summarize_objects(entries.iter().map(|e| e.class_label.as_str()));

    let regions: Vec<RegionLabel> = entries.iter().map(|e| assign_region(&e.bbox, w, h)).collect();
    let mut groups: BTreeMap<RegionLabel, Vec<&str>> = BTreeMap::new();
    for (entry, region) in entries.iter().zip(&regions) {
        groups.entry(*region).or_default().push(entry.class_label.as_str());
    }
    let mut group_order: Vec<(RegionLabel, String)> =
        groups.iter().map(|(r, labels)| (*r, summarize_objects(labels.iter().copied()))).collect();
    group_order.shuffle(rng);

    let mut pairs = Vec::new();
    for i in 0..entries.len() {
        for j in (i + 1)..entries.len() {
            if entries[i].bbox.doubled_center() != entries[j].bbox.doubled_center() {
                pairs.push((i, j));
            }
        }
    }

    let mut out = Vec::with_capacity(n);
    let mut absolute_used = 0usize;
    for k in 0..n {
        let slot = match DETECTION_MIX[k % DETECTION_MIX.len()] {
            Slot::Relative if pairs.is_empty() => Slot::Absolute,
            other => other,
        };
        match slot {
            Slot::ClassLevel => {
                let t = *class_deck.draw(rng);
                out.push(caption(t, &class_slot(everything.clone()), id)?);
            }
            Slot::Absolute => {
                let (region, phrase) = &group_order[absolute_used % group_order.len()];
                absolute_used += 1;
                let slots =
                    HashMap::from([("classes", phrase.clone()), ("location", region.phrase().to_string())]);
                out.push(caption(abs_deck.draw(rng), &slots, id)?);
            }
            Slot::Relative => {
                let (i, j) = pairs[rng.gen_range(0..pairs.len())];
                let (a, b) = if rng.gen::<bool>() { (i, j) } else { (j, i) };
                let direction = relative_direction(&entries[a].bbox, &entries[b].bbox)?;
                let slots = HashMap::from([
                    ("class1", entries[a].class_label.clone()),
                    ("location1", regions[a].phrase().to_string()),
                    ("relative_direction", direction.phrase().to_string()),
                    ("class2", entries[b].class_label.clone()),
                    ("location2", regions[b].phrase().to_string()),
                ]);
                out.push(caption(rel_deck.draw(rng), &slots, id)?);
            }
        }
    }
    Ok(out)
}

/// Captions for one validated record.
///
/// Classification records draw `n` class-level templates without replacement
/// (a fresh permutation starts once all ten are used). Detection records follow
/// the 2/2/1 class-level, absolute, relative mix; without a non-coincident
/// target pair the relative caption becomes another absolute one. Caption
/// records return their native texts and ignore `n`.
pub fn synthesize_captions<R: Rng>(record: &AnnotationRecord, rng: &mut R, n: usize) -> Result<Vec<Caption>> {
    if n == 0 {
        return Err(Error::InvalidInput("captions per image must be at least 1".into()));
    }
    let id = record.image_id();
    match &record.kind {
        AnnotationKind::Classification(label) => {
            let pool = templates::class_level_pool();
            let mut deck = Deck::new(&pool);
            (0..n).map(|_| caption(deck.draw(rng), &class_slot(label.clone()), id)).collect()
        }
        AnnotationKind::Detection(entries) => {
            if entries.is_empty() {
                return Err(Error::InvalidInput(format!("{id}: detection record without boxes")));
            }
            detection_captions(record, entries, rng, n)
        }
        AnnotationKind::Caption(texts) => Ok(texts
            .iter()
            .map(|t| Caption {
                text: t.clone(),
                template_id: NATIVE_TEMPLATE_ID.to_string(),
                kind: CaptionKind::Native,
                image_id: id.to_string(),
            })
            .collect()),
    }
}

/// Captions as they enter the pair corpus: test images keep exactly one
/// caption, picked with the record's own generator.
pub fn corpus_captions(record: &AnnotationRecord, seed: u64, n: usize) -> Result<Vec<Caption>> {
    let mut rng = record_rng(seed, record.image_id());
    let mut captions = synthesize_captions(record, &mut rng, n)?;
    if record.meta.split == Split::Test && captions.len() > 1 {
        let pick = rng.gen_range(0..captions.len());
        captions = vec![captions.swap_remove(pick)];
    }
    Ok(captions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caption::verify_text;
    use crate::ingest::{BoundingBox, ImageMeta};

    fn meta(id: &str, split: Split) -> ImageMeta {
        ImageMeta {
            image_id: id.into(),
            width: 100,
            height: 100,
            source: "src".into(),
            split,
            feature_ref: id.into(),
        }
    }

    fn detection(boxes: &[(&str, BoundingBox)]) -> AnnotationRecord {
        AnnotationRecord {
            meta: meta("det_1", Split::Train),
            kind: AnnotationKind::Detection(
                boxes.iter().map(|(c, b)| DetectionEntry { class_label: c.to_string(), bbox: *b }).collect(),
            ),
        }
    }

    #[test]
    fn classification_gets_five_distinct_templates() {
        let rec = AnnotationRecord {
            meta: meta("mstar_1", Split::Train),
            kind: AnnotationKind::Classification("T-72".into()),
        };
        let caps = synthesize_captions(&rec, &mut record_rng(1, "x"), 5).unwrap();
        assert_eq!(caps.len(), 5);
        let mut ids: Vec<_> = caps.iter().map(|c| c.template_id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 5);
        assert!(caps.iter().all(|c| c.text.contains("T-72") && verify_text(&c.text).is_accept()));
    }

    #[test]
    fn more_captions_than_templates_reuses_pool() {
        let rec = AnnotationRecord {
            meta: meta("m", Split::Train),
            kind: AnnotationKind::Classification("tank".into()),
        };
        let caps = synthesize_captions(&rec, &mut record_rng(3, "m"), 23).unwrap();
        assert_eq!(caps.len(), 23);
        let first_ten: std::collections::HashSet<_> = caps[..10].iter().map(|c| &c.template_id).collect();
        assert_eq!(first_ten.len(), 10);
    }

    #[test]
    fn single_target_has_no_relative_caption() {
        let rec = detection(&[("ship", BoundingBox::new(10, 10, 30, 30))]);
        let caps = synthesize_captions(&rec, &mut record_rng(5, "d"), 5).unwrap();
        assert_eq!(caps.len(), 5);
        assert!(caps.iter().all(|c| c.kind != CaptionKind::RelativeRegion));
        assert_eq!(caps.iter().filter(|c| c.kind == CaptionKind::AbsoluteRegion).count(), 3);
        assert!(caps[2].text.contains("one ship") && caps[2].text.contains("upper left"), "{}", caps[2].text);
    }

    #[test]
    fn two_targets_mix() {
        let rec = detection(&[
            ("ship", BoundingBox::new(5, 5, 20, 20)),
            ("bridge", BoundingBox::new(60, 70, 95, 95)),
        ]);
        let caps = synthesize_captions(&rec, &mut record_rng(9, "d"), 5).unwrap();
        let kinds: Vec<_> = caps.iter().map(|c| c.kind).collect();
        assert!(matches!(kinds[0], CaptionKind::General | CaptionKind::Complex));
        assert!(matches!(kinds[1], CaptionKind::General | CaptionKind::Complex));
        assert_eq!(&kinds[2..], &[CaptionKind::AbsoluteRegion, CaptionKind::AbsoluteRegion, CaptionKind::RelativeRegion]);
        assert!(caps[0].text.contains("one bridge and one ship"));
        let rel = &caps[4].text;
        assert!(
            rel.contains("the ship in the upper left") && rel.contains("above the bridge in the bottom right")
                || rel.contains("the bridge in the bottom right") && rel.contains("below the ship in the upper left"),
            "{rel}"
        );
        // the two absolute captions cover both regions
        assert!(caps[2..4].iter().any(|c| c.text.contains("upper left")));
        assert!(caps[2..4].iter().any(|c| c.text.contains("bottom right")));
        assert!(caps.iter().all(|c| verify_text(&c.text).is_accept()));
    }

    #[test]
    fn coincident_targets_fall_back_to_absolute() {
        let b = BoundingBox::new(10, 10, 30, 30);
        let rec = detection(&[("ship", b), ("ship", b)]);
        let caps = synthesize_captions(&rec, &mut record_rng(2, "d"), 5).unwrap();
        assert!(caps.iter().all(|c| c.kind != CaptionKind::RelativeRegion));
    }

    #[test]
    fn native_captions_pass_through() {
        let rec = AnnotationRecord {
            meta: meta("cap", Split::Train),
            kind: AnnotationKind::Caption(vec!["One.".into(), "Two.".into(), "Three.".into()]),
        };
        let caps = synthesize_captions(&rec, &mut record_rng(0, "c"), 5).unwrap();
        let texts: Vec<_> = caps.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, ["One.", "Two.", "Three."]);
        assert!(caps.iter().all(|c| c.kind == CaptionKind::Native));
    }

    #[test]
    fn test_split_keeps_one_caption() {
        let rec = AnnotationRecord {
            meta: meta("t", Split::Test),
            kind: AnnotationKind::Classification("tank".into()),
        };
        assert_eq!(corpus_captions(&rec, 11, 5).unwrap().len(), 1);
    }

    #[test]
    fn deterministic_given_seed() {
        let rec = detection(&[
            ("ship", BoundingBox::new(5, 5, 20, 20)),
            ("ship", BoundingBox::new(40, 5, 60, 20)),
            ("tank", BoundingBox::new(60, 70, 95, 95)),
        ]);
        assert_eq!(corpus_captions(&rec, 42, 5).unwrap(), corpus_captions(&rec, 42, 5).unwrap());
        assert_ne!(corpus_captions(&rec, 42, 5).unwrap(), corpus_captions(&rec, 43, 5).unwrap());
    }

    #[test]
    fn zero_captions_rejected() {
        let rec = detection(&[("ship", BoundingBox::new(5, 5, 20, 20))]);
        assert!(synthesize_captions(&rec, &mut record_rng(0, "d"), 0).is_err());
    }
}
