use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{AnnotationKind, AnnotationRecord, BoundingBox, DetectionEntry, ImageMeta, Split};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum IdValue {
    Text(String),
    Number(u64),
}

impl IdValue {
    fn into_string(self) -> String {
        match self {
            IdValue::Text(s) => s,
            IdValue::Number(n) => n.to_string(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ImageEntry {
    id: IdValue,
    width: u32,
    height: u32,
    split: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationEntry {
    image_id: IdValue,
    category: String,
    bbox: [f64; 4],
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectionDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
    images: Vec<ImageEntry>,
    annotations: Vec<AnnotationEntry>,
}

fn pixel(path: &Path, field: &str, value: f64) -> Result<i64> {
    if !value.is_finite() || value.fract() != 0.0 || value.abs() > 1e12 {
        return Err(Error::parse(path, format!("{field}: expected an integer pixel value, got {value}")));
    }
    Ok(value as i64)
}

/// Reads a detection manifest without validating record invariants.
///
/// Structural problems (bad JSON, missing fields, annotations that reference an
/// unknown image, non-integral coordinates) are parse errors.
pub fn read_detection_manifest(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let doc: DetectionDocument = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::parse(path, e.to_string()))?;

    let default_source = doc.source.clone().unwrap_or_else(|| super::source_from_path(path));

    // duplicate ids are kept so that validation can report them
    let mut records: Vec<AnnotationRecord> = Vec::with_capacity(doc.images.len());
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for (i, image) in doc.images.into_iter().enumerate() {
        let image_id = image.id.into_string();
        let split: Split = image
            .split
            .parse()
            .map_err(|e| Error::parse(path, format!("images[{i}].split: {e}")))?;
        index.entry(image_id.clone()).or_insert(records.len());
        records.push(AnnotationRecord {
            meta: ImageMeta {
                feature_ref: image.feature_ref.unwrap_or_else(|| image_id.clone()),
                image_id,
                width: image.width,
                height: image.height,
                source: image.source.unwrap_or_else(|| default_source.clone()),
                split,
            },
            kind: AnnotationKind::Detection(Vec::new()),
        });
    }

    for (i, ann) in doc.annotations.into_iter().enumerate() {
        let image_id = ann.image_id.into_string();
        let slot = *index.get(&image_id).ok_or_else(|| {
            Error::parse(path, format!("annotations[{i}].image_id: unknown image `{image_id}`"))
        })?;
        let [x, y, w, h] = ann.bbox;
        let field = format!("annotations[{i}].bbox");
        let bbox = BoundingBox::from_xywh(
            pixel(path, &field, x)?,
            pixel(path, &field, y)?,
            pixel(path, &field, w)?,
            pixel(path, &field, h)?,
        );
        if let AnnotationKind::Detection(entries) = &mut records[slot].kind {
            entries.push(DetectionEntry { class_label: ann.category, bbox });
        }
    }

    records.sort_by(|a, b| a.meta.image_id.cmp(&b.meta.image_id));
    Ok(records)
}

/// Writes detection records in the canonical manifest form read by
/// [`read_detection_manifest`]. Non-detection records are rejected.
pub fn write_detection_manifest(path: impl AsRef<Path>, records: &[AnnotationRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut images = Vec::with_capacity(records.len());
    let mut annotations = Vec::new();
    for record in records {
        let AnnotationKind::Detection(entries) = &record.kind else {
            return Err(Error::InvalidInput(format!(
                "{}: only detection records can be written to a detection manifest",
                record.meta.image_id
            )));
        };
        let m = &record.meta;
        images.push(ImageEntry {
            id: IdValue::Text(m.image_id.clone()),
            width: m.width,
            height: m.height,
            split: m.split.as_str().to_string(),
            feature_ref: Some(m.feature_ref.clone()),
            source: Some(m.source.clone()),
        });
        for entry in entries {
            let b = entry.bbox;
            annotations.push(AnnotationEntry {
                image_id: IdValue::Text(m.image_id.clone()),
                category: entry.class_label.clone(),
                bbox: [b.x_min as f64, b.y_min as f64, b.width() as f64, b.height() as f64],
            });
        }
    }
    let doc = DetectionDocument { source: None, images, annotations };
    let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| Error::Format(e.to_string()))?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_detection_manifest;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn two_ships_one_image() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "sardet.json",
            r#"{"images":[{"id":"a","width":100,"height":100,"split":"train"}],
                "annotations":[{"image_id":"a","category":"ship","bbox":[0,0,10,10]},
                               {"image_id":"a","category":"ship","bbox":[50,50,20,30]}]}"#,
        );
        let recs = parse_detection_manifest(&p).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].meta.source, "sardet");
        assert_eq!(recs[0].meta.feature_ref, "a");
        match &recs[0].kind {
            AnnotationKind::Detection(e) => {
                assert_eq!(e.len(), 2);
                assert_eq!(e[1].bbox, BoundingBox::new(50, 50, 70, 80));
            }
            other => panic!("unexpected kind {other:?}"),
        }
    }

    #[test]
    fn zero_width_box_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "d.json",
            r#"{"images":[{"id":"img_9","width":100,"height":100,"split":"train"}],
                "annotations":[{"image_id":"img_9","category":"ship","bbox":[50,50,0,30]}]}"#,
        );
        match parse_detection_manifest(&p) {
            Err(Error::Validation(issues)) => {
                assert_eq!(issues.len(), 1);
                assert_eq!(issues[0].image_id, "img_9");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_order_images_are_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "d.json",
            r#"{"images":[{"id":"c","width":9,"height":9,"split":"train"},
                          {"id":"a","width":9,"height":9,"split":"val"},
                          {"id":"b","width":9,"height":9,"split":"test"}],
                "annotations":[{"image_id":"a","category":"ship","bbox":[0,0,1,1]},
                               {"image_id":"b","category":"ship","bbox":[0,0,1,1]},
                               {"image_id":"c","category":"ship","bbox":[0,0,1,1]}]}"#,
        );
        let ids: Vec<_> = parse_detection_manifest(&p)
            .unwrap()
            .into_iter()
            .map(|r| r.meta.image_id)
            .collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn malformed_json_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.json", "{\"images\": [\n{\"id\": \"a\", \"width\": 9}\n]}");
        let err = read_detection_manifest(&p).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
        assert!(err.contains("height"), "{err}");
    }

    #[test]
    fn unknown_image_reference_names_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "d.json",
            r#"{"images":[],"annotations":[{"image_id":"x","category":"ship","bbox":[0,0,1,1]}]}"#,
        );
        let err = read_detection_manifest(&p).unwrap_err().to_string();
        assert!(err.contains("annotations[0].image_id"), "{err}");
    }

    #[test]
    fn fractional_coordinates_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "d.json",
            r#"{"images":[{"id":1,"width":9,"height":9,"split":"train"}],
                "annotations":[{"image_id":1,"category":"ship","bbox":[0.5,0,1,1]}]}"#,
        );
        assert!(matches!(read_detection_manifest(&p), Err(Error::Parse { .. })));
    }
}
