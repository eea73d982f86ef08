use std::collections::BTreeMap;
use std::path::Path;

use super::types::{AnnotationKind, AnnotationRecord, ImageMeta, Split};
use crate::{Error, Result};

/// Width/height recorded for tabular rows that do not carry image dimensions.
pub const DEFAULT_IMAGE_SIDE: u32 = 128;

struct Columns {
    image_id: usize,
    value: usize,
    split: usize,
    width: Option<usize>,
    height: Option<usize>,
    feature_ref: Option<usize>,
    source: Option<usize>,
}

impl Columns {
    fn locate(path: &Path, headers: &csv::StringRecord, value_column: &str) -> Result<Self> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let require = |name: &str| {
            find(name).ok_or_else(|| Error::parse(path, format!("header: missing required column `{name}`")))
        };
        Ok(Self {
            image_id: require("image_id")?,
            value: require(value_column)?,
            split: require("split")?,
            width: find("width"),
            height: find("height"),
            feature_ref: find("feature_ref"),
            source: find("source"),
        })
    }
}

struct Row {
    meta: ImageMeta,
    value: String,
}

fn read_rows(path: &Path, value_column: &str) -> Result<Vec<Row>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| Error::parse(path, e.to_string()))?.clone();
    let cols = Columns::locate(path, &headers, value_column)?;
    let default_source = super::source_from_path(path);

    let mut rows = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| Error::parse(path, e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |idx: usize, name: &str| {
            record
                .get(idx)
                .map(str::to_string)
                .ok_or_else(|| Error::parse(path, format!("line {line}: missing field `{name}`")))
        };
        let dim = |idx: Option<usize>, name: &str| -> Result<u32> {
            match idx.and_then(|i| record.get(i)).map(str::trim) {
                None | Some("") => Ok(DEFAULT_IMAGE_SIDE),
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::parse(path, format!("line {line}: field `{name}`: not a pixel count: `{v}`"))),
            }
        };
        let optional = |idx: Option<usize>| {
            idx.and_then(|i| record.get(i)).map(str::trim).filter(|v| !v.is_empty()).map(str::to_string)
        };

        let image_id = get(cols.image_id, "image_id")?.trim().to_string();
        let split: Split = get(cols.split, "split")?
            .parse()
            .map_err(|e| Error::parse(path, format!("line {line}: field `split`: {e}")))?;
        rows.push(Row {
            meta: ImageMeta {
                feature_ref: optional(cols.feature_ref).unwrap_or_else(|| image_id.clone()),
                width: dim(cols.width, "width")?,
                height: dim(cols.height, "height")?,
                source: optional(cols.source).unwrap_or_else(|| default_source.clone()),
                image_id,
                split,
            },
            value: get(cols.value, value_column)?,
        });
    }
    Ok(rows)
}

/// Reads a classification manifest (`image_id,class,split[,width,height,feature_ref,source]`).
///
/// Unknown columns are ignored; missing `width`/`height` default to
/// [`DEFAULT_IMAGE_SIDE`]. Values are not validated here.
pub fn read_classification_manifest(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    let mut records: Vec<AnnotationRecord> = read_rows(path.as_ref(), "class")?
        .into_iter()
        .map(|row| AnnotationRecord {
            meta: row.meta,
            kind: AnnotationKind::Classification(row.value.trim().to_string()),
        })
        .collect();
    records.sort_by(|a, b| a.meta.image_id.cmp(&b.meta.image_id));
    Ok(records)
}

/// Reads a caption manifest: one row per caption, rows sharing an `image_id`
/// are grouped into one record in file order. Caption text is kept verbatim.
pub fn read_caption_manifest(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    let path = path.as_ref();
    let mut grouped: BTreeMap<String, AnnotationRecord> = BTreeMap::new();
    for row in read_rows(path, "caption")? {
        match grouped.get_mut(&row.meta.image_id) {
            Some(record) => {
                if record.meta != row.meta {
                    return Err(Error::parse(
                        path,
                        format!("image `{}`: rows disagree on split/size/feature_ref/source", row.meta.image_id),
                    ));
                }
                if let AnnotationKind::Caption(texts) = &mut record.kind {
                    texts.push(row.value);
                }
            }
            None => {
                grouped.insert(
                    row.meta.image_id.clone(),
                    AnnotationRecord { meta: row.meta, kind: AnnotationKind::Caption(vec![row.value]) },
                );
            }
        }
    }
    Ok(grouped.into_values().collect())
}

const HEADER: [&str; 7] = ["image_id", "", "split", "width", "height", "feature_ref", "source"];

fn write_rows<'a>(
    path: &Path,
    value_column: &str,
    rows: impl Iterator<Item = (&'a ImageMeta, &'a str)>,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    let mut header = HEADER;
    header[1] = value_column;
    writer.write_record(header).map_err(|e| Error::Format(e.to_string()))?;
    for (meta, value) in rows {
        let (w, h) = (meta.width.to_string(), meta.height.to_string());
        writer
            .write_record([
                meta.image_id.as_str(),
                value,
                meta.split.as_str(),
                &w,
                &h,
                &meta.feature_ref,
                &meta.source,
            ])
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn write_classification_manifest(path: impl AsRef<Path>, records: &[AnnotationRecord]) -> Result<()> {
    let mut rows = Vec::with_capacity(records.len());
    for r in records {
        match &r.kind {
            AnnotationKind::Classification(label) => rows.push((&r.meta, label.as_str())),
            _ => {
                return Err(Error::InvalidInput(format!(
                    "{}: not a classification record",
                    r.meta.image_id
                )))
            }
        }
    }
    write_rows(path.as_ref(), "class", rows.into_iter())
}

pub fn write_caption_manifest(path: impl AsRef<Path>, records: &[AnnotationRecord]) -> Result<()> {
    let mut rows = Vec::new();
    for r in records {
        match &r.kind {
            AnnotationKind::Caption(texts) => rows.extend(texts.iter().map(|t| (&r.meta, t.as_str()))),
            _ => return Err(Error::InvalidInput(format!("{}: not a caption record", r.meta.image_id))),
        }
    }
    write_rows(path.as_ref(), "caption", rows.into_iter())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_caption_manifest, parse_classification_manifest};

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn classification_row_and_ignored_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "mstar.csv", "image_id,class,split,azimuth\nimg_001,T-72,train,17\n");
        let recs = parse_classification_manifest(&p).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].kind, AnnotationKind::Classification("T-72".into()));
        assert_eq!(recs[0].meta.source, "mstar");
        assert_eq!(recs[0].meta.width, DEFAULT_IMAGE_SIDE);
    }

    #[test]
    fn empty_class_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "m.csv", "image_id,class,split\nimg_001,,train\n");
        assert!(matches!(parse_classification_manifest(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn duplicate_id_names_the_id() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "m.csv", "image_id,class,split\nimg_7,a,train\nimg_7,b,train\n");
        match parse_classification_manifest(&p) {
            Err(Error::Validation(issues)) => {
                assert_eq!(issues.len(), 1);
                assert_eq!(issues[0].image_id, "img_7");
                assert!(issues[0].message.contains("duplicate"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_required_column_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "m.csv", "image_id,class\nimg_1,a\n");
        let err = read_classification_manifest(&p).unwrap_err().to_string();
        assert!(err.contains("split"), "{err}");
    }

    #[test]
    fn captions_grouped_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "sarlang.csv",
            "image_id,caption,split\nx,First caption.,train\ny,Other.,train\nx,\"  Second, spaced.\",train\nx,Third.,train\n",
        );
        let recs = parse_caption_manifest(&p).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(
            recs[0].kind,
            AnnotationKind::Caption(vec!["First caption.".into(), "  Second, spaced.".into(), "Third.".into()])
        );
    }

    #[test]
    fn whitespace_caption_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "c.csv", "image_id,caption,split\nx,\"   \",train\n");
        assert!(matches!(parse_caption_manifest(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn caption_rows_with_conflicting_split() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "c.csv", "image_id,caption,split\nx,A.,train\nx,B.,test\n");
        assert!(matches!(read_caption_manifest(&p), Err(Error::Parse { .. })));
    }
}
