//! Annotation manifests: parsing, validation and canonical re-serialization.
//!
//! Three manifest kinds are understood:
//!
//! - detection: a COCO-style JSON subset (`images` + `annotations`, bbox as `[x, y, w, h]`)
//! - classification: CSV with at least `image_id,class,split`
//! - caption: CSV with at least `image_id,caption,split`, one row per caption
//!
//! Records always come back sorted by `image_id`.

mod detection;
mod tabular;
mod types;
mod validate;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use detection::{read_detection_manifest, write_detection_manifest};
pub use tabular::{
    read_caption_manifest, read_classification_manifest, write_caption_manifest,
    write_classification_manifest,
};
pub use types::{AnnotationKind, AnnotationRecord, BoundingBox, DetectionEntry, ImageMeta, Split};
pub use validate::{validate_records, SourceCounts, ValidationMode, ValidationReport};

use crate::{Error, Result};

/// Parses a detection manifest and validates it strictly.
pub fn parse_detection_manifest(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    strict(read_detection_manifest(path)?)
}

/// Parses a classification manifest and validates it strictly.
pub fn parse_classification_manifest(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    strict(read_classification_manifest(path)?)
}

/// Parses a caption manifest and validates it strictly.
pub fn parse_caption_manifest(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    strict(read_caption_manifest(path)?)
}

fn strict(records: Vec<AnnotationRecord>) -> Result<Vec<AnnotationRecord>> {
    Ok(validate_records(records, ValidationMode::Strict)?.accepted)
}

/// Manifest flavour, inferred from the file contents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifestKind {
    Detection,
    Classification,
    Caption,
}

/// Detects the manifest kind: `.json` files are detection manifests, CSV files
/// are told apart by a `class` or `caption` header column.
pub fn detect_manifest_kind(path: &Path) -> Result<ManifestKind> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => Ok(ManifestKind::Detection),
        Some("csv") => {
            let mut reader = csv::Reader::from_path(path)
                .map_err(|e| Error::parse(path, e.to_string()))?;
            let headers = reader.headers().map_err(|e| Error::parse(path, e.to_string()))?;
            let has = |name: &str| headers.iter().any(|h| h.trim() == name);
            if has("caption") {
                Ok(ManifestKind::Caption)
            } else if has("class") {
                Ok(ManifestKind::Classification)
            } else {
                Err(Error::parse(path, "csv header has neither a `class` nor a `caption` column"))
            }
        }
        _ => Err(Error::parse(path, "unsupported manifest extension (expected .json or .csv)")),
    }
}

/// Reads one manifest of any kind without validating it.
pub fn read_manifest(path: &Path) -> Result<Vec<AnnotationRecord>> {
    match detect_manifest_kind(path)? {
        ManifestKind::Detection => read_detection_manifest(path),
        ManifestKind::Classification => read_classification_manifest(path),
        ManifestKind::Caption => read_caption_manifest(path),
    }
}

/// Lists the manifest files (`*.json`, `*.csv`) directly inside `dir`, sorted by name.
pub fn manifest_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| Error::io(format!("reading manifest dir {}", dir.display()), e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io("reading manifest dir entry", e))?.path();
        let ext = path.extension().and_then(|e| e.to_str());
        if path.is_file() && matches!(ext, Some("json") | Some("csv")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Reads every manifest in a directory (in parallel, one task per file) and
/// validates the union. Output order is by `image_id` regardless of thread count.
pub fn load_manifest_dir(dir: &Path, mode: ValidationMode) -> Result<ValidationReport> {
    let files = manifest_files(dir)?;
    let parsed: Vec<Vec<AnnotationRecord>> =
        files.par_iter().map(|p| read_manifest(p)).collect::<Result<_>>()?;
    let mut records: Vec<AnnotationRecord> = parsed.into_iter().flatten().collect();
    // stable: duplicates across files keep file order, so the later one is flagged
    records.sort_by(|a, b| a.meta.image_id.cmp(&b.meta.image_id));
    validate_records(records, mode)
}

/// Default `source` name for a manifest: its file name up to the first dot.
pub(crate) fn source_from_path(path: &Path) -> String {
    path.file_name()
        .and_then(|n| n.to_str())
        .and_then(|n| n.split('.').next())
        .unwrap_or("unknown")
        .to_string()
}
