use std::collections::{BTreeMap, HashSet};

use super::types::{AnnotationKind, AnnotationRecord, Split};
use crate::error::Issue;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValidationMode {
    /// Any breach fails the whole input.
    #[default]
    Strict,
    /// Offending records are dropped and reported; the rest are accepted.
    Permissive,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SourceCounts {
    pub images: usize,
    /// Native captions carried by caption-kind records.
    pub native_captions: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub accepted: Vec<AnnotationRecord>,
    pub issues: Vec<Issue>,
    pub per_source: BTreeMap<String, SourceCounts>,
    pub per_split: BTreeMap<Split, usize>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

fn record_issues(record: &AnnotationRecord) -> Vec<String> {
    let mut out = Vec::new();
    let m = &record.meta;
    if m.image_id.trim().is_empty() {
        out.push("empty image_id".to_string());
    }
    if m.width == 0 || m.height == 0 {
        out.push(format!("image size {}x{} must be at least 1x1", m.width, m.height));
    }
    match &record.kind {
        AnnotationKind::Classification(label) => {
            if label.trim().is_empty() {
                out.push("empty class label".to_string());
            }
        }
        AnnotationKind::Detection(entries) => {
            if entries.is_empty() {
                out.push("detection record without boxes".to_string());
            }
            for (i, e) in entries.iter().enumerate() {
                if e.class_label.trim().is_empty() {
                    out.push(format!("box {i}: empty class label"));
                }
                if let Err(msg) = e.bbox.check_within(m.width, m.height) {
                    out.push(format!("box {i}: {msg}"));
                }
            }
        }
        AnnotationKind::Caption(texts) => {
            if texts.is_empty() {
                out.push("caption record without captions".to_string());
            }
            for (i, t) in texts.iter().enumerate() {
                if t.trim().is_empty() {
                    out.push(format!("caption {i} is empty or whitespace"));
                }
            }
        }
    }
    out
}

/// Checks record invariants and duplicate ids, and tallies per-source and
/// per-split counts over the accepted records.
///
/// Accepted records keep their input order. In strict mode any issue is
/// returned as [`Error::Validation`].
pub fn validate_records(records: Vec<AnnotationRecord>, mode: ValidationMode) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    let mut seen: HashSet<String> = HashSet::with_capacity(records.len());

    for record in records {
        let mut problems = record_issues(&record);
        if !seen.insert(record.meta.image_id.clone()) {
            problems.push(format!("duplicate image_id `{}`", record.meta.image_id));
        }
        if !problems.is_empty() {
            report.issues.extend(
                problems
                    .into_iter()
                    .map(|message| Issue { image_id: record.meta.image_id.clone(), message }),
            );
            continue;
        }
        let counts = report.per_source.entry(record.meta.source.clone()).or_default();
        counts.images += 1;
        if let AnnotationKind::Caption(texts) = &record.kind {
            counts.native_captions += texts.len();
        }
        *report.per_split.entry(record.meta.split).or_default() += 1;
        report.accepted.push(record);
    }

    if mode == ValidationMode::Strict && !report.issues.is_empty() {
        return Err(Error::Validation(report.issues));
    }
    Ok(report)
}
