//! Pair corpus: one JSON object per line with the fields
//! `image_id, source, split, feature_ref, caption_text, template_id, template_kind`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synth::{corpus_captions, DEFAULT_CAPTIONS_PER_IMAGE};
use super::verify::CaptionVerifier;
use super::{Caption, CaptionKind};
use crate::ingest::{AnnotationKind, AnnotationRecord, Split};
use crate::{Error, Result};

/// Highest tolerated share of captions rejected by the verifier.
pub const MAX_REJECTION_RATE: f64 = 0.01;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub image_id: String,
    pub source: String,
    pub split: Split,
    pub feature_ref: String,
    pub caption_text: String,
    pub template_id: String,
    pub template_kind: CaptionKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceStats {
    pub images: usize,
    pub captions: usize,
    /// True when the source's captions come from templates rather than a caption dataset.
    pub template_generated: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_source: BTreeMap<String, SourceStats>,
    pub per_split: BTreeMap<Split, SourceStats>,
    pub total_images: usize,
    pub total_captions: usize,
    pub rejected: usize,
}

impl CorpusStats {
    fn add(&mut self, record: &AnnotationRecord, emitted: usize, rejected: usize) {
        let template = !matches!(record.kind, AnnotationKind::Caption(_));
        let s = self.per_source.entry(record.meta.source.clone()).or_default();
        s.images += 1;
        s.captions += emitted;
        s.template_generated |= template;
        let sp = self.per_split.entry(record.meta.split).or_default();
        sp.images += 1;
        sp.captions += emitted;
        sp.template_generated |= template;
        self.total_images += 1;
        self.total_captions += emitted;
        self.rejected += rejected;
    }

    fn check_rejections(&self) -> Result<()> {
        let generated = self.total_captions + self.rejected;
        if generated > 0 && self.rejected as f64 / generated as f64 > MAX_REJECTION_RATE {
            return Err(Error::InvalidInput(format!(
                "caption verification rejected {} of {generated} captions (limit {:.0}%); the template pool is broken",
                self.rejected,
                MAX_REJECTION_RATE * 100.0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthOptions {
    pub seed: u64,
    pub captions_per_image: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self { seed: 0, captions_per_image: DEFAULT_CAPTIONS_PER_IMAGE }
    }
}

struct Encoded {
    bytes: Vec<u8>,
    emitted: usize,
    rejected: usize,
}

fn encode(record: &AnnotationRecord, captions: &[Caption], verifier: &dyn CaptionVerifier) -> Result<Encoded> {
    let mut bytes = Vec::with_capacity(captions.len() * 192);
    let (mut emitted, mut rejected) = (0, 0);
    for c in captions {
        if !verifier.verify(&c.text).is_accept() {
            rejected += 1;
            continue;
        }
        let pair = PairRecord {
            image_id: record.meta.image_id.clone(),
            source: record.meta.source.clone(),
            split: record.meta.split,
            feature_ref: record.meta.feature_ref.clone(),
            caption_text: c.text.clone(),
            template_id: c.template_id.clone(),
            template_kind: c.kind,
        };
        serde_json::to_writer(&mut bytes, &pair).map_err(|e| Error::Format(e.to_string()))?;
        bytes.push(b'\n');
        emitted += 1;
    }
    Ok(Encoded { bytes, emitted, rejected })
}

fn sorted_order(records: &[AnnotationRecord]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].meta.image_id.cmp(&records[b].meta.image_id));
    order
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("writing pair corpus", e)
}

/// Synthesizes and writes captions for `records`, ordered by `image_id`.
///
/// Records are processed in parallel chunks; each record uses its own
/// `(seed, image_id)` generator, so output bytes do not depend on the thread
/// count. Captions failing `verifier` are dropped and counted.
pub fn synthesize_corpus<W: Write>(
    records: &[AnnotationRecord],
    options: SynthOptions,
    verifier: &dyn CaptionVerifier,
    out: W,
) -> Result<CorpusStats> {
    let mut out = BufWriter::new(out);
    let mut stats = CorpusStats::default();
    let order = sorted_order(records);
    for chunk in order.chunks(CHUNK) {
        let encoded: Vec<Encoded> = chunk
            .par_iter()
            .map(|&i| {
                let record = &records[i];
                let captions = corpus_captions(record, options.seed, options.captions_per_image)?;
                encode(record, &captions, verifier)
            })
            .collect::<Result<_>>()?;
        for (&i, enc) in chunk.iter().zip(&encoded) {
            out.write_all(&enc.bytes).map_err(io_err)?;
            stats.add(&records[i], enc.emitted, enc.rejected);
        }
    }
    out.flush().map_err(io_err)?;
    stats.check_rejections()?;
    Ok(stats)
}

fn atomic_write<T>(path: &Path, body: impl FnOnce(File) -> Result<T>) -> Result<T> {
    let tmp = path.with_extension("tmp");
    let file = File::create(&tmp).map_err(|e| Error::io(format!("creating {}", tmp.display()), e))?;
    match body(file) {
        Ok(value) => {
            std::fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming to {}", path.display()), e))?;
            Ok(value)
        }
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}

/// [`synthesize_corpus`] into a file; the file only appears on success.
pub fn synthesize_corpus_to_file(
    records: &[AnnotationRecord],
    options: SynthOptions,
    verifier: &dyn CaptionVerifier,
    path: impl AsRef<Path>,
) -> Result<CorpusStats> {
    atomic_write(path.as_ref(), |f| synthesize_corpus(records, options, verifier, f))
}

/// Writes already-synthesized captions (`captions[i]` belongs to `records[i]`).
pub fn export_pairs(
    records: &[AnnotationRecord],
    captions: &[Vec<Caption>],
    verifier: &dyn CaptionVerifier,
    path: impl AsRef<Path>,
) -> Result<CorpusStats> {
    if records.len() != captions.len() {
        return Err(Error::Shape(format!("{} records but {} caption lists", records.len(), captions.len())));
    }
    atomic_write(path.as_ref(), |f| {
        let mut out = BufWriter::new(f);
        let mut stats = CorpusStats::default();
        for i in sorted_order(records) {
            let enc = encode(&records[i], &captions[i], verifier)?;
            out.write_all(&enc.bytes).map_err(io_err)?;
            stats.add(&records[i], enc.emitted, enc.rejected);
        }
        out.flush().map_err(io_err)?;
        stats.check_rejections()?;
        Ok(stats)
    })
}

pub fn write_pairs(path: impl AsRef<Path>, pairs: &[PairRecord]) -> Result<()> {
    atomic_write(path.as_ref(), |f| {
        let mut out = BufWriter::new(f);
        for p in pairs {
            serde_json::to_writer(&mut out, p).map_err(|e| Error::Format(e.to_string()))?;
            out.write_all(b"\n").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    })
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<PairRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: PairRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1)))?;
        pairs.push(pair);
    }
    Ok(pairs)
}
