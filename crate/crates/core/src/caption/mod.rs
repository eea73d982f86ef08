//! Templated caption synthesis and the image-caption pair corpus.
//!
//! Classification images get class-level captions from the ten general and
//! complex templates. Detection images additionally get captions placing
//! targets in one of five regions and relating pairs of targets by direction.
//! Caption-dataset images keep their native captions.

mod corpus;
mod geometry;
mod phrase;
mod synth;
pub mod templates;
mod verify;

use serde::{Deserialize, Serialize};

pub use corpus::{
    export_pairs, read_pairs, synthesize_corpus, synthesize_corpus_to_file, write_pairs, CorpusStats,
    PairRecord, SourceStats, SynthOptions,
};
pub use geometry::{assign_region, iou, relative_direction, Direction, RegionLabel};
pub use phrase::{count_word, pluralize, summarize_objects};
pub use synth::{corpus_captions, record_rng, synthesize_captions, DEFAULT_CAPTIONS_PER_IMAGE};
pub use templates::{fill_template, Template, TemplateKind};
pub use verify::{verify_caption, verify_text, CaptionVerifier, RuleVerifier, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionKind {
    General,
    Complex,
    AbsoluteRegion,
    RelativeRegion,
    /// Passed through from a caption dataset.
    Native,
}

impl CaptionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CaptionKind::General => "general",
            CaptionKind::Complex => "complex",
            CaptionKind::AbsoluteRegion => "absolute_region",
            CaptionKind::RelativeRegion => "relative_region",
            CaptionKind::Native => "native",
        }
    }
}

impl From<TemplateKind> for CaptionKind {
    fn from(kind: TemplateKind) -> Self {
        match kind {
            TemplateKind::General => CaptionKind::General,
            TemplateKind::Complex => CaptionKind::Complex,
            TemplateKind::AbsoluteRegion => CaptionKind::AbsoluteRegion,
            TemplateKind::RelativeRegion => CaptionKind::RelativeRegion,
        }
    }
}

/// Template id recorded for native captions.
pub const NATIVE_TEMPLATE_ID: &str = "native";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub text: String,
    pub template_id: String,
    pub kind: CaptionKind,
    pub image_id: String,
}
