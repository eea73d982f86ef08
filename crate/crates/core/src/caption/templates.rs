//! Caption template pools and slot filling.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Slot names a template may use, written as `[name]` in template text.
pub const SLOT_NAMES: [&str; 8] = [
    "class",
    "classes",
    "location",
    "class1",
    "location1",
    "relative_direction",
    "class2",
    "location2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    General,
    Complex,
    AbsoluteRegion,
    RelativeRegion,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub id: &'static str,
    pub kind: TemplateKind,
    pub text: &'static str,
}

/// Simple descriptions. `g-01` is the canonical form used for zero-shot prompts.
pub const GENERAL: [Template; 5] = [
    Template { id: "g-01", kind: TemplateKind::General, text: "A SAR image of the [class]" },
    Template { id: "g-02", kind: TemplateKind::General, text: "A SAR image showing the [class]." },
    Template { id: "g-03", kind: TemplateKind::General, text: "A radar image of the [class]." },
    Template { id: "g-04", kind: TemplateKind::General, text: "This SAR image contains the [class]." },
    Template { id: "g-05", kind: TemplateKind::General, text: "A synthetic aperture radar image of the [class]." },
];

pub const COMPLEX: [Template; 5] = [
    Template {
        id: "c-01",
        kind: TemplateKind::Complex,
        text: "A SAR image reveals the distinct texture and structure of the [class].",
    },
    Template {
        id: "c-02",
        kind: TemplateKind::Complex,
        text: "The strong backscatter of the [class] stands out against the background of this SAR image.",
    },
    Template {
        id: "c-03",
        kind: TemplateKind::Complex,
        text: "In this SAR image, the [class] appears as bright scattering points with a clear outline.",
    },
    Template {
        id: "c-04",
        kind: TemplateKind::Complex,
        text: "A SAR image capturing the shape and scattering pattern of the [class].",
    },
    Template {
        id: "c-05",
        kind: TemplateKind::Complex,
        text: "The [class] can be recognized in this SAR image by its characteristic radar signature.",
    },
];

pub const ABSOLUTE: [Template; 3] = [
    Template {
        id: "a-01",
        kind: TemplateKind::AbsoluteRegion,
        text: "A SAR image of [classes] located in the [location] of the image.",
    },
    Template {
        id: "a-02",
        kind: TemplateKind::AbsoluteRegion,
        text: "In this SAR image, [classes] can be seen in the [location] of the image.",
    },
    Template {
        id: "a-03",
        kind: TemplateKind::AbsoluteRegion,
        text: "The [location] of this SAR image contains [classes].",
    },
];

pub const RELATIVE: [Template; 2] = [
    Template {
        id: "r-01",
        kind: TemplateKind::RelativeRegion,
        text: "In this SAR image, the [class1] in the [location1] are positioned [relative_direction] the [class2] in the [location2].",
    },
    Template {
        id: "r-02",
        kind: TemplateKind::RelativeRegion,
        text: "In this SAR image, the [class1] in the [location1] lies [relative_direction] the [class2] in the [location2].",
    },
];

/// General followed by complex templates: the ten class-level descriptions.
pub fn class_level_pool() -> Vec<&'static Template> {
    GENERAL.iter().chain(COMPLEX.iter()).collect()
}

pub fn all_templates() -> impl Iterator<Item = &'static Template> {
    GENERAL.iter().chain(&COMPLEX).chain(&ABSOLUTE).chain(&RELATIVE)
}

pub fn template_by_id(id: &str) -> Option<&'static Template> {
    all_templates().find(|t| t.id == id)
}

/// Slot names referenced by a template text, in order of appearance.
pub fn slots_in(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        match after.find(']') {
            Some(close) => {
                out.push(&after[..close]);
                rest = &after[close + 1..];
            }
            None => break,
        }
    }
    out
}

/// Substitutes every slot in `template` from `slots`.
pub fn fill_template(template: &Template, slots: &HashMap<&str, String>) -> Result<String> {
    let mut out = String::with_capacity(template.text.len() + 32);
    let mut rest = template.text;
    while let Some(open) = rest.find('[') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find(']')
            .ok_or_else(|| Error::InvalidInput(format!("template {}: unterminated slot", template.id)))?;
        let name = &after[..close];
        let value = slots
            .get(name)
            .ok_or_else(|| Error::InvalidInput(format!("template {}: missing slot `{name}`", template.id)))?;
        out.push_str(value);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}
