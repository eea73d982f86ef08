use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Axis-aligned box in pixel coordinates, origin top-left, y pointing down.
///
/// Intervals are half-open: the box covers columns `x_min..x_max` and rows
/// `y_min..y_max`, so `area` is exact integer arithmetic. Coordinates are
/// signed so out-of-image input can be represented and rejected by validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: i64,
    pub y_min: i64,
    pub x_max: i64,
    pub y_max: i64,
}

impl BoundingBox {
    pub const fn new(x_min: i64, y_min: i64, x_max: i64, y_max: i64) -> Self {
        Self { x_min, y_min, x_max, y_max }
    }

    /// Builds a box from the COCO `[x, y, w, h]` layout.
    pub const fn from_xywh(x: i64, y: i64, w: i64, h: i64) -> Self {
        Self::new(x, y, x + w, y + h)
    }

    pub fn width(&self) -> i64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> i64 {
        self.y_max - self.y_min
    }

    /// Pixel count; zero for degenerate or inverted boxes.
    pub fn area(&self) -> i64 {
        self.width().max(0) * self.height().max(0)
    }

    /// Center scaled by two, so it stays integral.
    pub fn doubled_center(&self) -> (i64, i64) {
        (self.x_min + self.x_max, self.y_min + self.y_max)
    }

    /// Checks positivity of extent and containment in a `width` x `height` image.
    pub fn check_within(&self, width: u32, height: u32) -> Result<(), String> {
        if self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(format!("zero-area or inverted box {self}"));
        }
        if self.x_min < 0 || self.y_min < 0 || self.x_max > width as i64 || self.y_max > height as i64 {
            return Err(format!("box {self} outside image {width}x{height}"));
        }
        Ok(())
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.x_min, self.y_min, self.x_max, self.y_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (expected train, val or test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    /// Dataset name the image came from.
    pub source: String,
    pub split: Split,
    /// Key of the image's row in a feature store.
    pub feature_ref: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionEntry {
    pub class_label: String,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnnotationKind {
    Classification(String),
    Detection(Vec<DetectionEntry>),
    /// Native captions, passed through verbatim.
    Caption(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub meta: ImageMeta,
    pub kind: AnnotationKind,
}

impl AnnotationRecord {
    pub fn image_id(&self) -> &str {
        &self.meta.image_id
    }
}
