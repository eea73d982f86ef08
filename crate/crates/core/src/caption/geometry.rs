//! Box overlap, five-region placement and pairwise direction between targets.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ingest::BoundingBox;
use crate::{Error, Result};

fn intersection_area(a: &BoundingBox, b: &BoundingBox) -> i64 {
    let w = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let h = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    w.max(0) * h.max(0)
}

/// Intersection and union pixel counts.
fn overlap(a: &BoundingBox, b: &BoundingBox) -> (i64, i64) {
    let inter = intersection_area(a, b);
    (inter, a.area() + b.area() - inter)
}

/// Intersection over union of two boxes; 0 when they do not overlap.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (inter, union) = overlap(a, b);
    if union <= 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

/// One of the five image regions. Declaration order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RegionLabel {
    UpperLeft,
    UpperRight,
    BottomLeft,
    BottomRight,
    Center,
}

impl RegionLabel {
    pub const ALL: [RegionLabel; 5] = [
        RegionLabel::UpperLeft,
        RegionLabel::UpperRight,
        RegionLabel::BottomLeft,
        RegionLabel::BottomRight,
        RegionLabel::Center,
    ];

    pub fn phrase(self) -> &'static str {
        match self {
            RegionLabel::UpperLeft => "upper left",
            RegionLabel::UpperRight => "upper right",
            RegionLabel::BottomLeft => "bottom left",
            RegionLabel::BottomRight => "bottom right",
            RegionLabel::Center => "center",
        }
    }

    /// Region rectangle inside a `width` x `height` image.
    ///
    /// Quadrants split the image at `width / 2`, `height / 2` (integer
    /// division). Center is a `width / 2` x `height / 2` rectangle offset by
    /// half the remaining margin, so it overlaps all four quadrants.
    pub fn rect(self, width: u32, height: u32) -> BoundingBox {
        let (w, h) = (width as i64, height as i64);
        let (xm, ym) = (w / 2, h / 2);
        match self {
            RegionLabel::UpperLeft => BoundingBox::new(0, 0, xm, ym),
            RegionLabel::UpperRight => BoundingBox::new(xm, 0, w, ym),
            RegionLabel::BottomLeft => BoundingBox::new(0, ym, xm, h),
            RegionLabel::BottomRight => BoundingBox::new(xm, ym, w, h),
            RegionLabel::Center => {
                let (cw, ch) = (w / 2, h / 2);
                let (x0, y0) = ((w - cw) / 2, (h - ch) / 2);
                BoundingBox::new(x0, y0, x0 + cw, y0 + ch)
            }
        }
    }
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.phrase())
    }
}

/// The region with the highest IoU against `bbox`; ties go to the earliest
/// region in [`RegionLabel::ALL`]. Ratios are compared exactly.
pub fn assign_region(bbox: &BoundingBox, width: u32, height: u32) -> RegionLabel {
    let mut best = RegionLabel::UpperLeft;
    let (mut best_inter, mut best_union) = overlap(bbox, &best.rect(width, height));
    for region in &RegionLabel::ALL[1..] {
        let (inter, union) = overlap(bbox, &region.rect(width, height));
        // inter/union > best_inter/best_union, unions are positive for a valid box
        if (inter as i128) * (best_union as i128) > (best_inter as i128) * (union as i128) {
            best = *region;
            best_inter = inter;
            best_union = union;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Above,
    Below,
    Left,
    Right,
}

impl Direction {
    pub fn opposite(self) -> Direction {
        match self {
            Direction::Above => Direction::Below,
            Direction::Below => Direction::Above,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }

    /// Text placed in the `[relative_direction]` slot.
    pub fn phrase(self) -> &'static str {
        match self {
            Direction::Above => "above",
            Direction::Below => "below",
            Direction::Left => "to the left of",
            Direction::Right => "to the right of",
        }
    }
}

/// Where `a` sits relative to `b`, from the dominant axis of their center
/// offset. The vertical axis wins ties; y grows downward.
pub fn relative_direction(a: &BoundingBox, b: &BoundingBox) -> Result<Direction> {
    let (ax, ay) = a.doubled_center();
    let (bx, by) = b.doubled_center();
    let (dx, dy) = (ax - bx, ay - by);
    if dx == 0 && dy == 0 {
        return Err(Error::InvalidInput("coincident targets".to_string()));
    }
    Ok(if dy.abs() >= dx.abs() {
        if dy < 0 {
            Direction::Above
        } else {
            Direction::Below
        }
    } else if dx < 0 {
        Direction::Left
    } else {
        Direction::Right
    })
}
