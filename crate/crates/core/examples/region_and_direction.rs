//! Five-region placement by IoU and the relative direction between two targets.

use sarclip::caption::{assign_region, iou, relative_direction, RegionLabel};
use sarclip::ingest::BoundingBox;

fn main() -> sarclip::Result<()> {
    let (w, h) = (640, 480);
    for region in RegionLabel::ALL {
        println!("{:<12} {}", region.phrase(), region.rect(w, h));
    }

    let boxes = [
        BoundingBox::new(20, 20, 120, 90),
        BoundingBox::new(500, 30, 620, 100),
        BoundingBox::new(280, 200, 360, 280),
        BoundingBox::new(300, 300, 630, 470),
    ];
    println!();
    for b in &boxes {
        let region = assign_region(b, w, h);
        println!("{b} -> {} (IoU {:.3})", region.phrase(), iou(b, &region.rect(w, h)));
    }

    println!();
    for (a, b) in [(0, 1), (0, 3), (2, 3)] {
        let d = relative_direction(&boxes[a], &boxes[b])?;
        println!("box {a} is {} box {b}; box {b} is {} box {a}", d.phrase(), d.opposite().phrase());
    }
    Ok(())
}
