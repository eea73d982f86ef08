#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;

use sarclip::embed::ModelConfig;
use sarclip::train::{TauMode, TrainConfig};

/// Stage-1 settings for the synthetic benchmark.
pub fn synthetic_config(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        model: ModelConfig { image_dim: 32, ..ModelConfig::default() },
        batch_size: 64,
        base_lr: 2e-3,
        epochs,
        warmup_steps: 20,
        seed,
        tau: TauMode::Fixed(0.07),
        ..TrainConfig::default()
    }
}

pub fn write_classification_csv(path: &Path, prefix: &str, classes: &[&str], images: usize) {
    let mut body = String::from("image_id,class,split,width,height\n");
    for i in 0..images {
        let class = classes[i % classes.len()];
        writeln!(body, "{prefix}-{i:06},{class},train,128,128").unwrap();
    }
    std::fs::write(path, body).unwrap();
}

/// Detection manifest where image `i` has `1 + i % max_targets` boxes.
pub fn write_detection_json(path: &Path, prefix: &str, classes: &[&str], images: usize, max_targets: usize) {
    let mut imgs = Vec::with_capacity(images);
    let mut anns = Vec::new();
    for i in 0..images {
        let id = format!("{prefix}-{i:06}");
        imgs.push(serde_json::json!({ "id": id, "width": 256, "height": 256, "split": "train" }));
        for t in 0..1 + i % max_targets {
            let x = (i * 37 + t * 61) % 200;
            let y = (i * 53 + t * 89) % 200;
            anns.push(serde_json::json!({
                "image_id": id,
                "category": classes[(i + t) % classes.len()],
                "bbox": [x, y, 16 + (i % 40), 16 + (t * 7 % 40)],
            }));
        }
    }
    let doc = serde_json::json!({ "images": imgs, "annotations": anns });
    std::fs::write(path, serde_json::to_vec(&doc).unwrap()).unwrap();
}

/// Caption manifest: the first `rich` images carry `rich_captions` captions, the rest `rest_captions`.
pub fn write_caption_csv(
    path: &Path,
    prefix: &str,
    images: usize,
    rich: usize,
    rich_captions: usize,
    rest_captions: usize,
) {
    let mut body = String::from("image_id,caption,split,width,height\n");
    for i in 0..images {
        let n = if i < rich { rich_captions } else { rest_captions };
        for c in 0..n {
            writeln!(body, "{prefix}-{i:06},\"An image with {c} vehicles parked near a road.\",train,512,512").unwrap();
        }
    }
    std::fs::write(path, body).unwrap();
}

/// A small mixed manifest directory: one file of each kind.
pub fn write_small_manifests(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    write_classification_csv(&dir.join("mstar.csv"), "mstar", &["tank", "truck", "bulldozer"], 40);
    write_detection_json(&dir.join("ships.json"), "ships", &["ship", "harbor", "oil tank"], 40, 3);
    write_caption_csv(&dir.join("captions.csv"), "cap", 10, 4, 4, 3);
}
