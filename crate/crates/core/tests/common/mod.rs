//! Synthetic corpora written to disk for integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use motionscore::imageio::{save_image, GrayImage, Image};
use motionscore::synth::Texture;

pub fn write_gray(path: &Path, img: &GrayImage) {
    save_image(&Image::from(img.clone()), path).unwrap();
}

/// One triplet per entry: a texture, the same texture translated by
/// `shift(i)` as ground truth, and per-model outputs chosen by `outputs`.
pub struct Corpus {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub shifts: Vec<(f64, f64)>,
}

pub enum Output {
    CopyGt,
    CopyInput,
    /// Translate by a fraction of the ground-truth shift.
    Partial(f64),
}

pub fn build_corpus(
    dir: &Path,
    n: usize,
    size: usize,
    wavelengths: (f64, f64),
    shift: impl Fn(usize) -> (f64, f64),
    outputs: &[(&str, Output)],
) -> Corpus {
    let mut lines = Vec::new();
    let mut shifts = Vec::new();
    let categories = [
        "pose",
        "locomotion",
        "object-state",
        "orientation",
        "subject-object",
        "inter-subject",
    ];
    for i in 0..n {
        let tex = Texture::with_wavelengths(1000 + i as u64, wavelengths.0, wavelengths.1);
        let (dx, dy) = shift(i);
        shifts.push((dx, dy));
        let input = format!("e{i:03}_in.png");
        let gt = format!("e{i:03}_gt.png");
        write_gray(&dir.join(&input), &tex.render(size, size, 0.0, 0.0));
        write_gray(&dir.join(&gt), &tex.render(size, size, dx, dy));
        let mut outs = serde_json::Map::new();
        for (name, kind) in outputs {
            let file = format!("e{i:03}_{name}.png");
            let img = match kind {
                Output::CopyGt => tex.render(size, size, dx, dy),
                Output::CopyInput => tex.render(size, size, 0.0, 0.0),
                Output::Partial(f) => tex.render(size, size, f * dx, f * dy),
            };
            write_gray(&dir.join(&file), &img);
            outs.insert(name.to_string(), file.into());
        }
        let entry = serde_json::json!({
            "id": format!("e{i:03}"),
            "category": categories[i % categories.len()],
            "instruction": "move the subject",
            "input_path": input,
            "gt_path": gt,
            "outputs": outs,
        });
        lines.push(entry.to_string());
    }
    let manifest = dir.join("manifest.jsonl");
    std::fs::write(&manifest, lines.join("\n") + "\n").unwrap();
    Corpus {
        dir: dir.to_path_buf(),
        manifest,
        shifts,
    }
}

/// Shift of `fraction` of the image diagonal in a direction that varies
/// with the entry index.
pub fn diagonal_shift(size: usize, fraction: f64) -> impl Fn(usize) -> (f64, f64) {
    let len = fraction * ((2 * size * size) as f64).sqrt();
    move |i| {
        let angle = i as f64 * 2.399_963_229_728_653; // golden angle
        (len * angle.cos(), len * angle.sin())
    }
}
