use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalError, Label, Manifest, ManifestEntry};
use crate::imagery::PixelRect;

/// One generated image. `panel` is painted into the image; `truth` is
/// written as the label mask (solar entries only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub name: String,
    pub label: Label,
    pub panel: Option<PixelRect>,
    pub truth: Option<PixelRect>,
}

impl CorpusEntry {
    pub fn solar(name: impl Into<String>, rect: PixelRect) -> Self {
        Self { name: name.into(), label: Label::Solar, panel: Some(rect), truth: Some(rect) }
    }

    pub fn no_solar(name: impl Into<String>) -> Self {
        Self { name: name.into(), label: Label::NoSolar, panel: None, truth: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub entries: Vec<CorpusEntry>,
    pub size: u32,
    pub lat: f64,
    pub zoom: u8,
    pub background: [u8; 3],
    pub fill: [u8; 3],
}

impl CorpusSpec {
    pub fn new(entries: Vec<CorpusEntry>) -> Self {
        Self { entries, size: 512, lat: 37.8716, zoom: 21, background: [120, 140, 90], fill: [20, 30, 200] }
    }

    /// `solar` + `no_solar` entries with seeded rectangle placement.
    pub fn random(solar: usize, no_solar: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let size = 512;
        let mut entries = Vec::with_capacity(solar + no_solar);
        for i in 0..solar {
            let (w, h) = (rng.gen_range(24..=96), rng.gen_range(24..=96));
            let rect = PixelRect::new(rng.gen_range(0..size - w), rng.gen_range(0..size - h), w, h);
            entries.push(CorpusEntry::solar(format!("solar_{i:04}"), rect));
        }
        for i in 0..no_solar {
            entries.push(CorpusEntry::no_solar(format!("no_solar_{i:04}")));
        }
        Self::new(entries)
    }
}

fn paint<P: image::Pixel>(img: &mut image::ImageBuffer<P, Vec<P::Subpixel>>, r: &PixelRect, px: P) {
    let (w, h) = img.dimensions();
    for y in r.y..(r.y + r.h).min(h) {
        for x in r.x..(r.x + r.w).min(w) {
            img.put_pixel(x, y, px);
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io { path: path.to_path_buf(), source }
}

/// Write images, label masks and `manifest.jsonl` under `dir`; returns the
/// manifest path.
pub fn write_corpus(dir: &Path, spec: &CorpusSpec) -> Result<PathBuf, EvalError> {
    for sub in ["images", "masks"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(io(&p))?;
    }
    let mut entries = Vec::with_capacity(spec.entries.len());
    for e in &spec.entries {
        let mut img = RgbImage::from_pixel(spec.size, spec.size, Rgb(spec.background));
        if let Some(r) = &e.panel {
            paint(&mut img, r, Rgb(spec.fill));
        }
        let image = PathBuf::from(format!("images/{}.png", e.name));
        let p = dir.join(&image);
        img.save(&p).map_err(|err| EvalError::Input(format!("{}: {err}", p.display())))?;

        let mut entry = ManifestEntry::new(image, e.label);
        if e.label == Label::Solar {
            let mut m = GrayImage::new(spec.size, spec.size);
            if let Some(r) = &e.truth {
                paint(&mut m, r, Luma([255]));
            }
            let mask = PathBuf::from(format!("masks/{}.png", e.name));
            let p = dir.join(&mask);
            m.save(&p).map_err(|err| EvalError::Input(format!("{}: {err}", p.display())))?;
            entry.mask = Some(mask);
            entry.lat = Some(spec.lat);
            entry.zoom = Some(spec.zoom);
        }
        entries.push(entry);
    }
    let manifest = Manifest { root: dir.to_path_buf(), entries };
    let path = dir.join("manifest.jsonl");
    fs::write(&path, manifest.to_jsonl()).map_err(io(&path))?;
    Ok(path)
}
