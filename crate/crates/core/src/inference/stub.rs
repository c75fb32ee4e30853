use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{
    preprocess, BackendError, ClassifierOutput, InferenceBackend, PixelScaling, ProbMask, SEGMENTER_SIZE,
};
use crate::imagery::ImageTile;

/// Colour-box rule used by the stub backend: a pixel is "panel" when every
/// channel lies within `[panel_min, panel_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StubRule {
    pub panel_min: [u8; 3],
    pub panel_max: [u8; 3],
    /// Panel pixel count that maps to a classifier score of 1.
    pub classify_norm: f64,
}

impl Default for StubRule {
    fn default() -> Self {
        Self { panel_min: [0, 0, 150], panel_max: [60, 60, 255], classify_norm: 500.0 }
    }
}

impl StubRule {
    pub fn validate(&self) -> Result<(), BackendError> {
        if (0..3).any(|c| self.panel_min[c] > self.panel_max[c]) {
            return Err(BackendError::Config("stub colour box has min > max".into()));
        }
        if !(self.classify_norm > 0.0) {
            return Err(BackendError::Config("stub classify_norm must be positive".into()));
        }
        Ok(())
    }

    pub fn is_panel(&self, rgb: [f32; 3]) -> bool {
        (0..3).all(|c| rgb[c] >= f32::from(self.panel_min[c]) && rgb[c] <= f32::from(self.panel_max[c]))
    }

    pub fn count_panel_pixels(&self, img: &image::RgbImage) -> usize {
        img.pixels().filter(|p| self.is_panel(p.0.map(f32::from))).count()
    }
}

/// Offline backend with closed-form outputs.
///
/// Classification scores `clamp(panel_pixels / classify_norm, 0, 1)` on the
/// original tile; segmentation marks each pixel of the bilinear 512x512
/// resize that falls inside the colour box.
#[derive(Debug, Default)]
pub struct StubBackend {
    rule: StubRule,
    classify_calls: AtomicUsize,
    segment_calls: AtomicUsize,
}

impl StubBackend {
    pub fn new(rule: StubRule) -> Self {
        Self { rule, ..Default::default() }
    }

    pub fn rule(&self) -> &StubRule {
        &self.rule
    }

    pub fn classify_calls(&self) -> usize {
        self.classify_calls.load(Ordering::SeqCst)
    }

    pub fn segment_calls(&self) -> usize {
        self.segment_calls.load(Ordering::SeqCst)
    }
}

impl InferenceBackend for StubBackend {
    fn classify(&self, img: &ImageTile) -> Result<ClassifierOutput, BackendError> {
        self.classify_calls.fetch_add(1, Ordering::SeqCst);
        let n = self.rule.count_panel_pixels(img.pixels()) as f64;
        ClassifierOutput::new((n / self.rule.classify_norm).clamp(0.0, 1.0))
    }

    fn segment(&self, img: &ImageTile) -> Result<ProbMask, BackendError> {
        self.segment_calls.fetch_add(1, Ordering::SeqCst);
        let input = preprocess(img.pixels(), SEGMENTER_SIZE, SEGMENTER_SIZE, PixelScaling::Raw);
        let probs = input
            .pixels()
            .map(|p| if self.rule.is_panel(p) { 1.0 } else { 0.0 })
            .collect();
        ProbMask::new(probs)
    }
}

#[cfg(test)]
mod tests {
    use image::{Rgb, RgbImage};

    use super::*;
    use crate::geo::{LatLon, TileRef};
    use crate::imagery::ProviderKind;

    const PANEL: [u8; 3] = [20, 30, 200];
    const GROUND: [u8; 3] = [120, 140, 90];

    fn tile_with(n_panel: u32) -> ImageTile {
        let t = TileRef::new(LatLon::new(37.87, -122.27).unwrap(), 21, 600, 600).unwrap();
        let img = RgbImage::from_fn(600, 600, |x, y| {
            if y * 600 + x < n_panel {
                Rgb(PANEL)
            } else {
                Rgb(GROUND)
            }
        });
        ImageTile::new(t, img, ProviderKind::Synthetic).unwrap()
    }

    #[test]
    fn classify_follows_linear_clamped_rule() {
        let b = StubBackend::default();
        assert_eq!(b.classify(&tile_with(1600)).unwrap().score(), 1.0);
        assert_eq!(b.classify(&tile_with(0)).unwrap().score(), 0.0);
        assert_eq!(b.classify(&tile_with(250)).unwrap().score(), 0.5);
        assert_eq!(b.classify_calls(), 3);
    }

    #[test]
    fn segment_extremes() {
        let b = StubBackend::default();
        assert!(b.segment(&tile_with(0)).unwrap().values().iter().all(|&p| p == 0.0));
        assert!(b.segment(&tile_with(600 * 600)).unwrap().values().iter().all(|&p| p == 1.0));
        assert_eq!(b.segment_calls(), 2);
    }

    #[test]
    fn stub_is_deterministic() {
        let b = StubBackend::default();
        let t = tile_with(12_345);
        assert_eq!(b.segment(&t).unwrap(), b.segment(&t).unwrap());
        assert_eq!(b.classify(&t).unwrap(), b.classify(&t).unwrap());
    }

    #[test]
    fn colour_box_edges_are_inclusive() {
        let r = StubRule::default();
        assert!(r.is_panel([60.0, 60.0, 150.0]));
        assert!(!r.is_panel([60.5, 60.0, 150.0]));
        assert!(!r.is_panel([0.0, 0.0, 149.0]));
        assert!(StubRule { classify_norm: 0.0, ..r.clone() }.validate().is_err());
        assert!(StubRule { panel_min: [70, 0, 0], ..r }.validate().is_err());
    }
}
