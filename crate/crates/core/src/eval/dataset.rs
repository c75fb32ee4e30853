use std::fmt::Write as _;
use std::path::Path;

use image::{ImageReader, RgbImage};
use serde::{Deserialize, Serialize};

use super::{class_metrics, mask_iou, percent_error, ClassMetrics, ConfusionMatrix, EvalError, Label, Manifest};
use super::{ManifestEntry, MaskScore, MaskSummary};
use crate::geo::{LatLon, TileRef};
use crate::imagery::{ImageTile, ProviderKind};
use crate::inference::InferenceBackend;
use crate::pipeline::{analyze_tile, binarize, run_ordered, BinaryMask, PanelEstimate, PipelineConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Misclassified {
    pub entry: String,
    pub label: Label,
    pub prediction: Label,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryFailure {
    pub entry: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMaskScore {
    pub entry: String,
    #[serde(flatten)]
    pub score: MaskScore,
}

/// Label-mask totals against pipeline totals over entries that carry a
/// mask, a latitude and a zoom.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AreaComparison {
    pub entries: usize,
    pub actual_area_m2: f64,
    pub predicted_area_m2: f64,
    pub actual_area_ft2: f64,
    pub predicted_area_ft2: f64,
    pub actual_panels: u64,
    pub predicted_panels: u64,
    /// `None` when the actual total is zero.
    pub area_percent_error: Option<f64>,
    pub count_percent_error: Option<f64>,
}

impl AreaComparison {
    fn add(&mut self, actual: &PanelEstimate, predicted: Option<&PanelEstimate>) {
        self.entries += 1;
        self.actual_area_m2 += actual.area_m2;
        self.actual_area_ft2 += actual.area_ft2;
        self.actual_panels += actual.panel_count;
        if let Some(p) = predicted {
            self.predicted_area_m2 += p.area_m2;
            self.predicted_area_ft2 += p.area_ft2;
            self.predicted_panels += p.panel_count;
        }
    }

    fn finish(&mut self) {
        self.area_percent_error = percent_error(self.actual_area_ft2, self.predicted_area_ft2).ok();
        self.count_percent_error = percent_error(self.actual_panels as f64, self.predicted_panels as f64).ok();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub entries: usize,
    pub evaluated: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: ClassMetrics,
    pub masks: MaskSummary,
    pub per_image: Vec<ImageMaskScore>,
    pub area: AreaComparison,
    pub misclassified: Vec<Misclassified>,
    pub failures: Vec<EntryFailure>,
}

impl EvalReport {
    /// Plain-text tables: classification, segmentation, totals.
    pub fn text_table(&self) -> String {
        let mut s = String::new();
        let m = &self.metrics;
        let _ = writeln!(s, "{:<10}{:>10}{:>10}{:>10}{:>10}", "class", "precision", "recall", "f1-score", "support");
        for (name, c) in [("solar", &m.solar), ("no_solar", &m.no_solar)] {
            let _ = writeln!(s, "{name:<10}{:>10.4}{:>10.4}{:>10.4}{:>10}", c.precision, c.recall, c.f1, c.support);
        }
        let _ = writeln!(s, "{:<10}{:>30.4}{:>10}", "accuracy", m.accuracy, self.confusion.total());
        if m.undefined {
            let _ = writeln!(s, "(some ratios had zero denominators and are reported as 0)");
        }
        let k = &self.masks;
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<10}{:>10}{:>10}{:>10}{:>10}{:>10}", "masks", "images", "mean_iou", "mean_dice", "micro_iou", "micro_dice");
        let _ = writeln!(
            s,
            "{:<10}{:>10}{:>10.4}{:>10.4}{:>10.4}{:>10.4}",
            "", k.images, k.mean_iou, k.mean_dice, k.micro_iou, k.micro_dice
        );
        let a = &self.area;
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<10}{:>16}{:>16}{:>10}", "totals", "actual", "predicted", "error_%");
        let _ = writeln!(
            s,
            "{:<10}{:>16.2}{:>16.2}{:>10}",
            "area_ft2", a.actual_area_ft2, a.predicted_area_ft2, pct(a.area_percent_error)
        );
        let _ = writeln!(
            s,
            "{:<10}{:>16}{:>16}{:>10}",
            "panels", a.actual_panels, a.predicted_panels, pct(a.count_percent_error)
        );
        if !self.failures.is_empty() {
            let _ = writeln!(s, "\n{} entries failed", self.failures.len());
        }
        s
    }

    pub fn misclassified_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["entry", "label", "prediction", "score"]).expect("in-memory write");
        for m in &self.misclassified {
            w.write_record([m.entry.as_str(), m.label.as_str(), m.prediction.as_str(), &m.score.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

struct Outcome {
    predicted: Label,
    score: f64,
    mask: Option<MaskScore>,
    area: Option<(PanelEstimate, Option<PanelEstimate>)>,
}

fn load_rgb(path: &Path) -> Result<RgbImage, String> {
    let img = ImageReader::open(path).map_err(|e| e.to_string())?.decode().map_err(|e| e.to_string())?;
    Ok(img.to_rgb8())
}

/// Grayscale label mask; values above 127 are panel.
pub(crate) fn load_label_mask(path: &Path) -> Result<BinaryMask, String> {
    let img = ImageReader::open(path).map_err(|e| e.to_string())?.decode().map_err(|e| e.to_string())?;
    let g = img.to_luma8();
    let (w, h) = g.dimensions();
    let bits = g.into_raw().into_iter().map(|v| u8::from(v > 127)).collect();
    BinaryMask::from_bits(w, h, bits).ok_or_else(|| "empty mask image".to_string())
}

fn evaluate_entry(
    m: &Manifest,
    e: &ManifestEntry,
    backend: &dyn InferenceBackend,
    cfg: &PipelineConfig,
) -> Result<Outcome, String> {
    let rgb = load_rgb(&m.resolve(&e.image))?;
    let (w, h) = rgb.dimensions();
    let center = LatLon::new(e.lat.unwrap_or(0.0), 0.0).map_err(|e| e.to_string())?;
    let tile = TileRef::new(center, e.zoom.unwrap_or(21), w, h).map_err(|e| e.to_string())?;
    let img = ImageTile::new(tile, rgb, ProviderKind::Directory).map_err(|e| e.to_string())?;
    let result = analyze_tile(&img, backend, cfg).map_err(|e| e.to_string())?;
    let predicted = if result.classified_solar { Label::Solar } else { Label::NoSolar };

    let (mut mask, mut area) = (None, None);
    if let Some(mask_path) = &e.mask {
        let truth = load_label_mask(&m.resolve(mask_path))?;
        if truth.dimensions() != (w, h) {
            return Err(format!("mask is {:?} but image is {:?}", truth.dimensions(), (w, h)));
        }
        let pred = match &result.mask {
            Some(p) => p.clone(),
            None => binarize(&backend.segment(&img).map_err(|e| e.to_string())?, cfg.mask_threshold).resize(w, h),
        };
        mask = Some(mask_iou(&pred, &truth).map_err(|e| e.to_string())?);
        if let (Some(lat), Some(zoom)) = (e.lat, e.zoom) {
            let actual = PanelEstimate::from_pixel_count(truth.count_ones(), lat, zoom, cfg.panel_area_ft2)
                .map_err(|e| e.to_string())?;
            area = Some((actual, result.estimate));
        }
    }
    Ok(Outcome { predicted, score: result.classifier_score, mask, area })
}

/// Run the pipeline over every manifest entry and score it against the labels.
/// Entries that fail are listed and left out of every metric.
pub fn evaluate_dataset(
    manifest: &Manifest,
    backend: &dyn InferenceBackend,
    cfg: &PipelineConfig,
) -> Result<EvalReport, EvalError> {
    cfg.validate().map_err(|e| EvalError::Input(e.to_string()))?;
    let outcomes = run_ordered(
        manifest.entries.len(),
        cfg.max_parallel_tiles,
        |i| evaluate_entry(manifest, &manifest.entries[i], backend, cfg),
        &mut |_, _| {},
    );

    let mut confusion = ConfusionMatrix::default();
    let mut per_image = Vec::new();
    let mut area = AreaComparison::default();
    let mut misclassified = Vec::new();
    let mut failures = Vec::new();
    for (e, outcome) in manifest.entries.iter().zip(outcomes) {
        let name = e.image.display().to_string();
        let o = match outcome {
            Ok(o) => o,
            Err(message) => {
                failures.push(EntryFailure { entry: name, message });
                continue;
            }
        };
        confusion.record(o.predicted, e.label);
        if o.predicted != e.label {
            misclassified.push(Misclassified { entry: name.clone(), label: e.label, prediction: o.predicted, score: o.score });
        }
        if let Some(score) = o.mask {
            per_image.push(ImageMaskScore { entry: name, score });
        }
        if let Some((actual, predicted)) = o.area {
            area.add(&actual, predicted.as_ref());
        }
    }
    area.finish();
    Ok(EvalReport {
        entries: manifest.entries.len(),
        evaluated: confusion.total() as usize,
        metrics: class_metrics(&confusion),
        confusion,
        masks: MaskSummary::from_scores(per_image.iter().map(|p| &p.score)),
        per_image,
        area,
        misclassified,
        failures,
    })
}
