use serde::{Deserialize, Serialize};

use super::{EvalError, Label};
use crate::pipeline::BinaryMask;

/// Binary confusion counts with solar as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, predicted: Label, actual: Label) {
        match (predicted, actual) {
            (Label::Solar, Label::Solar) => self.tp += 1,
            (Label::Solar, Label::NoSolar) => self.fp += 1,
            (Label::NoSolar, Label::Solar) => self.fn_ += 1,
            (Label::NoSolar, Label::NoSolar) => self.tn += 1,
        }
    }
}

pub fn confusion(predictions: &[Label], labels: &[Label]) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::Input(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        cm.record(p, l);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub solar: ClassScores,
    pub no_solar: ClassScores,
    pub accuracy: f64,
    /// Set when any ratio had a zero denominator and was reported as 0.
    pub undefined: bool,
}

fn ratio(num: u64, den: u64, undefined: &mut bool) -> f64 {
    if den == 0 {
        *undefined = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn scores(tp: u64, fp: u64, fn_: u64, undefined: &mut bool) -> ClassScores {
    let precision = ratio(tp, tp + fp, undefined);
    let recall = ratio(tp, tp + fn_, undefined);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    ClassScores { precision, recall, f1, support: tp + fn_ }
}

pub fn class_metrics(cm: &ConfusionMatrix) -> ClassMetrics {
    let mut undefined = false;
    let solar = scores(cm.tp, cm.fp, cm.fn_, &mut undefined);
    let no_solar = scores(cm.tn, cm.fn_, cm.fp, &mut undefined);
    let accuracy = ratio(cm.tp + cm.tn, cm.total(), &mut undefined);
    ClassMetrics { solar, no_solar, accuracy, undefined }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskScore {
    pub iou: f64,
    pub dice: f64,
    pub intersection: u64,
    pub union: u64,
    /// Both masks empty; scored as a perfect match.
    pub both_empty: bool,
}

pub fn mask_iou(pred: &BinaryMask, truth: &BinaryMask) -> Result<MaskScore, EvalError> {
    if pred.dimensions() != truth.dimensions() {
        return Err(EvalError::Input(format!(
            "mask sizes differ: {:?} vs {:?}",
            pred.dimensions(),
            truth.dimensions()
        )));
    }
    let (mut inter, mut union) = (0u64, 0u64);
    for (&a, &b) in pred.bits().iter().zip(truth.bits()) {
        inter += u64::from(a & b);
        union += u64::from(a | b);
    }
    if union == 0 {
        return Ok(MaskScore { iou: 1.0, dice: 1.0, intersection: 0, union: 0, both_empty: true });
    }
    // |pred| + |truth| = |∩| + |∪|
    Ok(MaskScore {
        iou: inter as f64 / union as f64,
        dice: 2.0 * inter as f64 / (inter + union) as f64,
        intersection: inter,
        union,
        both_empty: false,
    })
}

/// Per-image mean (headline) and micro aggregate over a set of mask scores.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MaskSummary {
    pub images: usize,
    pub mean_iou: f64,
    pub mean_dice: f64,
    pub micro_iou: f64,
    pub micro_dice: f64,
    pub both_empty: usize,
}

impl MaskSummary {
    pub fn from_scores<'a>(scores: impl IntoIterator<Item = &'a MaskScore>) -> Self {
        let mut s = MaskSummary::default();
        let (mut inter, mut union) = (0u64, 0u64);
        for m in scores {
            s.images += 1;
            s.mean_iou += m.iou;
            s.mean_dice += m.dice;
            s.both_empty += usize::from(m.both_empty);
            inter += m.intersection;
            union += m.union;
        }
        if s.images > 0 {
            s.mean_iou /= s.images as f64;
            s.mean_dice /= s.images as f64;
        }
        if union > 0 {
            s.micro_iou = inter as f64 / union as f64;
            s.micro_dice = 2.0 * inter as f64 / (inter + union) as f64;
        } else if s.images > 0 {
            s.micro_iou = 1.0;
            s.micro_dice = 1.0;
        }
        s
    }
}

/// `|actual - predicted| / actual * 100`.
pub fn percent_error(actual: f64, predicted: f64) -> Result<f64, EvalError> {
    if actual == 0.0 || !actual.is_finite() || !predicted.is_finite() {
        return Err(EvalError::Domain(format!("percent error undefined for actual={actual}")));
    }
    Ok((actual - predicted).abs() / actual * 100.0)
}
