//! Access to the two model stages: tile classification and per-pixel
//! segmentation, served remotely or by a deterministic stub.

mod preprocess;
mod remote;
mod stub;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::UreqTransport;
use crate::imagery::ImageTile;

pub use preprocess::{preprocess, InputTensor, PixelScaling};
pub use remote::{predict_url, RemoteBackend};
pub use stub::{StubBackend, StubRule};

/// Side length of the segmentation model's square input and output.
pub const SEGMENTER_SIZE: u32 = 512;

pub const MODEL_SERVER_ENV: &str = "MODEL_SERVER_URL";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("backend transport: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Protocol(String),
}

/// Probability that a tile contains solar panels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOutput {
    score: f64,
}

impl ClassifierOutput {
    pub fn new(score: f64) -> Result<Self, BackendError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(BackendError::Protocol(format!("classifier score {score} outside [0, 1]")));
        }
        Ok(Self { score })
    }

    pub fn score(&self) -> f64 {
        self.score
    }
}

/// Per-pixel panel probabilities on the segmenter's 512x512 grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMask {
    probs: Vec<f32>,
}

impl ProbMask {
    pub fn new(probs: Vec<f32>) -> Result<Self, BackendError> {
        let want = (SEGMENTER_SIZE * SEGMENTER_SIZE) as usize;
        if probs.len() != want {
            return Err(BackendError::Protocol(format!(
                "probability grid has {} values, expected {want}",
                probs.len()
            )));
        }
        if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(BackendError::Protocol(format!("probability {bad} outside [0, 1]")));
        }
        Ok(Self { probs })
    }

    pub fn filled(p: f32) -> Result<Self, BackendError> {
        Self::new(vec![p; (SEGMENTER_SIZE * SEGMENTER_SIZE) as usize])
    }

    pub fn size(&self) -> u32 {
        SEGMENTER_SIZE
    }

    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.probs[(y * SEGMENTER_SIZE + x) as usize]
    }

    /// Row-major values.
    pub fn values(&self) -> &[f32] {
        &self.probs
    }
}

pub trait InferenceBackend: Send + Sync {
    fn classify(&self, img: &ImageTile) -> Result<ClassifierOutput, BackendError>;
    fn segment(&self, img: &ImageTile) -> Result<ProbMask, BackendError>;
}

impl<T: InferenceBackend + ?Sized> InferenceBackend for Arc<T> {
    fn classify(&self, img: &ImageTile) -> Result<ClassifierOutput, BackendError> {
        (**self).classify(img)
    }
    fn segment(&self, img: &ImageTile) -> Result<ProbMask, BackendError> {
        (**self).segment(img)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Falls back to `MODEL_SERVER_URL` when unset.
    pub endpoint_url: Option<String>,
    pub classifier_model: String,
    pub segmenter_model: String,
    /// Classifier input as `[width, height]`.
    pub classifier_input: [u32; 2],
    pub pixel_scaling: PixelScaling,
    pub request_timeout_ms: u64,
    pub max_in_flight: usize,
    pub stub: StubRule,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Stub,
            endpoint_url: None,
            classifier_model: "classifier".into(),
            segmenter_model: "segmenter".into(),
            classifier_input: [600, 600],
            pixel_scaling: PixelScaling::Raw,
            request_timeout_ms: 30_000,
            max_in_flight: 8,
            stub: StubRule::default(),
        }
    }
}

impl BackendConfig {
    pub fn build(&self) -> Result<Arc<dyn InferenceBackend>, BackendError> {
        match self.kind {
            BackendKind::Stub => {
                self.stub.validate()?;
                Ok(Arc::new(StubBackend::new(self.stub.clone())))
            }
            BackendKind::Remote => {
                let endpoint = self
                    .endpoint_url
                    .clone()
                    .or_else(|| std::env::var(MODEL_SERVER_ENV).ok())
                    .ok_or_else(|| {
                        BackendError::Config(format!("remote backend needs endpoint_url or {MODEL_SERVER_ENV}"))
                    })?;
                let transport = UreqTransport::new(Duration::from_millis(self.request_timeout_ms));
                Ok(Arc::new(RemoteBackend::new(endpoint, self.clone(), Arc::new(transport))?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores_outside_unit_interval_are_rejected() {
        assert!(ClassifierOutput::new(1.0).is_ok());
        assert!(ClassifierOutput::new(0.0).is_ok());
        assert!(ClassifierOutput::new(1.0001).is_err());
        assert!(ClassifierOutput::new(f64::NAN).is_err());
    }

    #[test]
    fn prob_mask_checks_shape_and_range() {
        assert!(ProbMask::new(vec![0.5; 10]).is_err());
        assert!(ProbMask::filled(1.5).is_err());
        assert!(ProbMask::filled(-0.1).is_err());
        let m = ProbMask::filled(0.25).unwrap();
        assert_eq!(m.get(511, 511), 0.25);
    }

    #[test]
    fn config_deserializes_with_defaults() {
        let cfg: BackendConfig = serde_json::from_str(r#"{"kind":"remote","pixel_scaling":"unit_0_1"}"#).unwrap();
        assert_eq!(cfg.kind, BackendKind::Remote);
        assert_eq!(cfg.pixel_scaling, PixelScaling::Unit);
        assert_eq!(cfg.classifier_input, [600, 600]);
        assert_eq!(cfg.max_in_flight, 8);
    }
}
