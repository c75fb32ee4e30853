use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};

use super::{
    preprocess, BackendConfig, BackendError, ClassifierOutput, InferenceBackend, InputTensor, ProbMask,
    SEGMENTER_SIZE,
};
use crate::http::Transport;
use crate::imagery::ImageTile;

/// `POST {endpoint}/v1/models/{model}:predict`
pub fn predict_url(endpoint: &str, model: &str) -> String {
    format!("{}/v1/models/{}:predict", endpoint.trim_end_matches('/'), model)
}

#[derive(Serialize)]
struct PredictRequest<'a> {
    instances: [&'a InputTensor; 1],
}

#[derive(Deserialize)]
struct PredictResponse<T> {
    predictions: Vec<T>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Scalar {
    Wrapped([f64; 1]),
    Bare(f64),
}

/// Client for a TensorFlow-Serving style predict API.
pub struct RemoteBackend {
    endpoint: String,
    cfg: BackendConfig,
    transport: Arc<dyn Transport>,
    slots: Slots,
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>, cfg: BackendConfig, transport: Arc<dyn Transport>) -> Result<Self, BackendError> {
        let [w, h] = cfg.classifier_input;
        if w == 0 || h == 0 {
            return Err(BackendError::Config("classifier input size must be positive".into()));
        }
        let slots = Slots::new(cfg.max_in_flight.max(1));
        Ok(Self { endpoint: endpoint.into(), cfg, transport, slots })
    }

    /// Request body for the classifier stage.
    pub fn classify_body(&self, img: &ImageTile) -> Vec<u8> {
        let [w, h] = self.cfg.classifier_input;
        encode_request(&preprocess(img.pixels(), w, h, self.cfg.pixel_scaling))
    }

    /// Request body for the segmentation stage.
    pub fn segment_body(&self, img: &ImageTile) -> Vec<u8> {
        encode_request(&preprocess(img.pixels(), SEGMENTER_SIZE, SEGMENTER_SIZE, self.cfg.pixel_scaling))
    }

    fn post(&self, model: &str, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        let _slot = self.slots.acquire();
        let res = self
            .transport
            .post_json(&predict_url(&self.endpoint, model), body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !res.is_success() {
            let body = String::from_utf8_lossy(&res.body).chars().take(200).collect();
            return Err(BackendError::Status { status: res.status, body });
        }
        Ok(res.body)
    }
}

fn encode_request(t: &InputTensor) -> Vec<u8> {
    serde_json::to_vec(&PredictRequest { instances: [t] }).expect("tensor serialization is infallible")
}

pub(crate) fn parse_classifier(body: &[u8]) -> Result<ClassifierOutput, BackendError> {
    let res: PredictResponse<Scalar> =
        serde_json::from_slice(body).map_err(|e| BackendError::Protocol(e.to_string()))?;
    let score = match res.predictions.as_slice() {
        [Scalar::Wrapped([s])] | [Scalar::Bare(s)] => *s,
        other => {
            return Err(BackendError::Protocol(format!(
                "expected one classifier prediction, got {}",
                other.len()
            )))
        }
    };
    ClassifierOutput::new(score)
}

pub(crate) fn parse_segmenter(body: &[u8]) -> Result<ProbMask, BackendError> {
    let res: PredictResponse<Vec<Vec<[f32; 1]>>> =
        serde_json::from_slice(body).map_err(|e| BackendError::Protocol(e.to_string()))?;
    let [grid] = <[_; 1]>::try_from(res.predictions).map_err(|p: Vec<_>| {
        BackendError::Protocol(format!("expected one segmentation prediction, got {}", p.len()))
    })?;
    let n = SEGMENTER_SIZE as usize;
    if grid.len() != n || grid.iter().any(|row| row.len() != n) {
        return Err(BackendError::Protocol(format!(
            "segmentation grid is not {n}x{n}x1"
        )));
    }
    ProbMask::new(grid.into_iter().flatten().map(|[p]| p).collect())
}

impl InferenceBackend for RemoteBackend {
    fn classify(&self, img: &ImageTile) -> Result<ClassifierOutput, BackendError> {
        let body = self.post(&self.cfg.classifier_model, &self.classify_body(img))?;
        parse_classifier(&body)
    }

    fn segment(&self, img: &ImageTile) -> Result<ProbMask, BackendError> {
        let body = self.post(&self.cfg.segmenter_model, &self.segment_body(img))?;
        parse_segmenter(&body)
    }
}

/// Counting semaphore bounding in-flight requests.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n), cv: Condvar::new() }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}
