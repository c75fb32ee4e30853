use std::sync::Arc;
use std::time::SystemTime;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use panelmap::geo::{parse_region, GeoError, MAX_TILE_PX};
use panelmap::pipeline::analyze_tiles;
use panelmap::store::{is_safe_tile_id, write_bundle, GEOJSON_FILE};
use panelmap::{RegionReport, RegionSpec, TileRef};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::jobs::{JobRecord, JobState, Progress};
use crate::AppState;

pub(crate) fn routes() -> Router<Arc<AppState>> {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/regions", post(submit))
        .route("/api/jobs/{id}", get(status))
        .route("/api/jobs/{id}/result", get(result))
        .route("/api/jobs/{id}/masks/{file}", get(mask))
}

/// JSON error body: `{"error": {"code", "message", ...}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into(), detail: None }
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn job_not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "job_not_found", format!("no job {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut err = json!({ "code": self.code, "message": self.message });
        if let Some(Value::Object(extra)) = self.detail {
            err.as_object_mut().expect("object literal").extend(extra);
        }
        (self.status, Json(json!({ "error": err }))).into_response()
    }
}

/// `{"region": <GeoJSON>, "zoom": 21, "tile_w": 600, "tile_h": 600}`. A bare
/// GeoJSON Feature or geometry carrying `zoom` (and optional tile sizes) as
/// extra members is accepted too.
#[derive(Debug, Clone, Deserialize)]
pub struct SubmitRequest {
    pub region: Value,
    pub zoom: i64,
    pub tile_w: Option<u32>,
    pub tile_h: Option<u32>,
}

impl SubmitRequest {
    pub fn parse(body: &[u8]) -> Result<Self, ApiError> {
        let v: Value = serde_json::from_slice(body)
            .map_err(|e| ApiError::bad_request("invalid_json", format!("request body is not JSON: {e}")))?;
        let Value::Object(obj) = &v else {
            return Err(ApiError::bad_request("invalid_request", "request body must be a JSON object"));
        };
        let v = if obj.contains_key("region") {
            v
        } else {
            let mut wrapped = serde_json::Map::new();
            for k in ["zoom", "tile_w", "tile_h"] {
                if let Some(x) = obj.get(k) {
                    wrapped.insert(k.into(), x.clone());
                }
            }
            wrapped.insert("region".into(), v.clone());
            Value::Object(wrapped)
        };
        serde_json::from_value(v).map_err(|e| ApiError::bad_request("invalid_request", e.to_string()))
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({ "status": "ok", "jobs": state.jobs.len() }))
}

async fn submit(State(state): State<Arc<AppState>>, body: Bytes) -> Result<(StatusCode, Json<JobRecord>), ApiError> {
    let req = SubmitRequest::parse(&body)?;
    let (lo, hi) = (state.cfg.min_zoom, state.cfg.max_zoom);
    if req.zoom < i64::from(lo) || req.zoom > i64::from(hi) {
        let mut e = ApiError::bad_request(
            "zoom_out_of_range",
            format!("zoom {} is outside the supported range {lo}-{hi}", req.zoom),
        );
        e.detail = Some(json!({ "min_zoom": lo, "max_zoom": hi }));
        return Err(e);
    }
    let zoom = req.zoom as u8;
    let (tile_w, tile_h) = (req.tile_w.unwrap_or(600), req.tile_h.unwrap_or(600));
    if !(1..=MAX_TILE_PX).contains(&tile_w) || !(1..=MAX_TILE_PX).contains(&tile_h) {
        return Err(ApiError::bad_request(
            "invalid_tile_size",
            format!("tile size {tile_w}x{tile_h} outside 1-{MAX_TILE_PX}"),
        ));
    }
    let polygons = parse_region(&req.region.to_string()).map_err(geometry_error)?;
    let spec = RegionSpec { tile_cap: state.cfg.tile_cap, ..RegionSpec::new(polygons, zoom, tile_w, tile_h) };

    let cover_spec = spec.clone();
    let tiles = tokio::task::spawn_blocking(move || cover_spec.cover())
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(geometry_error)?;

    let job_id = uuid::Uuid::new_v4().simple().to_string();
    let record = JobRecord {
        job_id: job_id.clone(),
        state: JobState::Queued,
        region: req.region,
        region_id: spec.region_id(),
        zoom,
        tile_w,
        tile_h,
        progress: Progress { done: 0, total: tiles.len() },
        totals: None,
        result: None,
        error: None,
    };
    state.jobs.insert(record.clone());
    tracing::info!(job_id, tiles = tiles.len(), "job queued");
    tokio::spawn(run_job(state, job_id, spec, tiles));
    Ok((StatusCode::ACCEPTED, Json(record)))
}

fn geometry_error(e: GeoError) -> ApiError {
    match e {
        GeoError::Capacity { tiles, cap } => ApiError {
            status: StatusCode::PAYLOAD_TOO_LARGE,
            code: "too_many_tiles",
            message: format!("region needs {tiles} tiles, the limit is {cap}"),
            detail: Some(json!({ "tiles": tiles, "cap": cap })),
        },
        GeoError::Ring { ring, ref reason } => {
            let mut err = ApiError::bad_request("invalid_geometry", format!("ring {ring}: {reason}"));
            err.detail = Some(json!({ "ring": ring }));
            err
        }
        other => ApiError::bad_request("invalid_geometry", other.to_string()),
    }
}

fn now() -> String {
    humantime::format_rfc3339_seconds(SystemTime::now()).to_string()
}

async fn run_job(state: Arc<AppState>, id: String, spec: RegionSpec, tiles: Vec<TileRef>) {
    let Ok(_permit) = state.running.acquire().await else { return };
    state.jobs.transition(&id, JobState::Running, |_| {});
    let st = state.clone();
    let job = id.clone();
    let outcome = tokio::task::spawn_blocking(move || execute(&st, &job, &spec, &tiles))
        .await
        .unwrap_or_else(|e| Err(format!("job panicked: {e}")));
    match outcome {
        Ok(report) if report.errors.is_empty() => {
            state.jobs.transition(&id, JobState::Done, |j| {
                j.totals = Some(report.totals);
                j.result = Some(format!("/api/jobs/{id}/result"));
            });
            tracing::info!(job_id = id, "job done");
        }
        Ok(report) => {
            let first = &report.errors[0];
            let msg = format!("{} of {} tiles failed; first: {}: {}", report.errors.len(), report.errors.len() + report.tile_results.len(), first.tile_id, first.message);
            state.jobs.transition(&id, JobState::Failed, |j| {
                j.totals = Some(report.totals);
                j.error = Some(msg);
            });
        }
        Err(msg) => {
            tracing::warn!(job_id = id, error = msg, "job failed");
            state.jobs.transition(&id, JobState::Failed, |j| j.error = Some(msg));
        }
    }
}

fn execute(state: &AppState, id: &str, spec: &RegionSpec, tiles: &[TileRef]) -> Result<RegionReport, String> {
    let started = now();
    let cfg = &state.cfg;
    let provider = cfg.provider.build(tiles).map_err(|e| e.to_string())?;
    let mut report = analyze_tiles(spec, tiles, provider.as_ref(), state.backend.as_ref(), &cfg.pipeline, &mut |d, _| {
        state.jobs.set_progress(id, d)
    })
    .map_err(|e| e.to_string())?;
    report.provenance.started_at = Some(started);
    report.provenance.finished_at = Some(now());
    let run_cfg = json!({
        "job_id": id,
        "provider": cfg.provider,
        "backend": cfg.backend,
        "pipeline": cfg.pipeline,
    });
    write_bundle(&cfg.runs_dir.join(id), &report, &run_cfg).map_err(|e| e.to_string())?;
    Ok(report)
}

async fn status(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<JobRecord>, ApiError> {
    state.jobs.get(&id).map(Json).ok_or_else(|| ApiError::job_not_found(&id))
}

fn finished_job(state: &AppState, id: &str) -> Result<JobRecord, ApiError> {
    let job = state.jobs.get(id).ok_or_else(|| ApiError::job_not_found(id))?;
    if job.state != JobState::Done {
        let mut e = ApiError::new(StatusCode::CONFLICT, "job_not_done", format!("job {id} is not done"));
        e.detail = Some(json!({ "state": job.state }));
        return Err(e);
    }
    Ok(job)
}

async fn result(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    finished_job(&state, &id)?;
    let path = state.cfg.runs_dir.join(&id).join(GEOJSON_FILE);
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/geo+json")], bytes).into_response())
}

async fn mask(State(state): State<Arc<AppState>>, Path((id, file)): Path<(String, String)>) -> Result<Response, ApiError> {
    let tile_id = file.strip_suffix(".png").filter(|t| is_safe_tile_id(t));
    let Some(tile_id) = tile_id else {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "mask_not_found", format!("no mask {file}")));
    };
    finished_job(&state, &id)?;
    let path = state.cfg.runs_dir.join(&id).join("masks").join(format!("{tile_id}.png"));
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "mask_not_found", format!("no mask for tile {tile_id}")))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrapped_and_bare_bodies() {
        let wrapped = br#"{"region":{"type":"Polygon","coordinates":[]},"zoom":21,"tile_w":512}"#;
        let r = SubmitRequest::parse(wrapped).unwrap();
        assert_eq!((r.zoom, r.tile_w, r.tile_h), (21, Some(512), None));
        let bare = br#"{"type":"Feature","geometry":null,"properties":{},"zoom":20}"#;
        let r = SubmitRequest::parse(bare).unwrap();
        assert_eq!(r.zoom, 20);
        assert_eq!(r.region["type"], "Feature");
        assert_eq!(SubmitRequest::parse(b"[1]").unwrap_err().code, "invalid_request");
        assert_eq!(SubmitRequest::parse(b"{").unwrap_err().code, "invalid_json");
        assert_eq!(SubmitRequest::parse(br#"{"region":{}}"#).unwrap_err().code, "invalid_request");
    }

    #[test]
    fn capacity_maps_to_413() {
        let e = geometry_error(GeoError::Capacity { tiles: 120_000, cap: 100_000 });
        assert_eq!(e.status, StatusCode::PAYLOAD_TOO_LARGE);
        assert_eq!(e.detail.unwrap()["tiles"], 120_000);
    }
}
