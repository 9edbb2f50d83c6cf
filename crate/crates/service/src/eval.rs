//! Batch evaluation jobs.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::Json;
use canopy_agent::paths::resolve_within;
use canopy_core::dataset::{load_manifest, Split};
use canopy_core::metrics::{missing_predictions, rescore, selected_ids, EvalReport, RescoreRequest};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::{ApiError, ApiJson, AppState};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRequest {
    /// Manifest path relative to the data root.
    pub manifest: String,
    /// Directory of `<pair_id>.png` predictions, relative to the data root.
    #[serde(default)]
    pub pred_dir: Option<String>,
    /// JSON file mapping pair id to candidate caption, relative to the data root.
    #[serde(default)]
    pub captions: Option<String>,
    #[serde(default)]
    pub split: Option<Split>,
    #[serde(default)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JobState {
    Running,
    Done { report: Box<EvalReport>, table: String },
    Failed { error: ApiError },
}

fn resolve(state: &AppState, field: &str, p: &str) -> Result<PathBuf, ApiError> {
    resolve_within(&state.config.data_root, std::path::Path::new(p)).map_err(|e| ApiError::from(e).with_field(field))
}

fn must_exist(field: &str, p: &std::path::Path) -> Result<(), ApiError> {
    if p.exists() {
        Ok(())
    } else {
        Err(ApiError::not_found("file_not_found", format!("{field} {} does not exist", p.display())).with_field(field))
    }
}

pub async fn submit(
    State(state): State<Arc<AppState>>,
    ApiJson(req): ApiJson<EvalRequest>,
) -> Result<impl IntoResponse, ApiError> {
    let manifest = resolve(&state, "manifest", &req.manifest)?;
    let pred_dir = req
        .pred_dir
        .as_deref()
        .map(|p| resolve(&state, "pred_dir", p))
        .transpose()?;
    let captions = req
        .captions
        .as_deref()
        .map(|p| resolve(&state, "captions", p))
        .transpose()?;
    if pred_dir.is_none() && captions.is_none() {
        return Err(ApiError::bad_request(
            "nothing_to_evaluate",
            "give pred_dir, captions or both",
        ));
    }
    must_exist("manifest", &manifest)?;
    if let Some(p) = &pred_dir {
        must_exist("pred_dir", p)?;
    }
    if let Some(p) = &captions {
        must_exist("captions", p)?;
    }

    // cheap checks run before the job is accepted so the caller gets them synchronously
    let dataset = tokio::task::spawn_blocking(move || load_manifest(&manifest))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    let ids = selected_ids(&dataset, req.split);
    if let Some(dir) = &pred_dir {
        if let Some(id) = missing_predictions(dir, &ids).into_iter().next() {
            return Err(
                ApiError::not_found("missing_prediction", format!("no prediction for pair {id}")).with_field(&id),
            );
        }
    }
    let candidates: Option<BTreeMap<String, String>> = match &captions {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ApiError::not_found("file_not_found", e.to_string()))?;
            Some(
                serde_json::from_str(&text)
                    .map_err(|e| ApiError::bad_request("invalid_captions", e.to_string()).with_field("captions"))?,
            )
        }
        None => None,
    };

    let job_id = uuid::Uuid::new_v4().simple().to_string();
    state
        .jobs
        .write()
        .expect("job map lock")
        .insert(job_id.clone(), JobState::Running);
    let model = req.model.clone().unwrap_or_else(|| {
        pred_dir
            .as_ref()
            .and_then(|p| p.file_name())
            .map_or_else(|| "captions".to_string(), |n| n.to_string_lossy().into_owned())
    });
    let job_state = Arc::clone(&state);
    let job = job_id.clone();
    tokio::task::spawn_blocking(move || {
        let request = RescoreRequest {
            split: req.split,
            pred_dir: pred_dir.as_deref(),
            candidates: candidates.as_ref(),
            model: &model,
        };
        let outcome = match rescore(&dataset, &request) {
            Ok(report) => JobState::Done {
                table: report.to_table(),
                report: Box::new(report),
            },
            Err(e) => JobState::Failed { error: e.into() },
        };
        job_state.jobs.write().expect("job map lock").insert(job, outcome);
    });
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({"job_id": job_id, "status": "running"})),
    ))
}

pub async fn status(
    State(state): State<Arc<AppState>>,
    Path(job): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    let jobs = state.jobs.read().expect("job map lock");
    let s = jobs
        .get(&job)
        .ok_or_else(|| ApiError::not_found("job_not_found", format!("no evaluation job {job}")))?;
    let mut v = serde_json::to_value(s).expect("job state serializes");
    v["job_id"] = json!(job);
    Ok(Json(v))
}
