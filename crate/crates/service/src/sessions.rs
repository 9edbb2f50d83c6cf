use std::sync::Arc;

use axum::body::Body;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use canopy_agent::{ArtifactData, ArtifactKind, ComposeMode, PlannerKind, Session, Turn};
use canopy_core::raster::{binarize_mask, ChangeMask, ImagePair, Provenance, Raster};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::{ApiError, ApiJson, AppState};

pub async fn create(State(state): State<Arc<AppState>>) -> impl IntoResponse {
    (StatusCode::CREATED, Json(json!({"session_id": state.new_session()})))
}

fn pair_record(session: &Session) -> Value {
    match session.latest(ArtifactKind::Pair) {
        Some(a) => {
            let mut v = a.payload();
            v["artifact_id"] = json!(a.id);
            v
        }
        None => Value::Null,
    }
}

pub(crate) fn turn_record(turn: &Turn, session: &Session) -> Value {
    let mut v = serde_json::to_value(turn).expect("turn serializes");
    let artifacts: Vec<Value> = turn
        .calls
        .iter()
        .filter_map(|c| c.result_ref.as_deref())
        .filter_map(|id| session.artifact(id))
        .map(|a| a.describe())
        .collect();
    v["artifacts"] = Value::Array(artifacts);
    v
}

pub async fn describe(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let handle = state.session(&id)?;
    let session = handle.lock().await;
    Ok(Json(json!({
        "session_id": session.id,
        "pair": pair_record(&session),
        "turns": session.turns().iter().map(|t| turn_record(t, &session)).collect::<Vec<_>>(),
        "artifacts": session.artifacts().iter().map(|a| a.describe()).collect::<Vec<_>>(),
    })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairUpload {
    /// Base64-encoded first-epoch image.
    pub a: String,
    /// Base64-encoded second-epoch image.
    pub b: String,
    /// Optional base64-encoded reference change mask.
    #[serde(default)]
    pub mask: Option<String>,
    #[serde(default)]
    pub pair_id: Option<String>,
}

fn decode_field(field: &str, data: &str) -> Result<Vec<u8>, ApiError> {
    STANDARD
        .decode(data.trim())
        .map_err(|e| ApiError::bad_request("invalid_base64", format!("{field}: {e}")).with_field(field))
}

fn decode_image(field: &str, data: &str) -> Result<Raster, ApiError> {
    Raster::decode(&decode_field(field, data)?)
        .map_err(|e| ApiError::bad_request("invalid_image", format!("{field}: {e}")).with_field(field))
}

pub async fn upload_pair(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    ApiJson(body): ApiJson<PairUpload>,
) -> Result<Json<Value>, ApiError> {
    let handle = state.session(&id)?;
    let decoded = tokio::task::spawn_blocking(move || -> Result<(ImagePair, Option<ChangeMask>), ApiError> {
        let a = decode_image("a", &body.a)?;
        let b = decode_image("b", &body.b)?;
        let pair_id = body.pair_id.unwrap_or_else(|| "upload".to_string());
        let pair = ImagePair::new(pair_id, a, b).map_err(|e| ApiError::from(e).with_field("b"))?;
        let truth = match &body.mask {
            Some(m) => {
                let mask = ChangeMask::decode(&decode_field("mask", m)?, Provenance::GroundTruth)
                    .map_err(|e| ApiError::bad_request("invalid_image", format!("mask: {e}")).with_field("mask"))?;
                if (mask.width(), mask.height()) != (pair.width(), pair.height()) {
                    return Err(ApiError::bad_request(
                        "dimension_mismatch",
                        format!(
                            "mask is {}x{}, images are {}x{}",
                            mask.width(),
                            mask.height(),
                            pair.width(),
                            pair.height()
                        ),
                    )
                    .with_field("mask"));
                }
                Some(binarize_mask(&mask))
            }
            None => None,
        };
        Ok((pair, truth))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;

    let (pair, truth) = decoded;
    let mut session = handle.lock().await;
    let artifact = session.attach_pair(pair, truth);
    let mut v = artifact.payload();
    v["artifact_id"] = json!(artifact.id);
    Ok(Json(v))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageRequest {
    pub text: String,
    #[serde(default = "default_planner")]
    pub planner: PlannerKind,
    #[serde(default = "default_composer")]
    pub composer: ComposeMode,
}

fn default_planner() -> PlannerKind {
    PlannerKind::Deterministic
}

fn default_composer() -> ComposeMode {
    ComposeMode::Template
}

pub async fn post_message(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    ApiJson(body): ApiJson<MessageRequest>,
) -> Result<Json<Value>, ApiError> {
    if body.text.trim().is_empty() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "empty_message",
            "message text is empty",
        )
        .with_field("text"));
    }
    let handle = state.session(&id)?;
    // tokio's mutex is fair, so concurrent turns on one session run in arrival order
    let mut session = handle.lock_owned().await;
    let agent = state.agent.clone();
    let record = tokio::task::spawn_blocking(move || {
        let turn = agent.run_turn(&mut session, &body.text, body.planner, body.composer);
        turn_record(&turn, &session)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(record))
}

pub async fn artifact(
    State(state): State<Arc<AppState>>,
    Path((id, aid)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let handle = state.session(&id)?;
    let artifact = {
        let session = handle.lock().await;
        session
            .artifact(&aid)
            .cloned()
            .ok_or_else(|| ApiError::not_found("artifact_not_found", format!("no artifact {aid} in session {id}")))?
    };
    if let Some(png) = artifact.png() {
        let bytes = tokio::task::spawn_blocking(move || png)
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?
            .map_err(ApiError::from)?;
        return Ok(([(header::CONTENT_TYPE, "image/png")], Body::from(bytes)).into_response());
    }
    let mut v = artifact.describe();
    v["data"] = artifact.payload();
    if let ArtifactData::Pair { .. } = artifact.data {
        v["data"]["artifact_id"] = json!(artifact.id);
    }
    Ok(Json(v).into_response())
}
