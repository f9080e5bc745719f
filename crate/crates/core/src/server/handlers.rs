// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{BytesRejection, PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use super::cache::SessionView;
use super::error::ApiError;
use super::resources::{self, BasisResource, MAX_LENS_K};
use super::AppState;
use crate::glossstore::{GlossFilter, GlossPatch, NewGloss, Session, StoreError, DERIVED_KIND};
use crate::model::Model;
use crate::projection::{FitScope, ProjectionBasis};

type Shared = State<Arc<AppState>>;
type ApiResult<T = Response> = Result<T, ApiError>;

fn body_bytes(body: Result<Bytes, BytesRejection>) -> ApiResult<Bytes> {
    body.map_err(|e| {
        let status = e.status();
        let code = if status == StatusCode::PAYLOAD_TOO_LARGE {
            "payload_too_large"
        } else {
            "invalid_body"
        };
        ApiError::new(status, code, e.body_text())
    })
}

fn json_body<T: DeserializeOwned>(body: Result<Bytes, BytesRejection>) -> ApiResult<T> {
    let bytes = body_bytes(body)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_body", format!("invalid request body: {e}")))
}

fn path<T>(p: Result<Path<T>, PathRejection>) -> ApiResult<T> {
    p.map(|Path(v)| v)
        .map_err(|e| ApiError::validation(format!("invalid path: {}", e.body_text())))
}

fn query(q: Result<Query<HashMap<String, String>>, QueryRejection>) -> ApiResult<HashMap<String, String>> {
    q.map(|Query(v)| v)
        .map_err(|e| ApiError::validation(format!("invalid query: {}", e.body_text())))
}

fn parse_index(name: &str, text: &str) -> ApiResult<usize> {
    text.parse()
        .map_err(|_| ApiError::validation(format!("{name} must be a non-negative integer, got {text:?}")))
}

fn parse_flag(name: &str, text: &str) -> ApiResult<bool> {
    match text {
        "" | "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        _ => Err(ApiError::validation(format!("{name} must be true or false, got {text:?}"))),
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| {
        tracing::error!(error = %e, "worker task failed");
        ApiError::internal("worker task failed")
    })?
}

/// Traces a stored session and fits its basis.
fn compute_view(model: &Model, session: Session) -> ApiResult<SessionView> {
    if session.n_layers != model.config().n_layers {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "incompatible_session",
            format!(
                "session has {} layers but the loaded model has {}",
                session.n_layers,
                model.config().n_layers
            ),
        ));
    }
    let trace = model.forward_trace(&session.token_ids)?;
    let basis = ProjectionBasis::fit_trace(&trace, FitScope::Session)?;
    Ok(SessionView { session, trace, basis })
}

async fn session_view(state: &Arc<AppState>, id: &str) -> ApiResult<Arc<SessionView>> {
    let session = state.store.get_session(id)?;
    let st = state.clone();
    state
        .cache
        .get_or_compute(id, || blocking(move || compute_view(&st.model, session)))
        .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    prompt: String,
}

pub async fn create_session(State(state): Shared, body: Result<Bytes, BytesRejection>) -> ApiResult {
    let CreateSession { prompt } = json_body(body)?;
    if prompt.is_empty() {
        return Err(ApiError::validation("prompt must not be empty"));
    }
    let st = state.clone();
    let view = blocking(move || {
        let ids = st.tokenizer.encode(&prompt);
        let limit = st.model.config().n_ctx;
        if ids.len() > limit {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "too_long",
                format!("prompt is {} tokens; the limit is {limit}", ids.len()),
            )
            .with_details(json!({ "token_count": ids.len(), "limit": limit })));
        }
        let trace = st.model.forward_trace(&ids)?;
        let basis = ProjectionBasis::fit_trace(&trace, FitScope::Session)?;
        let cfg = st.model.config();
        let session = st.store.create_session(&prompt, ids, st.model.id(), cfg.n_layers)?;
        Ok(SessionView { session, trace, basis })
    })
    .await?;
    let view = state.cache.insert(view);
    let body = resources::session_resource(&state.tokenizer, &state.model, &view.session, &view.basis);
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

pub async fn get_session(State(state): Shared, id: Result<Path<String>, PathRejection>) -> ApiResult {
    let id = path(id)?;
    let view = session_view(&state, &id).await?;
    Ok(Json(resources::session_resource(&state.tokenizer, &state.model, &view.session, &view.basis)).into_response())
}

pub async fn get_trajectory(
    State(state): Shared,
    p: Result<Path<(String, String)>, PathRejection>,
    q: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> ApiResult {
    let (id, pos) = path(p)?;
    let q = query(q)?;
    let token_pos = parse_index("token_pos", &pos)?;
    let k = q.get("k").map(|v| parse_index("k", v)).transpose()?.unwrap_or(0);
    if k > MAX_LENS_K {
        return Err(ApiError::validation(format!("k must be at most {MAX_LENS_K}")));
    }
    let raw = q.get("raw").map(|v| parse_flag("raw", v)).transpose()?.unwrap_or(false);
    let view = session_view(&state, &id).await?;
    let st = state.clone();
    let body = blocking(move || {
        Ok(resources::trajectory_resource(
            &st.model,
            &st.tokenizer,
            &view.trace,
            &view.basis,
            token_pos,
            k,
            raw,
        )?)
    })
    .await?;
    Ok(Json(body).into_response())
}

pub async fn get_grid(State(state): Shared, id: Result<Path<String>, PathRejection>) -> ApiResult {
    let id = path(id)?;
    let view = session_view(&state, &id).await?;
    Ok(Json(resources::grid_resource(&view.trace)).into_response())
}

pub async fn get_attention(State(state): Shared, p: Result<Path<(String, String)>, PathRejection>) -> ApiResult {
    let (id, block) = path(p)?;
    let block = parse_index("block", &block)?;
    let session = state.store.get_session(&id)?;
    let st = state.clone();
    let body = blocking(move || {
        let n = session.n_tokens();
        let flat = st.model.attention_pattern(&session.token_ids, block)?;
        Ok(resources::attention_resource(block, n, &flat))
    })
    .await?;
    Ok(Json(body).into_response())
}

/// The store's export with the session's projection basis as the second
/// line.
pub async fn export_session(State(state): Shared, id: Result<Path<String>, PathRejection>) -> ApiResult {
    let id = path(id)?;
    let view = session_view(&state, &id).await?;
    let text = session_export(&state.store.export_session(&id)?, &id, &view.basis);
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

/// Inserts a `basis` line after the session line of a store export.
pub fn session_export(store_export: &str, session_id: &str, basis: &ProjectionBasis) -> String {
    let mut line = serde_json::to_value(BasisResource::from(basis)).expect("basis serializes");
    let obj = line.as_object_mut().expect("struct serializes to object");
    let mut ordered = Map::new();
    ordered.insert("kind".into(), DERIVED_KIND.into());
    ordered.insert("session_id".into(), session_id.into());
    ordered.append(obj);
    let basis_line = serde_json::to_string(&Value::Object(ordered)).expect("json");
    let split = store_export.find('\n').map_or(store_export.len(), |i| i + 1);
    format!("{}{basis_line}\n{}", &store_export[..split], &store_export[split..])
}

pub async fn import_glosses(State(state): Shared, body: Result<Bytes, BytesRejection>) -> ApiResult {
    let bytes = body_bytes(body)?;
    let st = state.clone();
    let n = blocking(move || Ok(st.store.import(&bytes)?)).await?;
    Ok(Json(json!({ "imported": n })).into_response())
}

pub async fn create_gloss(State(state): Shared, body: Result<Bytes, BytesRejection>) -> ApiResult {
    let new: NewGloss = json_body(body)?;
    let st = state.clone();
    let g = blocking(move || Ok(st.store.create_gloss(new)?)).await?;
    Ok((StatusCode::CREATED, Json(g)).into_response())
}

pub async fn get_gloss(State(state): Shared, id: Result<Path<String>, PathRejection>) -> ApiResult {
    let id = path(id)?;
    Ok(Json(state.store.get_gloss(&id)?).into_response())
}

pub async fn list_glosses(State(state): Shared, q: Result<Query<HashMap<String, String>>, QueryRejection>) -> ApiResult {
    let q = query(q)?;
    let session = q
        .get("session")
        .ok_or_else(|| ApiError::validation("query parameter session is required"))?;
    let filter = GlossFilter {
        token_pos: q.get("token_pos").map(|v| parse_index("token_pos", v)).transpose()?,
        layer: q.get("layer").map(|v| parse_index("layer", v)).transpose()?,
        tag: q.get("tag").cloned(),
    };
    let glosses = state.store.list_glosses(session, &filter)?;
    Ok(Json(json!({ "glosses": glosses })).into_response())
}

/// Fields a patch may not touch.
const IMMUTABLE: [&str; 6] = ["anchor", "gloss_id", "session_id", "author", "created_at", "updated_at"];

pub async fn update_gloss(
    State(state): Shared,
    id: Result<Path<String>, PathRejection>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult {
    let id = path(id)?;
    let fields: Map<String, Value> = json_body(body)?;
    state.store.get_gloss(&id)?;
    for key in fields.keys() {
        if let Some(&field) = IMMUTABLE.iter().find(|f| **f == key.as_str()) {
            return Err(StoreError::ImmutableField(field).into());
        }
        if key != "body" && key != "tags" {
            return Err(ApiError::validation(format!("unknown field {key:?}")));
        }
    }
    let field = |name: &str| fields.get(name).filter(|v| !v.is_null()).cloned();
    let body = field("body")
        .map(serde_json::from_value::<String>)
        .transpose()
        .map_err(|_| ApiError::validation("body must be a string"))?;
    let tags = field("tags")
        .map(serde_json::from_value::<BTreeSet<String>>)
        .transpose()
        .map_err(|_| ApiError::validation("tags must be an array of strings"))?;
    let st = state.clone();
    let g = blocking(move || {
        Ok(st.store.update_gloss(
            &id,
            GlossPatch {
                body,
                tags,
                anchor: None,
            },
        )?)
    })
    .await?;
    Ok(Json(g).into_response())
}

pub async fn delete_gloss(State(state): Shared, id: Result<Path<String>, PathRejection>) -> ApiResult {
    let id = path(id)?;
    let st = state.clone();
    let gone = id.clone();
    blocking(move || Ok(st.store.delete_gloss(&gone)?)).await?;
    Ok(Json(json!({ "deleted": id })).into_response())
}
