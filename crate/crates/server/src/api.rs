//! Wire types and request handlers.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::Ordering;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use ori_core::history::format::to_lines;
use ori_core::{CommitOutcome, CommitRequest, Counters, Mode, Session, ShardState};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ErrorCode};
use crate::AppState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardBody {
    pub key: String,
    pub version: u64,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadEntry {
    pub key: String,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitBody {
    pub key: String,
    pub expected_version: u64,
    pub delta: String,
    pub agent_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub read_set: Option<Vec<ReadEntry>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitOk {
    pub key: String,
    pub new_version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateShardBody {
    pub key: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeBody {
    pub ori_enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsBody {
    pub ori_enabled: bool,
    pub entries: BTreeMap<String, ShardState>,
    pub token_owners: BTreeMap<String, String>,
    pub counters: Counters,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sessions: Option<Vec<Session>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpiredBody {
    pub expired: usize,
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

fn require_agent(agent: Option<&String>) -> Result<&str, ApiError> {
    match agent.map(String::as_str) {
        Some(a) if !a.is_empty() => Ok(a),
        _ => Err(ApiError::bad_request("agent_id is required")),
    }
}

pub async fn get_shard(
    State(app): State<Arc<AppState>>,
    Path(key): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<ShardBody>, ApiError> {
    let agent = require_agent(params.get("agent_id"))?;
    // The body is built from what was logged, inside the registry's critical
    // section; serialisation happens after the guard is gone.
    let read = app.registry.read_shard(&key, agent, app.clock.now())?;
    Ok(Json(ShardBody {
        key: read.key,
        version: read.version,
        content: read.content,
    }))
}

pub async fn commit_v2(State(app): State<Arc<AppState>>, body: Bytes) -> Result<Json<CommitOk>, ApiError> {
    let body: CommitBody = parse_json(&body)?;
    if body.agent_id.is_empty() {
        return Err(ApiError::bad_request("agent_id is required"));
    }
    if body.expected_version == 0 {
        return Err(ApiError::bad_request("expected_version must be at least 1"));
    }
    let explicit = body
        .read_set
        .map(|entries| entries.into_iter().map(|e| (e.key, e.version)).collect());
    let req = CommitRequest {
        key: body.key,
        expected_version: body.expected_version,
        delta: body.delta,
        agent: body.agent_id,
        explicit_read_set: explicit,
    };
    let outcome = app.registry.submit(&req, app.clock.now(), app.mode())?;
    match outcome {
        CommitOutcome::Committed { new_version } => Ok(Json(CommitOk {
            key: req.key,
            new_version,
        })),
        CommitOutcome::CrossShardStale { key, .. } => Err(ApiError::new(ErrorCode::CrossShardStale, Some(key))),
        CommitOutcome::VersionMismatch { expected, current } => Err(ApiError::new(
            ErrorCode::VersionMismatch,
            Some(format!("expected {expected}, current {current}")),
        )),
        CommitOutcome::SessionExpired => Err(ApiError::new(ErrorCode::SessionExpired, None)),
        CommitOutcome::OwnershipViolation { owner } => Err(ApiError::new(ErrorCode::OwnershipViolation, Some(owner))),
    }
}

pub async fn create_shard(State(app): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let body: CreateShardBody = parse_json(&body)?;
    if body.key.is_empty() {
        return Err(ApiError::bad_request("key must not be empty"));
    }
    let version = app.registry.create_shard(&body.key, &body.content)?;
    let out = ShardBody {
        key: body.key,
        version,
        content: body.content,
    };
    Ok((StatusCode::CREATED, Json(out)).into_response())
}

pub async fn reset(State(app): State<Arc<AppState>>) -> Result<StatusCode, ApiError> {
    app.registry.reset()?;
    Ok(StatusCode::NO_CONTENT)
}

pub async fn set_mode(State(app): State<Arc<AppState>>, body: Bytes) -> Result<Json<ModeBody>, ApiError> {
    let body: ModeBody = parse_json(&body)?;
    app.ori_enabled.store(body.ori_enabled, Ordering::SeqCst);
    Ok(Json(body))
}

pub async fn expire_sessions(State(app): State<Arc<AppState>>) -> Json<ExpiredBody> {
    Json(ExpiredBody {
        expired: app.registry.expire_sessions(app.clock.now()),
    })
}

pub async fn stats(State(app): State<Arc<AppState>>, Query(params): Query<HashMap<String, String>>) -> Json<StatsBody> {
    let snap = app.registry.snapshot();
    let with_logs = params.get("logs").is_some_and(|v| v == "1" || v == "true");
    Json(StatsBody {
        ori_enabled: app.mode() == Mode::OriOn,
        entries: snap.entries,
        token_owners: snap.token_owners,
        counters: snap.counters,
        sessions: with_logs.then(|| app.registry.session_logs()),
    })
}

pub async fn history(State(app): State<Arc<AppState>>) -> Result<Response, ApiError> {
    if !app.registry.config().record_history {
        return Err(ApiError::new(
            ErrorCode::UnknownKey,
            Some("history recording is disabled".into()),
        ));
    }
    let text = to_lines(&app.registry.history());
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
}

pub async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}
