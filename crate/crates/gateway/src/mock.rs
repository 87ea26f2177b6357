//! Mock service-version backend.
//!
//! One server can stand in for any number of versions; the `Version` header
//! selects which. Work is simulated by sleeping for the profiled server time
//! and can be cut short by `POST /cancel/{request_id}`, which bills the time
//! elapsed up to the cancel and records it in the log served at
//! `GET /aborts`. A cancelled `/infer` answers 409 without a result.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::Notify;
use toltiers::trace::Trace;
use toltiers::RequestRecord;

use crate::protocol::{CancelResponse, ErrorBody, InferResponse, HEADER_REQUEST_ID, HEADER_VERSION};

/// Pre-cancels older than this are ignored by a late-arriving `/infer`.
const PRE_CANCEL_TTL: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedVersion {
    pub delay_ms: f64,
    /// `None` makes the backend omit the confidence field.
    pub confidence: Option<f64>,
    #[serde(default)]
    pub result: Value,
}

#[derive(Debug, Clone)]
pub enum Profile {
    /// Same delay and confidence for every request of a version.
    Fixed(BTreeMap<u16, FixedVersion>),
    /// Per-record outcomes looked up by `Request-Id`.
    Replay { version_count: usize, records: Arc<HashMap<String, RequestRecord>> },
}

impl Profile {
    pub fn replay(trace: &Trace) -> Self {
        let records = trace.records().iter().map(|r| (r.id.clone(), r.clone())).collect();
        Profile::Replay { version_count: trace.version_count(), records: Arc::new(records) }
    }

    /// Parses `v=delay_ms:confidence[,…]`, e.g. `1=100:0.9,2=300:0.95`.
    pub fn parse_fixed(profile: &str) -> Result<Self, String> {
        let mut out = BTreeMap::new();
        for part in profile.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (v, rest) = part.split_once('=').ok_or_else(|| format!("expected v=delay:conf, got {part:?}"))?;
            let (d, c) = rest.split_once(':').ok_or_else(|| format!("expected delay:conf, got {rest:?}"))?;
            let v: u16 = v.trim().parse().map_err(|e| format!("version {v:?}: {e}"))?;
            let delay_ms: f64 = d.trim().parse().map_err(|e| format!("delay {d:?}: {e}"))?;
            let confidence: f64 = c.trim().parse().map_err(|e| format!("confidence {c:?}: {e}"))?;
            if !(0.0..=1.0).contains(&confidence) || !(delay_ms >= 0.0) {
                return Err(format!("out of range in {part:?}"));
            }
            out.insert(v, FixedVersion { delay_ms, confidence: Some(confidence), result: json!({ "version": v }) });
        }
        if out.is_empty() {
            return Err("empty profile".into());
        }
        Ok(Profile::Fixed(out))
    }
}

#[derive(Debug)]
enum Slot {
    Running { notify: Arc<Notify>, start: Instant },
    Done { server_ms: f64 },
    Aborted { billed_ms: f64 },
    PreCancelled { at: Instant },
}

#[derive(Debug)]
pub struct MockBackend {
    profile: Profile,
    slots: Mutex<HashMap<(String, u16), Slot>>,
    log: Mutex<Vec<CancelResponse>>,
}

enum Plan {
    Work { delay_ms: f64, confidence: Option<f64>, result: Value },
    Reject(StatusCode, String),
}

impl MockBackend {
    pub fn new(profile: Profile) -> Arc<Self> {
        Arc::new(MockBackend { profile, slots: Mutex::new(HashMap::new()), log: Mutex::new(Vec::new()) })
    }

    /// Every cancel received so far, in arrival order.
    pub fn cancel_log(&self) -> Vec<CancelResponse> {
        self.log.lock().expect("log lock").clone()
    }

    pub fn router(self: &Arc<Self>) -> Router {
        Router::new()
            .route("/infer", post(infer))
            .route("/cancel/{request_id}", post(cancel))
            .route("/aborts", get(aborts))
            .with_state(Arc::clone(self))
    }

    fn plan(&self, request_id: &str, version: u16) -> Plan {
        match &self.profile {
            Profile::Fixed(map) => match map.get(&version) {
                Some(f) => Plan::Work { delay_ms: f.delay_ms, confidence: f.confidence, result: f.result.clone() },
                None => Plan::Reject(StatusCode::BAD_REQUEST, format!("version {version} not served here")),
            },
            Profile::Replay { version_count, records } => {
                if version == 0 || version as usize > *version_count {
                    return Plan::Reject(
                        StatusCode::BAD_REQUEST,
                        format!("version {version} not in 1..={version_count}"),
                    );
                }
                match records.get(request_id) {
                    Some(r) => {
                        let o = &r.outcomes[version as usize - 1];
                        Plan::Work {
                            delay_ms: o.server_ms,
                            confidence: Some(o.confidence),
                            result: json!({ "record": r.id, "version": version, "error": o.error }),
                        }
                    }
                    None => Plan::Reject(StatusCode::NOT_FOUND, format!("unknown request id {request_id:?}")),
                }
            }
        }
    }
}

fn reject(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: msg.into() })).into_response()
}

fn header<'a>(headers: &'a HeaderMap, name: &str) -> Option<&'a str> {
    headers.get(name).and_then(|v| v.to_str().ok())
}

async fn infer(State(m): State<Arc<MockBackend>>, headers: HeaderMap, _body: Bytes) -> Response {
    let Some(version) = header(&headers, HEADER_VERSION).and_then(|v| v.trim().parse::<u16>().ok()) else {
        return reject(StatusCode::BAD_REQUEST, "missing or bad Version header");
    };
    let Some(request_id) = header(&headers, HEADER_REQUEST_ID).map(str::to_string) else {
        return reject(StatusCode::BAD_REQUEST, "missing Request-Id header");
    };
    let (delay_ms, confidence, result) = match m.plan(&request_id, version) {
        Plan::Work { delay_ms, confidence, result } => (delay_ms, confidence, result),
        Plan::Reject(status, msg) => return reject(status, msg),
    };

    let key = (request_id, version);
    let notify = Arc::new(Notify::new());
    let start = Instant::now();
    {
        let mut slots = m.slots.lock().expect("slots lock");
        match slots.get(&key) {
            Some(Slot::PreCancelled { at }) if at.elapsed() < PRE_CANCEL_TTL => {
                slots.remove(&key);
                return reject(StatusCode::CONFLICT, "cancelled");
            }
            Some(Slot::Running { .. }) => return reject(StatusCode::CONFLICT, "duplicate in-flight request"),
            _ => {}
        }
        slots.insert(key.clone(), Slot::Running { notify: Arc::clone(&notify), start });
    }

    let cancelled = tokio::select! {
        _ = tokio::time::sleep(Duration::from_secs_f64(delay_ms / 1000.0)) => false,
        _ = notify.notified() => true,
    };
    let server_ms = start.elapsed().as_secs_f64() * 1000.0;
    let mut slots = m.slots.lock().expect("slots lock");
    if cancelled || matches!(slots.get(&key), Some(Slot::Aborted { .. })) {
        slots.remove(&key);
        return reject(StatusCode::CONFLICT, "cancelled");
    }
    slots.insert(key, Slot::Done { server_ms });
    drop(slots);
    Json(InferResponse { result, confidence, server_ms, version }).into_response()
}

async fn cancel(State(m): State<Arc<MockBackend>>, Path(request_id): Path<String>, headers: HeaderMap) -> Response {
    let version = match header(&headers, HEADER_VERSION) {
        Some(v) => match v.trim().parse::<u16>() {
            Ok(v) => Some(v),
            Err(_) => return reject(StatusCode::BAD_REQUEST, "bad Version header"),
        },
        None => None,
    };
    let mut slots = m.slots.lock().expect("slots lock");
    let keys: Vec<(String, u16)> = match version {
        Some(v) => vec![(request_id.clone(), v)],
        None => slots.keys().filter(|k| k.0 == request_id).cloned().collect(),
    };
    let mut out = Vec::with_capacity(keys.len());
    for key in keys {
        let (aborted, billed_ms) = match slots.get(&key) {
            Some(Slot::Running { notify, start }) => {
                let billed_ms = start.elapsed().as_secs_f64() * 1000.0;
                notify.notify_one();
                slots.insert(key.clone(), Slot::Aborted { billed_ms });
                (true, billed_ms)
            }
            Some(Slot::Done { server_ms }) => (false, *server_ms),
            Some(Slot::Aborted { billed_ms }) => (true, *billed_ms),
            Some(Slot::PreCancelled { .. }) | None => {
                slots.insert(key.clone(), Slot::PreCancelled { at: Instant::now() });
                (true, 0.0)
            }
        };
        out.push(CancelResponse { request_id: key.0, version: key.1, aborted, billed_ms });
    }
    drop(slots);
    m.log.lock().expect("log lock").extend(out.iter().cloned());
    Json(out).into_response()
}

async fn aborts(State(m): State<Arc<MockBackend>>) -> Json<Vec<CancelResponse>> {
    Json(m.cancel_log())
}

/// Serves `backend` on an already-bound listener until the task is dropped.
pub async fn serve_mock(listener: TcpListener, backend: Arc<MockBackend>) -> std::io::Result<()> {
    axum::serve(listener, backend.router()).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_profile_parsing() {
        match Profile::parse_fixed("1=100:0.9, 2=300:0.95").unwrap() {
            Profile::Fixed(m) => {
                assert_eq!(m[&1].delay_ms, 100.0);
                assert_eq!(m[&2].confidence, Some(0.95));
            }
            _ => unreachable!(),
        }
        assert!(Profile::parse_fixed("1=100").is_err());
        assert!(Profile::parse_fixed("1=100:1.5").is_err());
        assert!(Profile::parse_fixed("").is_err());
    }
}
