//! HTTP front end: `POST /compute`, `GET /metrics`, `POST /reload-rules`.
//!
//! A missing `Tolerance` header means 0.0 and a missing `Objective` header
//! means `response-time`, the strictest service.

use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router as HttpRouter};
use serde_json::json;
use tokio::net::TcpListener;
use toltiers::rulegen::Objective;

use crate::metrics::MetricsSnapshot;
use crate::protocol::{ErrorBody, HEADER_OBJECTIVE, HEADER_REQUEST_ID, HEADER_TOLERANCE};
use crate::router::{RouteError, Router, TierRequest};

pub fn app(router: Arc<Router>) -> HttpRouter {
    HttpRouter::new()
        .route("/compute", post(compute))
        .route("/metrics", get(metrics))
        .route("/reload-rules", post(reload_rules))
        .with_state(router)
}

pub async fn serve(listener: TcpListener, router: Arc<Router>) -> std::io::Result<()> {
    axum::serve(listener, app(router)).await
}

fn error_response(status: StatusCode, message: String) -> Response {
    (status, Json(ErrorBody { error: message })).into_response()
}

fn parse_request(router: &Router, headers: &HeaderMap, payload: Bytes) -> Result<TierRequest, RouteError> {
    let text = |name: &str| -> Result<Option<String>, RouteError> {
        headers
            .get(name)
            .map(|v| v.to_str().map(|s| s.trim().to_string()))
            .transpose()
            .map_err(|_| RouteError::BadRequest(format!("{name} header is not valid text")))
    };
    let tolerance = match text(HEADER_TOLERANCE)? {
        None => 0.0,
        Some(s) => s.parse::<f64>().ok().filter(|t| t.is_finite()).ok_or_else(|| {
            RouteError::BadRequest(format!("bad Tolerance {s:?}: expected a decimal fraction such as 0.01"))
        })?,
    };
    let objective = match text(HEADER_OBJECTIVE)? {
        None => Objective::ResponseTime,
        Some(s) => s.parse::<Objective>().map_err(|e| RouteError::BadRequest(e.to_string()))?,
    };
    let request_id = text(HEADER_REQUEST_ID)?.unwrap_or_else(|| router.fresh_request_id());
    Ok(TierRequest { tolerance, objective, payload, request_id })
}

async fn compute(State(router): State<Arc<Router>>, headers: HeaderMap, payload: Bytes) -> Response {
    let start = Instant::now();
    let outcome = match parse_request(&router, &headers, payload) {
        Ok(req) => router.route(req).await,
        Err(e) => Err(e),
    };
    match outcome {
        Ok(resp) => {
            let latency_ms = start.elapsed().as_secs_f64() * 1000.0;
            router.metrics().record_served(
                format!("{}@{}", resp.objective, resp.tier),
                resp.early_terminated,
                latency_ms,
                resp.server_ms_billed,
            );
            Json(resp).into_response()
        }
        Err(e) => {
            let status = e.status();
            router.metrics().record_error(status, 0.0);
            error_response(StatusCode::from_u16(status).expect("valid status"), e.to_string())
        }
    }
}

async fn metrics(State(router): State<Arc<Router>>) -> Json<MetricsSnapshot> {
    Json(router.metrics().snapshot())
}

async fn reload_rules(State(router): State<Arc<Router>>) -> Response {
    match router.reload() {
        Ok(rules) => {
            let size = |o| rules.table(o).map(|t| t.entries.len());
            Json(json!({
                "reloaded": true,
                "response_time_entries": size(Objective::ResponseTime),
                "cost_entries": size(Objective::Cost),
            }))
            .into_response()
        }
        Err(e) => error_response(StatusCode::CONFLICT, e),
    }
}
