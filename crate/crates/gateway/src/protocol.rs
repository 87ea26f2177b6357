//! JSON bodies exchanged between clients, the gateway and backends.

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const HEADER_TOLERANCE: &str = "Tolerance";
pub const HEADER_OBJECTIVE: &str = "Objective";
pub const HEADER_VERSION: &str = "Version";
pub const HEADER_REQUEST_ID: &str = "Request-Id";

/// Body of a successful `POST /infer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferResponse {
    pub result: Value,
    /// Kept optional on the wire so a missing field can be told apart from a
    /// parse failure; the gateway rejects responses without it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    pub server_ms: f64,
    pub version: u16,
}

/// Body of `POST /cancel/{request_id}`, one entry per cancelled slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CancelResponse {
    pub request_id: String,
    pub version: u16,
    /// False when the work had already finished; `billed_ms` is then the full
    /// processing time.
    pub aborted: bool,
    pub billed_ms: f64,
}

/// Body of a successful `POST /compute`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeResponse {
    pub result: Value,
    pub confidence: f64,
    pub version: u16,
    /// Display form of the ensemble config, e.g. `Conc(1,7,0.6)`.
    pub policy: String,
    pub early_terminated: bool,
    pub server_ms_billed: f64,
    pub request_id: String,
    pub objective: String,
    /// Tolerance of the rule entry that served the request.
    pub tier: f64,
    pub versions_consulted: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
