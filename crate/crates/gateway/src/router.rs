//! Live execution of tier rules against pools of backend nodes.
//!
//! Each request resolves to the rule entry with the largest tolerance not
//! above the requested one and runs that entry's config with the same
//! decisions the simulator makes: the early-termination gate is
//! `confidence >= threshold`, full operation returns the more confident
//! result (ties to the higher version), and a concurrent ensemble that
//! terminates early cancels the slower call and bills its partial time.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use axum::body::Bytes;
use reqwest::StatusCode;
use serde_json::Value;
use toltiers::policysim::fo_winner;
use toltiers::rulegen::{Objective, TierRuleTable};
use toltiers::{EnsembleConfig, VersionId};

use crate::config::{GatewayConfig, RulePaths};
use crate::metrics::Metrics;
use crate::protocol::{CancelResponse, ComputeResponse, InferResponse, HEADER_REQUEST_ID, HEADER_VERSION};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RouteError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Unavailable(String),
    #[error("{0}")]
    BadGateway(String),
}

impl RouteError {
    pub fn status(&self) -> u16 {
        match self {
            RouteError::BadRequest(_) => 400,
            RouteError::Unavailable(_) => 503,
            RouteError::BadGateway(_) => 502,
        }
    }
}

/// Rule tables per objective.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleSet {
    pub response_time: Option<TierRuleTable>,
    pub cost: Option<TierRuleTable>,
}

impl RuleSet {
    pub fn table(&self, objective: Objective) -> Option<&TierRuleTable> {
        match objective {
            Objective::ResponseTime => self.response_time.as_ref(),
            Objective::Cost => self.cost.as_ref(),
        }
    }

    pub fn load(paths: &RulePaths) -> Result<Self, String> {
        let load = |p: &Option<std::path::PathBuf>, objective: Objective| -> Result<Option<TierRuleTable>, String> {
            let Some(p) = p else { return Ok(None) };
            let t = TierRuleTable::load(p).map_err(|e| format!("{}: {e}", p.display()))?;
            if t.objective != objective {
                return Err(format!(
                    "{}: table is for objective {}, configured as {objective}",
                    p.display(),
                    t.objective
                ));
            }
            Ok(Some(t))
        };
        Ok(RuleSet {
            response_time: load(&paths.response_time, Objective::ResponseTime)?,
            cost: load(&paths.cost, Objective::Cost)?,
        })
    }

    fn tables(&self) -> impl Iterator<Item = &TierRuleTable> {
        self.response_time.iter().chain(self.cost.iter())
    }
}

#[derive(Debug)]
struct Pool {
    urls: Vec<String>,
    next: AtomicUsize,
}

/// One tier-annotated request.
#[derive(Debug, Clone)]
pub struct TierRequest {
    pub tolerance: f64,
    pub objective: Objective,
    pub payload: Bytes,
    pub request_id: String,
}

#[derive(Debug, Clone)]
struct Reply {
    result: Value,
    confidence: f64,
    server_ms: f64,
}

#[derive(Debug)]
enum CallError {
    Cancelled,
    Route(RouteError),
}

impl From<RouteError> for CallError {
    fn from(e: RouteError) -> Self {
        CallError::Route(e)
    }
}

fn into_route(e: CallError, version: VersionId) -> RouteError {
    match e {
        CallError::Route(r) => r,
        CallError::Cancelled => {
            RouteError::BadGateway(format!("version {version} reported a cancellation nobody sent"))
        }
    }
}

#[derive(Debug)]
pub struct Router {
    rules: RwLock<Arc<RuleSet>>,
    rule_paths: RulePaths,
    expected_digest: Option<String>,
    pools: BTreeMap<VersionId, Pool>,
    client: reqwest::Client,
    metrics: Metrics,
    next_id: AtomicU64,
}

impl Router {
    /// Builds a router from configuration, loading the rule tables.
    pub fn from_config(cfg: &GatewayConfig) -> Result<Self, String> {
        let rules = RuleSet::load(&cfg.rules)?;
        let pools = cfg.pools().map_err(|e| e.to_string())?;
        let mut r = Router::new(
            rules,
            pools,
            Duration::from_millis(cfg.request_timeout_ms),
            cfg.expected_candidate_digest.clone(),
        )?;
        r.rule_paths = cfg.rules.clone();
        Ok(r)
    }

    pub fn new(
        rules: RuleSet,
        pools: BTreeMap<u16, Vec<String>>,
        timeout: Duration,
        expected_digest: Option<String>,
    ) -> Result<Self, String> {
        let client = reqwest::Client::builder().timeout(timeout).build().map_err(|e| e.to_string())?;
        let pools = pools
            .into_iter()
            .map(|(v, urls)| (VersionId::new(v as usize), Pool { urls, next: AtomicUsize::new(0) }))
            .collect();
        let r = Router {
            rules: RwLock::new(Arc::new(RuleSet::default())),
            rule_paths: RulePaths::default(),
            expected_digest,
            pools,
            client,
            metrics: Metrics::default(),
            next_id: AtomicU64::new(0),
        };
        r.check_rules(&rules)?;
        *r.rules.write().expect("rules lock") = Arc::new(rules);
        Ok(r)
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn rules(&self) -> Arc<RuleSet> {
        Arc::clone(&self.rules.read().expect("rules lock"))
    }

    fn check_rules(&self, rules: &RuleSet) -> Result<(), String> {
        if rules.response_time.is_none() && rules.cost.is_none() {
            return Err("no rule tables loaded".into());
        }
        for t in rules.tables() {
            t.validate().map_err(|e| e.to_string())?;
            if let Some(want) = &self.expected_digest {
                if &t.provenance.candidate_digest != want {
                    return Err(format!(
                        "rule table for {} was built from candidate set {}, expected {want}",
                        t.objective, t.provenance.candidate_digest
                    ));
                }
            }
            for e in &t.entries {
                for v in e.config.versions() {
                    if !self.pools.contains_key(&v) {
                        return Err(format!(
                            "rule {} at tolerance {} needs version {v}, which has no backends",
                            e.config, e.tolerance
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Swaps in freshly loaded rule tables; the old ones stay on failure.
    pub fn reload(&self) -> Result<Arc<RuleSet>, String> {
        self.replace_rules(RuleSet::load(&self.rule_paths)?)
    }

    pub fn replace_rules(&self, rules: RuleSet) -> Result<Arc<RuleSet>, String> {
        self.check_rules(&rules)?;
        let rules = Arc::new(rules);
        *self.rules.write().expect("rules lock") = Arc::clone(&rules);
        Ok(rules)
    }

    pub fn fresh_request_id(&self) -> String {
        format!("gw-{}", self.next_id.fetch_add(1, Ordering::Relaxed))
    }

    pub async fn route(&self, req: TierRequest) -> Result<ComputeResponse, RouteError> {
        if req.request_id.is_empty()
            || !req.request_id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        {
            return Err(RouteError::BadRequest(format!("bad Request-Id {:?}", req.request_id)));
        }
        let rules = self.rules();
        let table = rules
            .table(req.objective)
            .ok_or_else(|| RouteError::Unavailable(format!("no rule table loaded for objective {}", req.objective)))?;
        let entry = *table.lookup(req.tolerance).map_err(|e| RouteError::BadRequest(e.to_string()))?;
        let (reply, version, early_terminated, billed, consulted) =
            self.execute(&entry.config, &req.request_id, &req.payload).await?;
        Ok(ComputeResponse {
            result: reply.result,
            confidence: reply.confidence,
            version: version.0,
            policy: entry.config.to_string(),
            early_terminated,
            server_ms_billed: billed,
            request_id: req.request_id,
            objective: req.objective.to_string(),
            tier: entry.tolerance,
            versions_consulted: consulted.iter().map(|v| v.0).collect(),
        })
    }

    async fn execute(
        &self,
        config: &EnsembleConfig,
        rid: &str,
        payload: &Bytes,
    ) -> Result<(Reply, VersionId, bool, f64, Vec<VersionId>), RouteError> {
        match *config {
            EnsembleConfig::Osfa { version } => {
                let r = self.call(version, rid, payload, None).await.map_err(|e| into_route(e, version))?;
                let billed = r.server_ms;
                Ok((r, version, true, billed, vec![version]))
            }
            EnsembleConfig::Seq { first, second, threshold } => {
                let a = self.call(first, rid, payload, None).await.map_err(|e| into_route(e, first))?;
                if a.confidence >= threshold {
                    let billed = a.server_ms;
                    return Ok((a, first, true, billed, vec![first]));
                }
                let b = self.call(second, rid, payload, None).await.map_err(|e| into_route(e, second))?;
                let billed = a.server_ms + b.server_ms;
                let winner = fo_winner((first, a.confidence), (second, b.confidence));
                let reply = if winner == first { a } else { b };
                Ok((reply, winner, false, billed, vec![first, second]))
            }
            EnsembleConfig::Conc { fast, slow, threshold } => {
                self.concurrent(fast, slow, threshold, rid, payload).await
            }
        }
    }

    async fn concurrent(
        &self,
        fast: VersionId,
        slow: VersionId,
        threshold: f64,
        rid: &str,
        payload: &Bytes,
    ) -> Result<(Reply, VersionId, bool, f64, Vec<VersionId>), RouteError> {
        let slow_url = Mutex::new(None::<String>);
        let fast_call = self.call(fast, rid, payload, None);
        let slow_call = self.call(slow, rid, payload, Some(&slow_url));
        tokio::pin!(fast_call, slow_call);

        let mut slow_result = None;
        let fast_result = loop {
            tokio::select! {
                r = &mut fast_call => break r,
                r = &mut slow_call, if slow_result.is_none() => slow_result = Some(r),
            }
        };
        let consulted = vec![fast, slow];

        let fast_reply = match fast_result {
            Ok(r) if r.confidence >= threshold => r,
            Ok(r) => {
                let s = match slow_result {
                    Some(s) => s,
                    None => slow_call.await,
                }
                .map_err(|e| into_route(e, slow))?;
                let billed = r.server_ms + s.server_ms;
                let winner = fo_winner((fast, r.confidence), (slow, s.confidence));
                let reply = if winner == fast { r } else { s };
                return Ok((reply, winner, false, billed, consulted));
            }
            Err(e) => {
                if slow_result.is_none() {
                    self.cancel(slow, rid, &slow_url).await;
                    let _ = slow_call.await;
                }
                return Err(into_route(e, fast));
            }
        };

        // Early termination: the slow result is never used.
        let slow_billed = match slow_result {
            Some(Ok(s)) => s.server_ms,
            Some(Err(_)) => 0.0,
            None => {
                let cancel_billed = self.cancel(slow, rid, &slow_url).await;
                match slow_call.await {
                    Ok(s) => s.server_ms,
                    Err(_) => cancel_billed.unwrap_or(0.0),
                }
            }
        };
        let billed = fast_reply.server_ms + slow_billed;
        Ok((fast_reply, fast, true, billed, consulted))
    }

    /// Sends a cancel for `version` to the backend currently serving it and
    /// returns the partial time that backend billed.
    async fn cancel(&self, version: VersionId, rid: &str, url: &Mutex<Option<String>>) -> Option<f64> {
        let base = url.lock().expect("url lock").clone()?;
        let resp = self
            .client
            .post(format!("{base}/cancel/{rid}"))
            .header(HEADER_VERSION, version.0.to_string())
            .send()
            .await
            .ok()?;
        let entries: Vec<CancelResponse> = resp.json().await.ok()?;
        entries.iter().find(|e| e.version == version.0).map(|e| e.billed_ms)
    }

    async fn call(
        &self,
        version: VersionId,
        rid: &str,
        payload: &Bytes,
        chosen: Option<&Mutex<Option<String>>>,
    ) -> Result<Reply, CallError> {
        let pool = self
            .pools
            .get(&version)
            .ok_or_else(|| RouteError::Unavailable(format!("no backends for version {version}")))?;
        let start = pool.next.fetch_add(1, Ordering::Relaxed);
        let mut last_error = String::new();
        for i in 0..pool.urls.len() {
            let base = &pool.urls[(start + i) % pool.urls.len()];
            if let Some(c) = chosen {
                *c.lock().expect("url lock") = Some(base.clone());
            }
            let sent = self
                .client
                .post(format!("{base}/infer"))
                .header(HEADER_VERSION, version.0.to_string())
                .header(HEADER_REQUEST_ID, rid)
                .body(payload.clone())
                .send()
                .await;
            let resp = match sent {
                Ok(r) => r,
                Err(e) => {
                    last_error = format!("{base}: {e}");
                    continue;
                }
            };
            let status = resp.status();
            if status == StatusCode::CONFLICT {
                return Err(CallError::Cancelled);
            }
            if status.is_server_error() {
                last_error = format!("{base}: HTTP {status}");
                continue;
            }
            if !status.is_success() {
                let body = resp.text().await.unwrap_or_default();
                return Err(
                    RouteError::BadGateway(format!("version {version} backend answered {status}: {body}")).into()
                );
            }
            let body: InferResponse = resp
                .json()
                .await
                .map_err(|e| RouteError::BadGateway(format!("version {version} sent a malformed response: {e}")))?;
            let confidence = body
                .confidence
                .ok_or_else(|| RouteError::BadGateway(format!("version {version} response has no confidence")))?;
            if !(0.0..=1.0).contains(&confidence) {
                return Err(RouteError::BadGateway(format!(
                    "version {version} confidence {confidence} outside [0, 1]"
                ))
                .into());
            }
            return Ok(Reply { result: body.result, confidence, server_ms: body.server_ms });
        }
        Err(RouteError::Unavailable(format!("all backends of version {version} are down ({last_error})")).into())
    }
}
