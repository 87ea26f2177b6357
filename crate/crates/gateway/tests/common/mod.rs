#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use toltiers::rulegen::{Objective, Provenance, RuleEntry, TierRuleTable, WorstCase};
use toltiers::EnsembleConfig;
use toltiers_gateway::mock::{serve_mock, MockBackend, Profile};
use toltiers_gateway::router::{Router, RuleSet};
use toltiers_gateway::server::serve;

pub async fn spawn_mock(profile: Profile) -> (String, Arc<MockBackend>) {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let backend = MockBackend::new(profile);
    tokio::spawn(serve_mock(listener, Arc::clone(&backend)));
    (url, backend)
}

pub async fn spawn_gateway(router: Arc<Router>) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(serve(listener, router));
    url
}

/// Base URL of a port nothing listens on.
pub async fn dead_url() -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    url
}

pub fn table(objective: Objective, entries: &[(f64, EnsembleConfig)]) -> TierRuleTable {
    TierRuleTable {
        objective,
        reference_config: entries[0].1,
        confidence_level: 0.999,
        entries: entries
            .iter()
            .map(|&(tolerance, config)| RuleEntry {
                tolerance,
                config,
                predicted: WorstCase { err_deg: 0.0, response_ms: 0.0, cost_ms: 0.0 },
            })
            .collect(),
        provenance: Provenance { seed: 0, trace_digest: "t".into(), candidate_digest: "c".into() },
    }
}

pub fn rules_rt(entries: &[(f64, EnsembleConfig)]) -> RuleSet {
    RuleSet { response_time: Some(table(Objective::ResponseTime, entries)), cost: None }
}

pub fn pools(urls: &[(u16, &str)]) -> BTreeMap<u16, Vec<String>> {
    let mut out: BTreeMap<u16, Vec<String>> = BTreeMap::new();
    for (v, u) in urls {
        out.entry(*v).or_default().push(u.to_string());
    }
    out
}

pub fn router(rules: RuleSet, pools: BTreeMap<u16, Vec<String>>) -> Arc<Router> {
    Arc::new(Router::new(rules, pools, Duration::from_secs(10), None).unwrap())
}
