//! Trains rule tables on a replayable trace, serves them through the gateway
//! in front of mock backends, and sends requests at several tolerances.
//!
//! `cargo run --release --example gateway_end_to_end`

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use toltiers::rulegen::Objective;
use toltiers::trace::{generate_trace, SynthParams};
use toltiers::{enumerate_candidates, BootstrapOptions, EnsembleConfig, PairSelection, RuleGenerator};
use toltiers_gateway::metrics::MetricsSnapshot;
use toltiers_gateway::mock::{serve_mock, MockBackend, Profile};
use toltiers_gateway::protocol::ComputeResponse;
use toltiers_gateway::router::{Router, RuleSet};
use toltiers_gateway::server::serve;

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    // Short server times keep the demo quick.
    let mut params = SynthParams::asr(5_000, 8);
    params.base_server_ms = 20.0;
    params.network_ms_mean = 2.0;
    let trace = generate_trace(&params)?;
    let n = trace.version_count();

    let thresholds: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let candidates = enumerate_candidates(trace.records(), n, &thresholds, &PairSelection::FastestSlowest)?;
    let generator =
        RuleGenerator::new(trace.records(), &candidates, EnsembleConfig::osfa(n), BootstrapOptions::default())?;
    let tolerances: Vec<f64> = (0..=10).map(|i| i as f64 / 100.0).collect();
    let rules = RuleSet {
        response_time: Some(generator.generate(&tolerances, Objective::ResponseTime)?),
        cost: Some(generator.generate(&tolerances, Objective::Cost)?),
    };

    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let backend_url = format!("http://{}", listener.local_addr()?);
    tokio::spawn(serve_mock(listener, MockBackend::new(Profile::replay(&trace))));
    let pools: BTreeMap<u16, Vec<String>> = (1..=n as u16).map(|v| (v, vec![backend_url.clone()])).collect();
    let router = Arc::new(Router::new(rules, pools, Duration::from_secs(10), None).map_err(anyhow::Error::msg)?);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let gateway = format!("http://{}", listener.local_addr()?);
    tokio::spawn(serve(listener, router));

    let client = reqwest::Client::new();
    for (i, (tolerance, objective)) in
        [("0", "response-time"), ("0.01", "response-time"), ("0.05", "cost"), ("0.1", "cost")].into_iter().enumerate()
    {
        let r: ComputeResponse = client
            .post(format!("{gateway}/compute"))
            .header("Tolerance", tolerance)
            .header("Objective", objective)
            .header("Request-Id", &trace.records()[i].id)
            .body("audio bytes")
            .send()
            .await?
            .json()
            .await?;
        println!(
            "{objective:<13} tolerance {tolerance:<5} -> {:<14} version {} ET {:<5} billed {:.1} ms",
            r.policy, r.version, r.early_terminated, r.server_ms_billed
        );
    }
    let out_of_range = client.post(format!("{gateway}/compute")).header("Tolerance", "0.5").send().await?;
    println!("tolerance 0.5 -> {} {}", out_of_range.status(), out_of_range.text().await?);
    let m: MetricsSnapshot = client.get(format!("{gateway}/metrics")).send().await?.json().await?;
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(())
}
