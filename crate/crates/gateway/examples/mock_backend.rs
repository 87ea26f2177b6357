//! Starts a mock backend, runs one request to completion and cancels another
//! mid-flight.

use std::time::Duration;

use toltiers_gateway::mock::{serve_mock, MockBackend, Profile};
use toltiers_gateway::protocol::{CancelResponse, InferResponse};

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let url = format!("http://{}", listener.local_addr()?);
    let backend = MockBackend::new(Profile::parse_fixed("1=50:0.92,2=400:0.97").map_err(anyhow::Error::msg)?);
    tokio::spawn(serve_mock(listener, backend.clone()));
    let client = reqwest::Client::new();

    let done: InferResponse = client
        .post(format!("{url}/infer"))
        .header("Version", "1")
        .header("Request-Id", "r1")
        .send()
        .await?
        .json()
        .await?;
    println!("version 1 answered in {:.1} ms with confidence {:?}", done.server_ms, done.confidence);

    let slow = tokio::spawn({
        let (client, url) = (client.clone(), url.clone());
        async move { client.post(format!("{url}/infer")).header("Version", "2").header("Request-Id", "r2").send().await }
    });
    tokio::time::sleep(Duration::from_millis(100)).await;
    let cancelled: Vec<CancelResponse> =
        client.post(format!("{url}/cancel/r2")).header("Version", "2").send().await?.json().await?;
    println!("cancel: {cancelled:?}");
    println!("cancelled request answered {}", slow.await??.status());
    println!("abort log: {:?}", backend.cancel_log());
    Ok(())
}
