//! Generates a small speech-like trace and prints per-version statistics.
//!
//! `cargo run --example gen_trace -- /tmp/trace.jsonl`

use toltiers::trace::{generate_trace, save_trace, SynthParams};
use toltiers::VersionId;

fn main() -> toltiers::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "trace.jsonl".into());
    let trace = generate_trace(&SynthParams::asr(5_000, 7))?;
    save_trace(&trace, &out)?;
    println!("wrote {} records to {out}", trace.len());
    for v in 1..=trace.version_count() {
        let id = VersionId::new(v);
        println!("{id}: mean error {:.4}, mean server time {:7.1} ms", trace.mean_error(id), trace.mean_server_ms(id));
    }
    Ok(())
}
