//! Builds a response-time rule table and looks up a few tolerances.
//!
//! `cargo run --release --example rule_table -- /tmp/rules.json`

use toltiers::rulegen::Objective;
use toltiers::trace::{generate_trace, SynthParams};
use toltiers::{enumerate_candidates, BootstrapOptions, EnsembleConfig, PairSelection, RuleGenerator};

fn main() -> toltiers::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "rules.json".into());
    let trace = generate_trace(&SynthParams::asr(10_000, 9))?;
    let n = trace.version_count();
    let thresholds: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let candidates = enumerate_candidates(trace.records(), n, &thresholds, &PairSelection::FastestSlowest)?;
    let generator =
        RuleGenerator::new(trace.records(), &candidates, EnsembleConfig::osfa(n), BootstrapOptions::default())?;
    let tolerances: Vec<f64> = (0..=10).map(|i| i as f64 / 100.0).collect();
    let table = generator.generate(&tolerances, Objective::ResponseTime)?;
    table.save(&out)?;
    for t in [0.0, 0.015, 0.05, 0.1] {
        let e = table.lookup(t).expect("within range");
        println!(
            "tolerance {t:<6} -> tier {:<5} {:<16} worst resp {:.1} ms",
            e.tolerance,
            e.config.to_string(),
            e.predicted.response_ms
        );
    }
    match table.lookup(0.2) {
        Ok(_) => unreachable!(),
        Err(e) => println!("{e}"),
    }
    println!("wrote {out}");
    Ok(())
}
