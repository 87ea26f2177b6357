//! Simulates OSFA, sequential and concurrent configs over one trace.

use toltiers::trace::{generate_trace, SynthParams};
use toltiers::{simulate, EnsembleConfig};

fn main() -> toltiers::Result<()> {
    let trace = generate_trace(&SynthParams::asr(10_000, 3))?;
    let n = trace.version_count();
    let reference = EnsembleConfig::osfa(n);
    println!("{:<16} {:>8} {:>9} {:>10} {:>9} {:>6}", "config", "error", "err_deg", "resp_ms", "cost_ms", "ET");
    for config in [
        EnsembleConfig::osfa(1),
        reference,
        EnsembleConfig::seq(1, n, 0.6),
        EnsembleConfig::seq(n, 1, 0.6),
        EnsembleConfig::conc(1, n, 0.6),
    ] {
        let r = simulate(trace.records(), &config, &reference)?;
        println!(
            "{:<16} {:>8.4} {:>9.4} {:>10.1} {:>9.1} {:>6.3}",
            config.to_string(),
            r.mean_error,
            r.error_degradation,
            r.mean_response_ms,
            r.mean_cost_ms,
            r.et_fraction
        );
    }
    Ok(())
}
