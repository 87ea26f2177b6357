//! Bootstrapped worst-case estimates for a handful of candidates.

use toltiers::trace::{generate_trace, SynthParams};
use toltiers::{bootstrap, EnsembleConfig};

fn main() -> toltiers::Result<()> {
    let trace = generate_trace(&SynthParams::asr(10_000, 5))?;
    let n = trace.version_count();
    let reference = EnsembleConfig::osfa(n);
    for config in [EnsembleConfig::osfa(1), EnsembleConfig::osfa(5), EnsembleConfig::conc(1, n, 0.7)] {
        let s = bootstrap(&config, trace.records(), 0.999, &reference, 17)?;
        println!(
            "{:<14} trials {:>5} converged {:<5} worst err_deg {:.4} resp {:.1} ms cost {:.1} ms",
            config.to_string(),
            s.trial_count,
            s.converged,
            s.worst.err_deg,
            s.worst.response_ms,
            s.worst.cost_ms
        );
    }
    Ok(())
}
