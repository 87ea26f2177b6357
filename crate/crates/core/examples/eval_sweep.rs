//! Cross-validated tolerance sweep comparing the four policies.
//!
//! `cargo run --release --example eval_sweep -- /tmp/report`

use toltiers::eval::{parse_range, run_eval, EvalOptions};
use toltiers::trace::{generate_trace, SynthParams};

fn main() -> toltiers::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "report".into());
    let trace = generate_trace(&SynthParams::asr(20_000, 2))?;
    let opts = EvalOptions { folds: 3, tolerances: parse_range("0:0.10:0.01")?, ..EvalOptions::default() };
    let report = run_eval(&trace, &opts)?;
    report.write_dir(&out)?;
    print!("{}", report.summary());
    println!("CSV tables in {out}");
    Ok(())
}
