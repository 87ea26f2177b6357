//! Classifies requests by how their error evolves across versions.

use toltiers::trace::{categorize_errors, category_report, generate_trace, SynthParams};

fn main() -> toltiers::Result<()> {
    for errors in
        [vec![0.2, 0.2, 0.2], vec![0.4, 0.3, 0.1], vec![0.0, 0.1, 0.3], vec![0.1, 0.3, 0.2, 0.1, 0.05, 0.2, 0.1]]
    {
        println!("{:<10} {errors:?}", categorize_errors(&errors).to_string());
    }
    let mix = category_report(&generate_trace(&SynthParams::asr(20_000, 1))?)?;
    println!(
        "speech-like preset: improves {:.3}, unchanged {:.3}, degrades {:.3}, varies {:.3}",
        mix.improves, mix.unchanged, mix.degrades, mix.varies
    );
    Ok(())
}
