//! The `toltiers` command line.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use toltiers::domain::DegradationMode;
use toltiers::eval::{parse_range, run_eval, EvalOptions, FoldStrategy};
use toltiers::policysim::{enumerate_candidates, simulate_with, PairSelection, SimOptions};
use toltiers::rulegen::{BootstrapOptions, Objective, RuleGenerator};
use toltiers::trace::{
    category_report, generate_trace, load_trace, save_trace, BetaShape, SynthParams, Trace, TraceMode,
};
use toltiers::{EnsembleConfig, VersionId};

use crate::config::GatewayConfig;
use crate::mock::{MockBackend, Profile};
use crate::router::Router;
use crate::server::app;

#[derive(Debug, Parser)]
#[command(
    name = "toltiers",
    version,
    about = "Accuracy-tolerance tiers: traces, simulation, rule generation, evaluation and serving"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Generate a synthetic request trace.
    GenTrace(GenTraceArgs),
    /// Simulate one config over a trace and print the result as JSON.
    Simulate(SimulateArgs),
    /// Bootstrap candidates and write a tolerance rule table.
    Train(TrainArgs),
    /// Cross-validate all four policies over a tolerance sweep.
    Eval(EvalArgs),
    /// Run the tier-routing HTTP gateway.
    Gateway(GatewayArgs),
    /// Run a mock service-version backend.
    MockBackend(MockArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Asr,
    Ic,
}

impl From<ModeArg> for TraceMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Asr => TraceMode::Asr,
            ModeArg::Ic => TraceMode::Ic,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenTraceArgs {
    #[arg(long, value_enum, default_value = "asr")]
    pub mode: ModeArg,
    /// Defaults to 40000 (asr) or 50000 (ic).
    #[arg(long)]
    pub records: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file with a complete parameter set used instead of the preset.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub version_count: Option<usize>,
    #[arg(long)]
    pub latency_ratio: Option<f64>,
    #[arg(long)]
    pub base_server_ms: Option<f64>,
    #[arg(long)]
    pub network_ms_mean: Option<f64>,
    #[arg(long)]
    pub latency_sigma: Option<f64>,
    /// Category shares `improves,unchanged,degrades,varies`.
    #[arg(long)]
    pub mix: Option<String>,
    #[arg(long)]
    pub unchanged_error: Option<f64>,
    /// Comma list, one level per version.
    #[arg(long)]
    pub improves_levels: Option<String>,
    #[arg(long)]
    pub degrades_levels: Option<String>,
    #[arg(long)]
    pub varies_levels: Option<String>,
    #[arg(long)]
    pub min_words: Option<usize>,
    #[arg(long)]
    pub max_words: Option<usize>,
    /// Beta shape `alpha,beta` of the per-category base confidence.
    #[arg(long)]
    pub beta_improves: Option<String>,
    #[arg(long)]
    pub beta_unchanged: Option<String>,
    #[arg(long)]
    pub beta_degrades: Option<String>,
    #[arg(long)]
    pub beta_varies: Option<String>,
    #[arg(long)]
    pub version_shift: Option<f64>,
    #[arg(long)]
    pub error_coupling: Option<f64>,
    #[arg(long)]
    pub confidence_noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Config as JSON, e.g. `{"policy":"conc","fast":1,"slow":7,"threshold":0.6}`.
    #[arg(long)]
    pub config: String,
    /// Reference config as JSON; defaults to the most accurate version.
    #[arg(long)]
    pub reference: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    pub cancel_delay_ms: f64,
    #[arg(long)]
    pub absolute: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, default_value_t = 0.999)]
    pub confidence: f64,
    #[arg(long, default_value = "0:0.10:0.001")]
    pub tolerances: String,
    #[arg(long, default_value = "response-time")]
    pub objective: Objective,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "0:1:0.1")]
    pub thresholds: String,
    /// Build ensembles from every version pair instead of fastest/slowest.
    #[arg(long)]
    pub all_pairs: bool,
    /// Single-version candidates only.
    #[arg(long)]
    pub osfa_only: bool,
    #[arg(long, default_value_t = 30)]
    pub min_trials: usize,
    #[arg(long, default_value_t = 10_000)]
    pub max_trials: usize,
    #[arg(long, default_value_t = 0.0)]
    pub cancel_delay_ms: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Trace file; without it a preset trace is generated from `--seed`.
    #[arg(long, conflicts_with = "preset")]
    pub trace: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<ModeArg>,
    /// Use only the first N records (or generate N).
    #[arg(long)]
    pub records: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value = "0:0.10:0.001")]
    pub tolerances: String,
    #[arg(long, default_value_t = 0.999)]
    pub confidence: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Standard disjoint k-fold partitions instead of independent resplits.
    #[arg(long, conflicts_with = "holdout")]
    pub disjoint_folds: bool,
    /// One fold testing on the trailing 1/folds of the trace, in file order.
    #[arg(long)]
    pub holdout: bool,
    #[arg(long, default_value = "0:1:0.1")]
    pub thresholds: String,
}

#[derive(Debug, Args)]
pub struct GatewayArgs {
    #[arg(long, env = "TOLTIERS_CONFIG")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MockArgs {
    #[arg(long, env = "TOLTIERS_MOCK_LISTEN", default_value = "127.0.0.1:9001")]
    pub listen: SocketAddr,
    /// Replay per-request outcomes from this trace, keyed by Request-Id.
    #[arg(long, conflicts_with = "fixed", required_unless_present = "fixed")]
    pub trace: Option<PathBuf>,
    /// Fixed profile `v=delay_ms:confidence[,…]`.
    #[arg(long)]
    pub fixed: Option<String>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenTrace(a) => gen_trace(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Gateway(a) => gateway(a),
        Command::MockBackend(a) => mock_backend(a),
    }
}

fn floats(name: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|x| x.trim().parse::<f64>().with_context(|| format!("--{name}: bad number {x:?}"))).collect()
}

fn beta(name: &str, s: &str) -> Result<BetaShape> {
    match floats(name, s)?.as_slice() {
        [a, b] => Ok(BetaShape::new(*a, *b)),
        _ => bail!("--{name}: expected alpha,beta"),
    }
}

/// Preset or `--params` file with every command-line override applied.
pub fn synth_params(a: &GenTraceArgs) -> Result<SynthParams> {
    let mut p = match &a.params {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => match a.mode {
            ModeArg::Asr => SynthParams::asr(a.records.unwrap_or(40_000), a.seed),
            ModeArg::Ic => SynthParams::ic(a.records.unwrap_or(50_000), a.seed),
        },
    };
    if a.params.is_some() {
        p.mode = a.mode.into();
        if let Some(n) = a.records {
            p.record_count = n;
        }
        p.rng_seed = a.seed;
    }
    macro_rules! set {
        ($field:expr, $opt:expr) => {
            if let Some(v) = $opt {
                $field = v;
            }
        };
    }
    set!(p.version_count, a.version_count);
    set!(p.latency_ratio, a.latency_ratio);
    set!(p.base_server_ms, a.base_server_ms);
    set!(p.network_ms_mean, a.network_ms_mean);
    set!(p.latency_sigma, a.latency_sigma);
    set!(p.error_levels.unchanged, a.unchanged_error);
    set!(p.min_words, a.min_words);
    set!(p.max_words, a.max_words);
    set!(p.confidence.version_shift, a.version_shift);
    set!(p.confidence.error_coupling, a.error_coupling);
    set!(p.confidence.noise, a.confidence_noise);
    if let Some(s) = &a.mix {
        match floats("mix", s)?.as_slice() {
            [i, u, d, v] => {
                p.category_mix.improves = *i;
                p.category_mix.unchanged = *u;
                p.category_mix.degrades = *d;
                p.category_mix.varies = *v;
            }
            _ => bail!("--mix: expected improves,unchanged,degrades,varies"),
        }
    }
    if let Some(s) = &a.improves_levels {
        p.error_levels.improves = floats("improves-levels", s)?;
    }
    if let Some(s) = &a.degrades_levels {
        p.error_levels.degrades = floats("degrades-levels", s)?;
    }
    if let Some(s) = &a.varies_levels {
        p.error_levels.varies = floats("varies-levels", s)?;
    }
    if let Some(s) = &a.beta_improves {
        p.confidence.improves = beta("beta-improves", s)?;
    }
    if let Some(s) = &a.beta_unchanged {
        p.confidence.unchanged = beta("beta-unchanged", s)?;
    }
    if let Some(s) = &a.beta_degrades {
        p.confidence.degrades = beta("beta-degrades", s)?;
    }
    if let Some(s) = &a.beta_varies {
        p.confidence.varies = beta("beta-varies", s)?;
    }
    Ok(p)
}

fn gen_trace(a: GenTraceArgs) -> Result<()> {
    let params = synth_params(&a)?;
    let trace = generate_trace(&params)?;
    save_trace(&trace, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!("wrote {} records to {}", trace.len(), a.out.display());
    if !trace.is_empty() {
        let mix = category_report(&trace)?;
        eprintln!(
            "categories: improves {:.3} unchanged {:.3} degrades {:.3} varies {:.3}",
            mix.improves, mix.unchanged, mix.degrades, mix.varies
        );
        for v in 1..=trace.version_count() {
            let id = VersionId::new(v);
            eprintln!(
                "version {v}: mean error {:.4}, mean server {:.1} ms",
                trace.mean_error(id),
                trace.mean_server_ms(id)
            );
        }
    }
    Ok(())
}

fn parse_config(what: &str, json: &str, trace: &Trace) -> Result<EnsembleConfig> {
    let c: EnsembleConfig = serde_json::from_str(json).with_context(|| format!("--{what}: bad config JSON"))?;
    c.validate(trace.version_count())?;
    Ok(c)
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let trace = load_trace(&a.trace).with_context(|| format!("loading {}", a.trace.display()))?;
    let config = parse_config("config", &a.config, &trace)?;
    let reference = match &a.reference {
        Some(r) => parse_config("reference", r, &trace)?,
        None => EnsembleConfig::osfa(trace.version_count()),
    };
    let opts = SimOptions {
        cancel_delay_ms: a.cancel_delay_ms,
        degradation: if a.absolute { DegradationMode::Absolute } else { DegradationMode::Relative },
    };
    let r = simulate_with(trace.records(), &config, &reference, &opts)?;
    println!("{}", serde_json::to_string_pretty(&r)?);
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let trace = load_trace(&a.trace).with_context(|| format!("loading {}", a.trace.display()))?;
    let tolerances = parse_range(&a.tolerances)?;
    let thresholds = if a.osfa_only { Vec::new() } else { parse_range(&a.thresholds)? };
    let pairs = if a.all_pairs { PairSelection::AllPairs } else { PairSelection::FastestSlowest };
    let n = trace.version_count();
    let candidates = enumerate_candidates(trace.records(), n, &thresholds, &pairs)?;
    let opts = BootstrapOptions {
        confidence: a.confidence,
        min_trials: a.min_trials,
        max_trials: a.max_trials,
        seed: a.seed,
        sim: SimOptions { cancel_delay_ms: a.cancel_delay_ms, ..SimOptions::default() },
    };
    let generator = RuleGenerator::new(trace.records(), &candidates, EnsembleConfig::osfa(n), opts)?;
    let table = generator.generate(&tolerances, a.objective)?;
    table.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let unconverged = generator.summaries().iter().filter(|s| !s.converged).count();
    let trials: usize = generator.summaries().iter().map(|s| s.trial_count).sum();
    eprintln!(
        "{} candidates, {trials} bootstrap trials, {unconverged} without confidence; {} rules written to {}",
        generator.summaries().len(),
        table.entries.len(),
        a.out.display()
    );
    eprintln!("candidate digest {}", table.provenance.candidate_digest);
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let trace = match (&a.trace, a.preset) {
        (Some(path), _) => {
            let t = load_trace(path).with_context(|| format!("loading {}", path.display()))?;
            match a.records {
                Some(n) if n < t.len() => {
                    Trace::new(t.mode(), t.version_count(), t.into_records().into_iter().take(n).collect())?
                }
                _ => t,
            }
        }
        (None, Some(ModeArg::Asr)) => generate_trace(&SynthParams::asr(a.records.unwrap_or(40_000), a.seed))?,
        (None, Some(ModeArg::Ic)) => generate_trace(&SynthParams::ic(a.records.unwrap_or(50_000), a.seed))?,
        (None, None) => bail!("need --trace or --preset"),
    };
    let strategy = if a.disjoint_folds {
        FoldStrategy::Disjoint
    } else if a.holdout {
        FoldStrategy::Holdout
    } else {
        FoldStrategy::RandomResplit
    };
    let opts = EvalOptions {
        folds: a.folds,
        tolerances: parse_range(&a.tolerances)?,
        confidence: a.confidence,
        seed: a.seed,
        strategy,
        thresholds: parse_range(&a.thresholds)?,
        ..EvalOptions::default()
    };
    let report = run_eval(&trace, &opts)?;
    report.write_dir(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    print!("{}", report.summary());
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

async fn shutdown() {
    let _ = tokio::signal::ctrl_c().await;
    tracing::info!("shutting down");
}

fn gateway(a: GatewayArgs) -> Result<()> {
    let cfg = GatewayConfig::load(a.config.as_deref())?;
    let router = Arc::new(Router::from_config(&cfg).map_err(anyhow::Error::msg)?);
    runtime()?.block_on(async move {
        let listener =
            tokio::net::TcpListener::bind(cfg.listen).await.with_context(|| format!("binding {}", cfg.listen))?;
        tracing::info!("gateway listening on {}", listener.local_addr()?);
        axum::serve(listener, app(router)).with_graceful_shutdown(shutdown()).await?;
        Ok(())
    })
}

fn mock_backend(a: MockArgs) -> Result<()> {
    let profile = match (&a.trace, &a.fixed) {
        (Some(path), _) => Profile::replay(&load_trace(path).with_context(|| format!("loading {}", path.display()))?),
        (None, Some(profile)) => Profile::parse_fixed(profile).map_err(anyhow::Error::msg)?,
        (None, None) => bail!("need --trace or --fixed"),
    };
    runtime()?.block_on(async move {
        let listener =
            tokio::net::TcpListener::bind(a.listen).await.with_context(|| format!("binding {}", a.listen))?;
        tracing::info!("mock backend listening on {}", listener.local_addr()?);
        axum::serve(listener, MockBackend::new(profile).router()).with_graceful_shutdown(shutdown()).await?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_on_top_of_preset() {
        let cli = Cli::try_parse_from([
            "toltiers",
            "gen-trace",
            "--mode",
            "ic",
            "--records",
            "10",
            "--seed",
            "3",
            "--out",
            "x.jsonl",
            "--mix",
            "0.1,0.7,0.1,0.1",
            "--latency-ratio",
            "3",
            "--beta-unchanged",
            "9,1",
        ])
        .unwrap();
        let Command::GenTrace(a) = cli.command else { panic!() };
        let p = synth_params(&a).unwrap();
        assert_eq!(p.mode, TraceMode::Ic);
        assert_eq!((p.record_count, p.rng_seed, p.latency_ratio), (10, 3, 3.0));
        assert_eq!(p.category_mix.unchanged, 0.7);
        assert_eq!(p.confidence.unchanged, BetaShape::new(9.0, 1.0));
    }

    #[test]
    fn bad_override_is_reported() {
        let cli = Cli::try_parse_from(["toltiers", "gen-trace", "--out", "x", "--mix", "0.5,0.5"]).unwrap();
        let Command::GenTrace(a) = cli.command else { panic!() };
        assert!(synth_params(&a).is_err());
    }

    #[test]
    fn eval_flags_conflict() {
        assert!(Cli::try_parse_from([
            "toltiers",
            "eval",
            "--preset",
            "asr",
            "--out",
            "d",
            "--disjoint-folds",
            "--holdout"
        ])
        .is_err());
        assert!(Cli::try_parse_from(["toltiers", "eval", "--preset", "asr", "--out", "d", "--disjoint-folds"]).is_ok());
    }
}
