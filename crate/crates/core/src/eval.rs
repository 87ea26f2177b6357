//! Cross-validated evaluation of the four deployment policies over a
//! tolerance sweep, with CSV and plain-text reporting.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{EnsembleConfig, RequestRecord};
use crate::error::{Error, Result};
use crate::policysim::{enumerate_candidates, simulate_with, PairSelection, SimOptions};
use crate::rulegen::{BootstrapOptions, NaiveSelector, Objective, RuleGenerator, WorstCase};
use crate::trace::Trace;

/// Minimum training split size accepted by [`run_eval`].
pub const MIN_TRAIN_RECORDS: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FoldStrategy {
    /// Every fold independently draws a random `1/folds` test split.
    #[default]
    RandomResplit,
    /// One shuffle, then `folds` disjoint test partitions.
    Disjoint,
    /// A single fold testing on the trailing `1/folds` of the trace, in file
    /// order. Useful when the trace is ordered in time.
    Holdout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Policy {
    NaiveOsfa,
    TtOsfa,
    TtOptRespTime,
    TtOptCost,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::NaiveOsfa, Policy::TtOsfa, Policy::TtOptRespTime, Policy::TtOptCost];

    pub fn name(self) -> &'static str {
        match self {
            Policy::NaiveOsfa => "Naive-OSFA",
            Policy::TtOsfa => "TT-OSFA",
            Policy::TtOptRespTime => "TT-Opt-Resp-Time",
            Policy::TtOptCost => "TT-Opt-Cost",
        }
    }

    pub fn is_tolerance_tiers(self) -> bool {
        self != Policy::NaiveOsfa
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub folds: usize,
    pub tolerances: Vec<f64>,
    pub confidence: f64,
    pub seed: u64,
    pub strategy: FoldStrategy,
    /// Confidence thresholds for Seq/Conc candidates.
    pub thresholds: Vec<f64>,
    pub pairs: PairSelection,
    pub min_trials: usize,
    pub max_trials: usize,
    pub sim: SimOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            folds: 10,
            tolerances: parse_range("0:0.10:0.001").expect("valid range"),
            confidence: 0.999,
            seed: 0,
            strategy: FoldStrategy::RandomResplit,
            thresholds: (0..=10).map(|i| i as f64 / 10.0).collect(),
            pairs: PairSelection::FastestSlowest,
            min_trials: 30,
            max_trials: 10_000,
            sim: SimOptions::default(),
        }
    }
}

/// One policy at one tolerance, measured on a held-out split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyPoint {
    pub tolerance: f64,
    pub config: EnsembleConfig,
    /// Bootstrap worst case; absent for the naive baseline.
    pub predicted: Option<WorstCase>,
    pub degradation: f64,
    pub mean_response_ms: f64,
    pub mean_cost_ms: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_len: usize,
    pub test_len: usize,
    pub policies: Vec<(Policy, Vec<PolicyPoint>)>,
}

impl FoldResult {
    pub fn points(&self, policy: Policy) -> &[PolicyPoint] {
        self.policies.iter().find(|(p, _)| *p == policy).map(|(_, pts)| pts.as_slice()).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanPoint {
    pub degradation: f64,
    pub mean_response_ms: f64,
    pub mean_cost_ms: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tolerances: Vec<f64>,
    pub strategy: FoldStrategy,
    pub confidence: f64,
    pub folds: Vec<FoldResult>,
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_range(range: &str) -> Result<Vec<f64>> {
    let bad = |m: &str| Error::validation(format!("bad range {range:?}: {m}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(&e.to_string()));
    let parts: Vec<&str> = range.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0) || stop < start {
                return Err(bad("need step > 0 and stop >= start"));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=count).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect())
        }
        [single] if single.trim().is_empty() => Ok(Vec::new()),
        [single] => single.split(',').map(num).collect(),
        _ => Err(bad("expected start:stop:step or a comma list")),
    }
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// `(tolerance, config, predicted worst case)` chosen by one policy.
type Choice = (f64, EnsembleConfig, Option<WorstCase>);

/// Train/test index splits for every fold.
pub fn fold_splits(len: usize, folds: usize, strategy: FoldStrategy, seed: u64) -> Vec<(Vec<usize>, Vec<usize>)> {
    let test_len = len / folds;
    match strategy {
        FoldStrategy::RandomResplit => (0..folds)
            .map(|f| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(f as u64);
                let mut idx: Vec<usize> = (0..len).collect();
                idx.shuffle(&mut rng);
                let train = idx.split_off(test_len);
                (train, idx)
            })
            .collect(),
        FoldStrategy::Disjoint => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx: Vec<usize> = (0..len).collect();
            idx.shuffle(&mut rng);
            (0..folds)
                .map(|f| {
                    let (lo, hi) = (f * len / folds, (f + 1) * len / folds);
                    let test = idx[lo..hi].to_vec();
                    let train = idx[..lo].iter().chain(&idx[hi..]).copied().collect();
                    (train, test)
                })
                .collect()
        }
        FoldStrategy::Holdout => vec![((0..len - test_len).collect(), (len - test_len..len).collect())],
    }
}

/// Runs the full protocol: fold construction, training of every policy on
/// each training split, and measurement on the matching test split.
pub fn run_eval(trace: &Trace, opts: &EvalOptions) -> Result<EvalReport> {
    if opts.folds < 2 {
        return Err(Error::validation("folds must be >= 2"));
    }
    let records = trace.records();
    let test_len = records.len() / opts.folds;
    let train_len = records.len() - test_len;
    if train_len < MIN_TRAIN_RECORDS || test_len == 0 {
        return Err(Error::TooSmall { got: train_len, need: MIN_TRAIN_RECORDS });
    }
    let mut folds = Vec::new();
    for (f, (train_idx, test_idx)) in
        fold_splits(records.len(), opts.folds, opts.strategy, opts.seed).into_iter().enumerate()
    {
        let train: Vec<RequestRecord> = train_idx.iter().map(|&i| records[i].clone()).collect();
        let test: Vec<RequestRecord> = test_idx.iter().map(|&i| records[i].clone()).collect();
        let mut result = evaluate_split(&train, &test, trace.version_count(), opts, fold_seed(opts.seed, f))?;
        result.fold = f;
        folds.push(result);
    }
    Ok(EvalReport { tolerances: opts.tolerances.clone(), strategy: opts.strategy, confidence: opts.confidence, folds })
}

/// Trains all four policies on `train` and measures them on `test`.
pub fn evaluate_split(
    train: &[RequestRecord],
    test: &[RequestRecord],
    version_count: usize,
    opts: &EvalOptions,
    seed: u64,
) -> Result<FoldResult> {
    if test.is_empty() {
        return Err(Error::EmptySample);
    }
    let reference = EnsembleConfig::osfa(version_count);
    let candidates = enumerate_candidates(train, version_count, &opts.thresholds, &opts.pairs)?;
    let osfa: Vec<EnsembleConfig> = candidates.iter().copied().filter(|c| c.is_osfa()).collect();
    let tols = &opts.tolerances;

    let mut chosen: Vec<(Policy, Vec<Choice>)> = Vec::new();
    if !tols.is_empty() {
        let bopts = BootstrapOptions {
            confidence: opts.confidence,
            min_trials: opts.min_trials,
            max_trials: opts.max_trials,
            seed,
            sim: opts.sim,
        };
        let naive = NaiveSelector::new(train, &osfa, reference, &opts.sim)?;
        chosen.push((
            Policy::NaiveOsfa,
            tols.iter().map(|&t| (t, naive.select(t, Objective::ResponseTime), None)).collect(),
        ));
        let gen = RuleGenerator::new(train, &candidates, reference, bopts)?;
        let tables = [
            (Policy::TtOsfa, gen.generate_filtered(tols, Objective::ResponseTime, EnsembleConfig::is_osfa)?),
            (Policy::TtOptRespTime, gen.generate(tols, Objective::ResponseTime)?),
            (Policy::TtOptCost, gen.generate(tols, Objective::Cost)?),
        ];
        for (p, table) in tables {
            chosen.push((p, table.entries.iter().map(|e| (e.tolerance, e.config, Some(e.predicted))).collect()));
        }
    } else {
        chosen.extend(Policy::ALL.iter().map(|&p| (p, Vec::new())));
    }

    let mut measured: HashMap<String, crate::domain::SimResult> = HashMap::new();
    let mut policies = Vec::new();
    for (policy, picks) in chosen {
        let mut points = Vec::with_capacity(picks.len());
        for (tolerance, config, predicted) in picks {
            let key = serde_json::to_string(&config)?;
            let r = match measured.get(&key) {
                Some(r) => *r,
                None => {
                    let r = simulate_with(test, &config, &reference, &opts.sim)?;
                    measured.insert(key, r);
                    r
                }
            };
            points.push(PolicyPoint {
                tolerance,
                config,
                predicted,
                degradation: r.error_degradation,
                mean_response_ms: r.mean_response_ms,
                mean_cost_ms: r.mean_cost_ms,
                violation: r.error_degradation > tolerance,
            });
        }
        policies.push((policy, points));
    }
    Ok(FoldResult { fold: 0, train_len: train.len(), test_len: test.len(), policies })
}

impl EvalReport {
    pub fn violations(&self, policy: Policy) -> usize {
        self.folds.iter().flat_map(|f| f.points(policy)).filter(|p| p.violation).count()
    }

    /// Fold-averaged metrics of one policy at tolerance index `ti`.
    pub fn mean_point(&self, policy: Policy, ti: usize) -> MeanPoint {
        let pts: Vec<&PolicyPoint> = self.folds.iter().filter_map(|f| f.points(policy).get(ti)).collect();
        let n = pts.len().max(1) as f64;
        MeanPoint {
            degradation: pts.iter().map(|p| p.degradation).sum::<f64>() / n,
            mean_response_ms: pts.iter().map(|p| p.mean_response_ms).sum::<f64>() / n,
            mean_cost_ms: pts.iter().map(|p| p.mean_cost_ms).sum::<f64>() / n,
            violations: pts.iter().filter(|p| p.violation).count(),
        }
    }

    pub fn tolerance_index(&self, tolerance: f64) -> Option<usize> {
        self.tolerances.iter().position(|&t| (t - tolerance).abs() < 1e-9)
    }

    /// `1 - policy / TT-OSFA` for fold-mean response time at tolerance index `ti`.
    pub fn latency_reduction(&self, policy: Policy, ti: usize) -> f64 {
        1.0 - self.mean_point(policy, ti).mean_response_ms / self.mean_point(Policy::TtOsfa, ti).mean_response_ms
    }

    /// `1 - policy / TT-OSFA` for fold-mean cost at tolerance index `ti`.
    pub fn cost_reduction(&self, policy: Policy, ti: usize) -> f64 {
        1.0 - self.mean_point(policy, ti).mean_cost_ms / self.mean_point(Policy::TtOsfa, ti).mean_cost_ms
    }

    pub fn write_violations_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["fold".to_string(), "tolerance".to_string()];
        for p in Policy::ALL {
            header.push(format!("{}_degradation", p.name()));
            header.push(format!("{}_violation", p.name()));
        }
        out.write_record(&header)?;
        for f in &self.folds {
            for (ti, t) in self.tolerances.iter().enumerate() {
                let mut row = vec![f.fold.to_string(), t.to_string()];
                for p in Policy::ALL {
                    match f.points(p).get(ti) {
                        Some(pt) => {
                            row.push(pt.degradation.to_string());
                            row.push(u8::from(pt.violation).to_string());
                        }
                        None => row.extend([String::new(), String::new()]),
                    }
                }
                out.write_record(&row)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    fn write_metric_csv<W: Write>(&self, w: W, metric: impl Fn(&MeanPoint) -> f64) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["tolerance".to_string()];
        header.extend(Policy::ALL.iter().map(|p| p.name().to_string()));
        out.write_record(&header)?;
        for (ti, t) in self.tolerances.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(Policy::ALL.iter().map(|&p| metric(&self.mean_point(p, ti)).to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_latency_csv<W: Write>(&self, w: W) -> Result<()> {
        self.write_metric_csv(w, |m| m.mean_response_ms)
    }

    pub fn write_cost_csv<W: Write>(&self, w: W) -> Result<()> {
        self.write_metric_csv(w, |m| m.mean_cost_ms)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "folds={} strategy={:?} tolerances={} confidence={}",
            self.folds.len(),
            self.strategy,
            self.tolerances.len(),
            self.confidence
        );
        let violations: Vec<String> =
            Policy::ALL.iter().map(|&p| format!("{} {}", p.name(), self.violations(p))).collect();
        let _ = writeln!(s, "violations: {}", violations.join(", "));
        for tol in [0.01, 0.05, 0.10] {
            let Some(ti) = self.tolerance_index(tol) else { continue };
            let _ = writeln!(
                s,
                "tol={tol:.2} TT-Opt-Resp-Time latency {} vs TT-OSFA",
                signed_pct(self.latency_reduction(Policy::TtOptRespTime, ti))
            );
            let _ = writeln!(
                s,
                "tol={tol:.2} TT-Opt-Cost cost {} vs TT-OSFA",
                signed_pct(self.cost_reduction(Policy::TtOptCost, ti))
            );
        }
        s
    }

    /// Writes `violations.csv`, `latency.csv`, `cost.csv` and `summary.txt`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.write_violations_csv(fs::File::create(dir.join("violations.csv"))?)?;
        self.write_latency_csv(fs::File::create(dir.join("latency.csv"))?)?;
        self.write_cost_csv(fs::File::create(dir.join("cost.csv"))?)?;
        fs::write(dir.join("summary.txt"), self.summary())?;
        Ok(())
    }
}

/// Formats a reduction as `−X%`, or `+X%` when it is an increase.
fn signed_pct(reduction: f64) -> String {
    if reduction >= 0.0 {
        format!("\u{2212}{:.1}%", reduction * 100.0)
    } else {
        format!("+{:.1}%", -reduction * 100.0)
    }
}

/// Writes the CSV tables and summary for a finished evaluation.
pub fn report(results: &EvalReport, dir: impl AsRef<Path>) -> Result<()> {
    results.write_dir(dir)
}
