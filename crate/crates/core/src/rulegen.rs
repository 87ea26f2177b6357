//! Bootstrapped routing-rule generation.
//!
//! Every candidate config is simulated on repeated random resamples of the
//! training requests until the spread of each observed metric (error
//! degradation, response time, cost) is wide enough at the requested
//! confidence level; the worst value seen for each metric is kept. Rules are
//! then emitted per tolerance by filtering candidates on their worst-case
//! degradation and minimizing the worst-case objective.
//!
//! The classic reference listing of this generator picks `argmin(objective)`
//! without applying the tolerance filter; the filter is applied here, since
//! without it every tier would receive the same config.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{EnsembleConfig, RequestRecord};
use crate::error::{Error, Result};
use crate::policysim::{simulate_with, PreparedOutcomes, SimOptions};
use crate::stats::{mean, normal_quantile, std_dev};
use crate::trace::records_digest;

/// Largest tolerance a tier may advertise.
pub const MAX_TOLERANCE: f64 = 0.10;

/// Smallest training set the bootstrap accepts (resamples hold a tenth of it).
pub const MIN_TRAIN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    ResponseTime,
    Cost,
}

impl Objective {
    pub const ALL: [Objective; 2] = [Objective::ResponseTime, Objective::Cost];

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::ResponseTime => "response-time",
            Objective::Cost => "cost",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "response-time" => Ok(Objective::ResponseTime),
            "cost" => Ok(Objective::Cost),
            other => {
                Err(Error::validation(format!("unknown objective {other:?} (expected \"response-time\" or \"cost\")")))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub confidence: f64,
    pub min_trials: usize,
    pub max_trials: usize,
    pub seed: u64,
    pub sim: SimOptions,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions { confidence: 0.999, min_trials: 30, max_trials: 10_000, seed: 0, sim: SimOptions::default() }
    }
}

impl BootstrapOptions {
    fn validate(&self) -> Result<()> {
        if !(self.confidence > 0.5 && self.confidence < 1.0) {
            return Err(Error::validation(format!("confidence must lie in (0.5, 1), got {}", self.confidence)));
        }
        if self.min_trials < 2 || self.max_trials < self.min_trials {
            return Err(Error::validation("need 2 <= min_trials <= max_trials"));
        }
        Ok(())
    }
}

/// One simulated resample: `(err_deg, response_ms, cost_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trial(pub f64, pub f64, pub f64);

/// Worst-case `(err_deg, response_ms, cost_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub err_deg: f64,
    pub response_ms: f64,
    pub cost_ms: f64,
}

impl WorstCase {
    fn objective(&self, objective: Objective) -> f64 {
        match objective {
            Objective::ResponseTime => self.response_ms,
            Objective::Cost => self.cost_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub config: EnsembleConfig,
    pub trials: Vec<Trial>,
    pub worst: WorstCase,
    pub trial_count: usize,
    /// False when `max_trials` ran out before every metric was confident.
    pub converged: bool,
}

/// Stopping rule: true once the standardized series shows an outlier on both
/// sides of `±s`, or a total spread beyond `2s`, where `s` is the standard
/// normal quantile of `confidence`. A constant series is always confident.
pub fn confident(values: &[f64], confidence: f64) -> Result<bool> {
    if values.len() < 2 {
        return Err(Error::TooFewValues(values.len()));
    }
    let sd = std_dev(values);
    if sd == 0.0 {
        return Ok(true);
    }
    let m = mean(values);
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (zmin, zmax) = ((lo - m) / sd, (hi - m) / sd);
    let s = normal_quantile(confidence);
    Ok((zmin < -s && zmax > s) || (zmax - zmin > 2.0 * s))
}

/// Bootstraps one config with default trial bounds and RNG stream 0.
pub fn bootstrap(
    config: &EnsembleConfig,
    train: &[RequestRecord],
    confidence: f64,
    reference: &EnsembleConfig,
    rng_seed: u64,
) -> Result<BootstrapSummary> {
    let opts = BootstrapOptions { confidence, seed: rng_seed, ..Default::default() };
    bootstrap_with(config, train, reference, &opts, 0)
}

/// Resample size used for every trial.
pub fn sample_size(train_len: usize) -> usize {
    train_len / 10
}

/// Bootstraps one config. `stream` selects an independent RNG stream under
/// `opts.seed`, so configs can be bootstrapped in any order or in parallel.
pub fn bootstrap_with(
    config: &EnsembleConfig,
    train: &[RequestRecord],
    reference: &EnsembleConfig,
    opts: &BootstrapOptions,
    stream: u64,
) -> Result<BootstrapSummary> {
    opts.validate()?;
    if train.len() < MIN_TRAIN {
        return Err(Error::TooSmall { got: train.len(), need: MIN_TRAIN });
    }
    let prepared = PreparedOutcomes::new(train, config, reference, &opts.sim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(stream);

    let mut indices = vec![0usize; sample_size(train.len())];
    let mut series: [Vec<f64>; 3] = Default::default();
    let mut converged = false;
    loop {
        let n = series[0].len();
        if n >= opts.min_trials {
            let mut all = true;
            for s in &series {
                if !confident(s, opts.confidence)? {
                    all = false;
                    break;
                }
            }
            if all {
                converged = true;
                break;
            }
        }
        if n >= opts.max_trials {
            break;
        }
        for slot in indices.iter_mut() {
            *slot = rng.random_range(0..train.len());
        }
        let r = prepared.simulate_indices(&indices)?;
        series[0].push(r.error_degradation);
        series[1].push(r.mean_response_ms);
        series[2].push(r.mean_cost_ms);
    }

    let max = |s: &[f64]| s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let worst = WorstCase { err_deg: max(&series[0]), response_ms: max(&series[1]), cost_ms: max(&series[2]) };
    let trials: Vec<Trial> = (0..series[0].len()).map(|i| Trial(series[0][i], series[1][i], series[2][i])).collect();
    Ok(BootstrapSummary { config: *config, trial_count: trials.len(), trials, worst, converged })
}

/// Bootstraps every candidate; candidate `i` uses RNG stream `i`.
pub fn bootstrap_all(
    candidates: &[EnsembleConfig],
    train: &[RequestRecord],
    reference: &EnsembleConfig,
    opts: &BootstrapOptions,
) -> Result<Vec<BootstrapSummary>> {
    candidates.par_iter().enumerate().map(|(i, c)| bootstrap_with(c, train, reference, opts, i as u64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleEntry {
    pub tolerance: f64,
    pub config: EnsembleConfig,
    pub predicted: WorstCase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub trace_digest: String,
    pub candidate_digest: String,
}

/// Tolerance to config mapping for one objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierRuleTable {
    pub objective: Objective,
    pub reference_config: EnsembleConfig,
    pub confidence_level: f64,
    pub entries: Vec<RuleEntry>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("tolerance {requested} outside the valid range [{min}, {max}]")]
pub struct ToleranceOutOfRange {
    pub requested: f64,
    pub min: f64,
    pub max: f64,
}

const TOL_EPS: f64 = 1e-12;

impl TierRuleTable {
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::validation("rule table has no entries"));
        }
        check_tolerances(&self.entries.iter().map(|e| e.tolerance).collect::<Vec<_>>())?;
        for e in &self.entries {
            if e.predicted.err_deg > e.tolerance {
                return Err(Error::validation(format!(
                    "entry at tolerance {} has worst-case degradation {} above it",
                    e.tolerance, e.predicted.err_deg
                )));
            }
        }
        Ok(())
    }

    pub fn range(&self) -> (f64, f64) {
        (self.entries[0].tolerance, self.entries[self.entries.len() - 1].tolerance)
    }

    /// Entry with the largest tolerance not above `tolerance`.
    pub fn lookup(&self, tolerance: f64) -> Result<&RuleEntry, ToleranceOutOfRange> {
        let (min, max) = self.range();
        if !(tolerance >= min - TOL_EPS && tolerance <= max + TOL_EPS) {
            return Err(ToleranceOutOfRange { requested: tolerance, min, max });
        }
        Ok(self.entries.iter().rev().find(|e| e.tolerance <= tolerance + TOL_EPS).unwrap_or(&self.entries[0]))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rule table serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: TierRuleTable = serde_json::from_str(s)?;
        t.validate()?;
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = self.to_json();
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

fn check_tolerances(tolerances: &[f64]) -> Result<()> {
    if let Some(t) = tolerances.iter().find(|t| !(0.0..=MAX_TOLERANCE + TOL_EPS).contains(*t)) {
        return Err(Error::validation(format!("tolerance {t} outside [0, {MAX_TOLERANCE}]")));
    }
    if tolerances.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::validation("tolerances must be strictly increasing"));
    }
    Ok(())
}

/// Filter-then-argmin rule selection over bootstrap summaries.
///
/// Ties on the objective go to the lower worst-case degradation, then to the
/// earlier summary. A tolerance no candidate satisfies maps to the reference.
pub fn generate(
    summaries: &[BootstrapSummary],
    tolerances: &[f64],
    objective: Objective,
    reference: &EnsembleConfig,
) -> Result<Vec<RuleEntry>> {
    check_tolerances(tolerances)?;
    let fallback = summaries
        .iter()
        .find(|s| s.config == *reference)
        .ok_or_else(|| Error::validation(format!("no summary for reference config {reference}")))?;
    Ok(tolerances
        .iter()
        .map(|&t| {
            let best = summaries
                .iter()
                .enumerate()
                .filter(|(_, s)| s.worst.err_deg <= t)
                .min_by(|(i, a), (j, b)| {
                    a.worst
                        .objective(objective)
                        .total_cmp(&b.worst.objective(objective))
                        .then(a.worst.err_deg.total_cmp(&b.worst.err_deg))
                        .then(i.cmp(j))
                })
                .map(|(_, s)| s)
                .unwrap_or(fallback);
            RuleEntry { tolerance: t, config: best.config, predicted: best.worst }
        })
        .collect())
}

pub fn candidates_digest(candidates: &[EnsembleConfig]) -> String {
    let bytes = serde_json::to_vec(candidates).expect("configs serialize");
    hex::encode(Sha256::digest(bytes))
}

/// Bootstraps a candidate set once and emits rule tables from it.
#[derive(Debug, Clone)]
pub struct RuleGenerator {
    reference: EnsembleConfig,
    summaries: Vec<BootstrapSummary>,
    opts: BootstrapOptions,
    trace_digest: String,
}

impl RuleGenerator {
    /// The reference config is added to the candidates when missing.
    pub fn new(
        train: &[RequestRecord],
        candidates: &[EnsembleConfig],
        reference: EnsembleConfig,
        opts: BootstrapOptions,
    ) -> Result<Self> {
        let mut candidates = candidates.to_vec();
        if !candidates.contains(&reference) {
            candidates.push(reference);
        }
        let summaries = bootstrap_all(&candidates, train, &reference, &opts)?;
        Ok(RuleGenerator { reference, summaries, opts, trace_digest: records_digest(train) })
    }

    pub fn summaries(&self) -> &[BootstrapSummary] {
        &self.summaries
    }

    pub fn reference(&self) -> &EnsembleConfig {
        &self.reference
    }

    pub fn generate(&self, tolerances: &[f64], objective: Objective) -> Result<TierRuleTable> {
        self.generate_filtered(tolerances, objective, |_| true)
    }

    /// Rules restricted to candidates accepted by `keep`; the reference is
    /// always kept.
    pub fn generate_filtered(
        &self,
        tolerances: &[f64],
        objective: Objective,
        keep: impl Fn(&EnsembleConfig) -> bool,
    ) -> Result<TierRuleTable> {
        let subset: Vec<BootstrapSummary> =
            self.summaries.iter().filter(|s| s.config == self.reference || keep(&s.config)).cloned().collect();
        let entries = generate(&subset, tolerances, objective, &self.reference)?;
        let configs: Vec<EnsembleConfig> = subset.iter().map(|s| s.config).collect();
        Ok(TierRuleTable {
            objective,
            reference_config: self.reference,
            confidence_level: self.opts.confidence,
            entries,
            provenance: Provenance {
                seed: self.opts.seed,
                trace_digest: self.trace_digest.clone(),
                candidate_digest: candidates_digest(&configs),
            },
        })
    }
}

/// Point estimate of one OSFA candidate on the whole training set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEstimate {
    pub config: EnsembleConfig,
    pub err_deg: f64,
    pub response_ms: f64,
    pub cost_ms: f64,
}

/// Baseline that picks a single version from one pass over the training set,
/// with no resampling.
#[derive(Debug, Clone)]
pub struct NaiveSelector {
    reference: EnsembleConfig,
    points: Vec<PointEstimate>,
}

impl NaiveSelector {
    pub fn new(
        train: &[RequestRecord],
        candidates: &[EnsembleConfig],
        reference: EnsembleConfig,
        sim: &SimOptions,
    ) -> Result<Self> {
        if let Some(c) = candidates.iter().find(|c| !c.is_osfa()) {
            return Err(Error::validation(format!("naive selection takes OSFA candidates only, got {c}")));
        }
        let points = candidates
            .iter()
            .map(|c| {
                let r = simulate_with(train, c, &reference, sim)?;
                Ok(PointEstimate {
                    config: *c,
                    err_deg: r.error_degradation,
                    response_ms: r.mean_response_ms,
                    cost_ms: r.mean_cost_ms,
                })
            })
            .collect::<Result<_>>()?;
        Ok(NaiveSelector { reference, points })
    }

    pub fn points(&self) -> &[PointEstimate] {
        &self.points
    }

    pub fn select(&self, tolerance: f64, objective: Objective) -> EnsembleConfig {
        let key = |p: &PointEstimate| match objective {
            Objective::ResponseTime => p.response_ms,
            Objective::Cost => p.cost_ms,
        };
        self.points
            .iter()
            .enumerate()
            .filter(|(_, p)| p.err_deg <= tolerance)
            .min_by(|(i, a), (j, b)| key(a).total_cmp(&key(b)).then(a.err_deg.total_cmp(&b.err_deg)).then(i.cmp(j)))
            .map(|(_, p)| p.config)
            .unwrap_or(self.reference)
    }
}

pub fn naive_select(
    train: &[RequestRecord],
    candidates: &[EnsembleConfig],
    tolerance: f64,
    objective: Objective,
    reference: &EnsembleConfig,
) -> Result<EnsembleConfig> {
    Ok(NaiveSelector::new(train, candidates, *reference, &SimOptions::default())?.select(tolerance, objective))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::VersionOutcome;

    fn summary(config: EnsembleConfig, err: f64, resp: f64, cost: f64) -> BootstrapSummary {
        BootstrapSummary {
            config,
            trials: vec![Trial(err, resp, cost)],
            worst: WorstCase { err_deg: err, response_ms: resp, cost_ms: cost },
            trial_count: 1,
            converged: true,
        }
    }

    #[test]
    fn confident_constant_series() {
        assert!(confident(&[1.0; 40], 0.999).unwrap());
        assert!(matches!(confident(&[1.0], 0.999), Err(Error::TooFewValues(1))));
    }

    #[test]
    fn confident_needs_extreme_spread() {
        // Standard-normal-looking values never reach +-3.09 with a range of 6.18.
        let vals: Vec<f64> = (0..50).map(|i| ((i * 37) % 50) as f64).collect();
        assert!(!confident(&vals, 0.999).unwrap());
        assert!(confident(&vals, 0.6).unwrap());
    }

    #[test]
    fn generate_filters_then_minimizes() {
        let a = EnsembleConfig::osfa(2);
        let b = EnsembleConfig::osfa(1);
        let s = vec![summary(a, 0.0, 300.0, 300.0), summary(b, 0.04, 150.0, 150.0)];
        let rules = generate(&s, &[0.01, 0.05], Objective::ResponseTime, &a).unwrap();
        assert_eq!(rules[0].config, a);
        assert_eq!(rules[1].config, b);
    }

    #[test]
    fn generate_only_reference() {
        let a = EnsembleConfig::osfa(2);
        let rules = generate(&[summary(a, 0.0, 1.0, 1.0)], &[0.0, 0.05, 0.1], Objective::Cost, &a).unwrap();
        assert!(rules.iter().all(|r| r.config == a));
    }

    #[test]
    fn generate_tie_is_stable() {
        let a = EnsembleConfig::osfa(2);
        let x = EnsembleConfig::seq(1, 2, 0.5);
        let y = EnsembleConfig::conc(1, 2, 0.5);
        let s = vec![summary(a, 0.0, 9.0, 9.0), summary(x, 0.01, 5.0, 5.0), summary(y, 0.01, 5.0, 5.0)];
        let rules = generate(&s, &[0.05], Objective::ResponseTime, &a).unwrap();
        assert_eq!(rules[0].config, x);
    }

    #[test]
    fn generate_falls_back_to_reference() {
        let a = EnsembleConfig::osfa(2);
        let b = EnsembleConfig::osfa(1);
        // reference summary with a (pathological) positive degradation
        let s = vec![summary(a, 0.02, 9.0, 9.0), summary(b, 0.5, 1.0, 1.0)];
        let rules = generate(&s, &[0.01], Objective::ResponseTime, &a).unwrap();
        assert_eq!(rules[0].config, a);
        assert!(generate(&s[1..], &[0.01], Objective::ResponseTime, &a).is_err());
    }

    #[test]
    fn generate_rejects_bad_tolerances() {
        let a = EnsembleConfig::osfa(1);
        let s = vec![summary(a, 0.0, 1.0, 1.0)];
        assert!(generate(&s, &[0.05, 0.01], Objective::Cost, &a).is_err());
        assert!(generate(&s, &[0.2], Objective::Cost, &a).is_err());
    }

    fn records(n: usize) -> Vec<RequestRecord> {
        (0..n)
            .map(|i| RequestRecord {
                id: format!("r{i}"),
                outcomes: vec![
                    VersionOutcome { server_ms: 100.0, network_ms: 10.0, error: 0.3, confidence: 0.5 },
                    VersionOutcome { server_ms: 250.0, network_ms: 10.0, error: 0.2, confidence: 0.7 },
                ],
            })
            .collect()
    }

    #[test]
    fn bootstrap_zero_variance_stops_at_min_trials() {
        let train = records(100);
        let s = bootstrap(&EnsembleConfig::osfa(1), &train, 0.999, &EnsembleConfig::osfa(2), 4).unwrap();
        assert_eq!(s.trial_count, 30);
        assert!(s.converged);
        assert!((s.worst.err_deg - 0.5).abs() < 1e-12);
        assert_eq!(s.worst.response_ms, 110.0);
        assert_eq!(s.worst.cost_ms, 100.0);
    }

    #[test]
    fn bootstrap_self_reference_is_zero() {
        let train = records(50);
        let r = EnsembleConfig::osfa(2);
        assert_eq!(bootstrap(&r, &train, 0.99, &r, 1).unwrap().worst.err_deg, 0.0);
    }

    #[test]
    fn bootstrap_rejects_small_train() {
        let train = records(9);
        let r = EnsembleConfig::osfa(2);
        assert!(matches!(bootstrap(&r, &train, 0.99, &r, 1), Err(Error::TooSmall { got: 9, .. })));
    }

    #[test]
    fn lookup_picks_largest_tolerance_below() {
        let a = EnsembleConfig::osfa(2);
        let b = EnsembleConfig::osfa(1);
        let s = vec![summary(a, 0.0, 300.0, 300.0), summary(b, 0.04, 150.0, 150.0)];
        let entries = generate(&s, &[0.0, 0.01, 0.05], Objective::ResponseTime, &a).unwrap();
        let table = TierRuleTable {
            objective: Objective::ResponseTime,
            reference_config: a,
            confidence_level: 0.999,
            entries,
            provenance: Provenance { seed: 0, trace_digest: "t".into(), candidate_digest: "c".into() },
        };
        table.validate().unwrap();
        assert_eq!(table.lookup(0.0).unwrap().config, a);
        assert_eq!(table.lookup(0.049).unwrap().tolerance, 0.01);
        assert_eq!(table.lookup(0.05).unwrap().config, b);
        let err = table.lookup(0.06).unwrap_err();
        assert_eq!((err.min, err.max), (0.0, 0.05));
        let back = TierRuleTable::from_json(&table.to_json()).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn naive_picks_reference_at_zero() {
        let train = records(20);
        let cands = [EnsembleConfig::osfa(1), EnsembleConfig::osfa(2)];
        let r = EnsembleConfig::osfa(2);
        assert_eq!(naive_select(&train, &cands, 0.0, Objective::ResponseTime, &r).unwrap(), r);
        assert_eq!(naive_select(&train, &cands[1..], 0.1, Objective::Cost, &r).unwrap(), r);
        assert_eq!(naive_select(&train, &cands, 0.6, Objective::Cost, &r).unwrap(), cands[0]);
        assert!(naive_select(&train, &[EnsembleConfig::seq(1, 2, 0.5)], 0.1, Objective::Cost, &r).is_err());
    }
}
