//! Trace-driven simulation of the three routing policies.
//!
//! Timing model per request (router overhead is zero, the client round trip is
//! charged once and taken from the first-dispatched version):
//!
//! | policy | early termination                      | full operation                   |
//! |--------|----------------------------------------|----------------------------------|
//! | OSFA   | `net + s(v)`, cost `s(v)`              | n/a                              |
//! | Seq    | `net + s(first)`, cost `s(first)`      | `net + s(first) + s(second)`     |
//! | Conc   | `net + s(fast)`, cost `s(fast) + min(s(slow), s(fast) + cancel_delay)` | `net + max(s(fast), s(slow))` |
//!
//! Full operation always costs the sum of both server times and returns the
//! result of the more confident version, preferring the higher version index
//! on ties.

use serde::{Deserialize, Serialize};

use crate::domain::{degradation_with, DegradationMode, EnsembleConfig, RequestRecord, SimResult, VersionId};
use crate::error::{Error, Result};
use crate::stats::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Extra machine time charged to a cancelled concurrent version between
    /// the fast result arriving and the cancellation taking effect.
    pub cancel_delay_ms: f64,
    pub degradation: DegradationMode,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { cancel_delay_ms: 0.0, degradation: DegradationMode::Relative }
    }
}

/// What one request experiences under one config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestOutcome {
    pub error: f64,
    pub response_ms: f64,
    pub cost_ms: f64,
    pub early_terminated: bool,
    /// Version whose result is returned to the client.
    pub version: VersionId,
}

/// Picks the version whose result is returned after full operation.
pub fn fo_winner(a: (VersionId, f64), b: (VersionId, f64)) -> VersionId {
    use std::cmp::Ordering::*;
    match a.1.partial_cmp(&b.1).unwrap_or(Equal) {
        Greater => a.0,
        Less => b.0,
        Equal => a.0.max(b.0),
    }
}

pub fn simulate_request(record: &RequestRecord, config: &EnsembleConfig) -> Result<RequestOutcome> {
    simulate_request_with(record, config, &SimOptions::default())
}

pub fn simulate_request_with(
    record: &RequestRecord,
    config: &EnsembleConfig,
    opts: &SimOptions,
) -> Result<RequestOutcome> {
    match *config {
        EnsembleConfig::Osfa { version } => {
            let o = record.outcome(version)?;
            Ok(RequestOutcome {
                error: o.error,
                response_ms: o.network_ms + o.server_ms,
                cost_ms: o.server_ms,
                early_terminated: true,
                version,
            })
        }
        EnsembleConfig::Seq { first, second, threshold } => {
            let a = record.outcome(first)?;
            let b = record.outcome(second)?;
            if a.confidence >= threshold {
                return Ok(RequestOutcome {
                    error: a.error,
                    response_ms: a.network_ms + a.server_ms,
                    cost_ms: a.server_ms,
                    early_terminated: true,
                    version: first,
                });
            }
            let winner = fo_winner((first, a.confidence), (second, b.confidence));
            Ok(RequestOutcome {
                error: if winner == first { a.error } else { b.error },
                response_ms: a.network_ms + a.server_ms + b.server_ms,
                cost_ms: a.server_ms + b.server_ms,
                early_terminated: false,
                version: winner,
            })
        }
        EnsembleConfig::Conc { fast, slow, threshold } => {
            let f = record.outcome(fast)?;
            let s = record.outcome(slow)?;
            if f.confidence >= threshold {
                return Ok(RequestOutcome {
                    error: f.error,
                    response_ms: f.network_ms + f.server_ms,
                    cost_ms: f.server_ms + s.server_ms.min(f.server_ms + opts.cancel_delay_ms),
                    early_terminated: true,
                    version: fast,
                });
            }
            let winner = fo_winner((fast, f.confidence), (slow, s.confidence));
            Ok(RequestOutcome {
                error: if winner == fast { f.error } else { s.error },
                response_ms: f.network_ms + f.server_ms.max(s.server_ms),
                cost_ms: f.server_ms + s.server_ms,
                early_terminated: false,
                version: winner,
            })
        }
    }
}

/// Running sums behind a [`SimResult`]. Order-independent up to compensated
/// rounding, so partial accumulators can be merged.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimAccumulator {
    count: usize,
    error: CompensatedSum,
    reference_error: CompensatedSum,
    response: CompensatedSum,
    cost: CompensatedSum,
    early: usize,
}

impl SimAccumulator {
    pub fn add(&mut self, outcome: &RequestOutcome, reference_error: f64) {
        self.count += 1;
        self.error.add(outcome.error);
        self.reference_error.add(reference_error);
        self.response.add(outcome.response_ms);
        self.cost.add(outcome.cost_ms);
        self.early += usize::from(outcome.early_terminated);
    }

    pub fn merge(&mut self, other: &SimAccumulator) {
        self.count += other.count;
        self.error.merge(&other.error);
        self.reference_error.merge(&other.reference_error);
        self.response.merge(&other.response);
        self.cost.merge(&other.cost);
        self.early += other.early;
    }

    pub fn finish(&self, mode: DegradationMode) -> Result<SimResult> {
        if self.count == 0 {
            return Err(Error::EmptySample);
        }
        let n = self.count as f64;
        let mean_error = self.error.value() / n;
        let reference = self.reference_error.value() / n;
        Ok(SimResult {
            mean_error,
            error_degradation: degradation_with(mode, mean_error, reference),
            mean_response_ms: self.response.value() / n,
            mean_cost_ms: self.cost.value() / n,
            et_fraction: self.early as f64 / n,
        })
    }
}

/// Simulates `config` over a sample, measuring degradation against
/// `reference` on the same requests.
pub fn simulate(sample: &[RequestRecord], config: &EnsembleConfig, reference: &EnsembleConfig) -> Result<SimResult> {
    simulate_with(sample, config, reference, &SimOptions::default())
}

pub fn simulate_with(
    sample: &[RequestRecord],
    config: &EnsembleConfig,
    reference: &EnsembleConfig,
    opts: &SimOptions,
) -> Result<SimResult> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut acc = SimAccumulator::default();
    for r in sample {
        let o = simulate_request_with(r, config, opts)?;
        let reference_error = simulate_request_with(r, reference, opts)?.error;
        acc.add(&o, reference_error);
    }
    acc.finish(opts.degradation)
}

/// Per-request outcomes of one config over a fixed record set, computed once
/// so repeated resamples only have to sum.
#[derive(Debug, Clone)]
pub struct PreparedOutcomes {
    outcomes: Vec<RequestOutcome>,
    reference_errors: Vec<f64>,
    mode: DegradationMode,
}

impl PreparedOutcomes {
    pub fn new(
        records: &[RequestRecord],
        config: &EnsembleConfig,
        reference: &EnsembleConfig,
        opts: &SimOptions,
    ) -> Result<Self> {
        let mut outcomes = Vec::with_capacity(records.len());
        let mut reference_errors = Vec::with_capacity(records.len());
        for r in records {
            outcomes.push(simulate_request_with(r, config, opts)?);
            reference_errors.push(simulate_request_with(r, reference, opts)?.error);
        }
        Ok(PreparedOutcomes { outcomes, reference_errors, mode: opts.degradation })
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Same result as [`simulate_with`] on the records selected by `indices`.
    pub fn simulate_indices(&self, indices: &[usize]) -> Result<SimResult> {
        let mut acc = SimAccumulator::default();
        for &i in indices {
            acc.add(&self.outcomes[i], self.reference_errors[i]);
        }
        acc.finish(self.mode)
    }

    pub fn simulate_all(&self) -> Result<SimResult> {
        let mut acc = SimAccumulator::default();
        for (o, &e) in self.outcomes.iter().zip(&self.reference_errors) {
            acc.add(o, e);
        }
        acc.finish(self.mode)
    }
}

/// Which (fast, accurate) version pairs to build ensembles from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PairSelection {
    /// Only the fastest and the most accurate version.
    #[default]
    FastestSlowest,
    /// Every pair of distinct versions.
    AllPairs,
    Explicit(Vec<(VersionId, VersionId)>),
}

/// Candidate configs: every OSFA version, then for each selected pair and
/// threshold `Seq(fast, slow)`, `Seq(slow, fast)` and `Conc(fast, slow)`.
///
/// Pairs are oriented by mean server time over `records`; equal means fall
/// back to version order.
pub fn enumerate_candidates(
    records: &[RequestRecord],
    version_count: usize,
    thresholds: &[f64],
    pairs: &PairSelection,
) -> Result<Vec<EnsembleConfig>> {
    if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::validation(format!("threshold out of range ({t})")));
    }
    let mut out: Vec<EnsembleConfig> = (1..=version_count).map(EnsembleConfig::osfa).collect();
    if thresholds.is_empty() {
        return Ok(out);
    }
    let raw: Vec<(VersionId, VersionId)> = match pairs {
        PairSelection::FastestSlowest => vec![(VersionId::new(1), VersionId::new(version_count))],
        PairSelection::AllPairs => (1..=version_count)
            .flat_map(|a| ((a + 1)..=version_count).map(move |b| (VersionId::new(a), VersionId::new(b))))
            .collect(),
        PairSelection::Explicit(p) => p.clone(),
    };
    for (a, b) in raw {
        if a == b || a.get() == 0 || b.get() == 0 || a.get() > version_count || b.get() > version_count {
            return Err(Error::validation(format!("bad version pair ({a}, {b})")));
        }
        let (fast, slow) = orient_pair(records, a, b)?;
        for &t in thresholds {
            out.push(EnsembleConfig::Seq { first: fast, second: slow, threshold: t });
            out.push(EnsembleConfig::Seq { first: slow, second: fast, threshold: t });
            out.push(EnsembleConfig::Conc { fast, slow, threshold: t });
        }
    }
    Ok(out)
}

fn orient_pair(records: &[RequestRecord], a: VersionId, b: VersionId) -> Result<(VersionId, VersionId)> {
    let by_index = (a.min(b), a.max(b));
    if records.is_empty() {
        return Ok(by_index);
    }
    let ma = crate::trace::mean_server_ms(records, a);
    let mb = crate::trace::mean_server_ms(records, b);
    Ok(if ma < mb {
        (a, b)
    } else if mb < ma {
        (b, a)
    } else {
        by_index
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::VersionOutcome;

    fn record() -> RequestRecord {
        RequestRecord {
            id: "r".into(),
            outcomes: vec![
                VersionOutcome { server_ms: 100.0, network_ms: 20.0, error: 0.2, confidence: 0.9 },
                VersionOutcome { server_ms: 300.0, network_ms: 20.0, error: 0.1, confidence: 0.95 },
            ],
        }
    }

    #[test]
    fn osfa_semantics() {
        let o = simulate_request(&record(), &EnsembleConfig::osfa(2)).unwrap();
        assert_eq!((o.error, o.response_ms, o.cost_ms, o.early_terminated), (0.1, 320.0, 300.0, true));
    }

    #[test]
    fn seq_zero_threshold_terminates_early() {
        let o = simulate_request(&record(), &EnsembleConfig::seq(1, 2, 0.0)).unwrap();
        assert_eq!((o.error, o.response_ms, o.cost_ms, o.early_terminated), (0.2, 120.0, 100.0, true));
    }

    #[test]
    fn conc_full_operation() {
        let o = simulate_request(&record(), &EnsembleConfig::conc(1, 2, 1.0)).unwrap();
        assert_eq!((o.error, o.response_ms, o.cost_ms, o.early_terminated), (0.1, 320.0, 400.0, false));
        assert_eq!(o.version, VersionId::new(2));
    }

    #[test]
    fn conc_early_termination_charges_cancel_delay() {
        let r = record();
        let c = EnsembleConfig::conc(1, 2, 0.5);
        let o = simulate_request(&r, &c).unwrap();
        assert_eq!((o.response_ms, o.cost_ms, o.early_terminated), (120.0, 200.0, true));
        let opts = SimOptions { cancel_delay_ms: 50.0, ..Default::default() };
        assert_eq!(simulate_request_with(&r, &c, &opts).unwrap().cost_ms, 250.0);
        let opts = SimOptions { cancel_delay_ms: 1e6, ..Default::default() };
        assert_eq!(simulate_request_with(&r, &c, &opts).unwrap().cost_ms, 400.0);
    }

    #[test]
    fn seq_full_operation_may_return_first() {
        let mut r = record();
        r.outcomes[0].confidence = 0.97;
        let o = simulate_request(&r, &EnsembleConfig::seq(1, 2, 0.99)).unwrap();
        assert!(!o.early_terminated);
        assert_eq!((o.version, o.error, o.response_ms, o.cost_ms), (VersionId::new(1), 0.2, 420.0, 400.0));
    }

    #[test]
    fn ties_go_to_higher_version() {
        assert_eq!(fo_winner((VersionId(1), 0.5), (VersionId(2), 0.5)), VersionId(2));
        assert_eq!(fo_winner((VersionId(7), 0.5), (VersionId(1), 0.5)), VersionId(7));
        assert_eq!(fo_winner((VersionId(7), 0.4), (VersionId(1), 0.5)), VersionId(1));
    }

    #[test]
    fn bad_version_index() {
        assert!(matches!(
            simulate_request(&record(), &EnsembleConfig::osfa(3)),
            Err(Error::BadVersion { version: 3, available: 2 })
        ));
    }

    #[test]
    fn simulate_self_reference_and_linearity() {
        let sample = vec![record(), record()];
        let c = EnsembleConfig::osfa(2);
        assert_eq!(simulate(&sample, &c, &c).unwrap().error_degradation, 0.0);
        let fo = simulate(&sample, &EnsembleConfig::seq(1, 2, 1.0), &c).unwrap();
        assert_eq!(fo.mean_response_ms, 20.0 + 100.0 + 300.0);
        assert_eq!(fo.mean_cost_ms, 400.0);
        assert_eq!(fo.et_fraction, 0.0);
        assert!(simulate(&[], &c, &c).is_err());
    }

    #[test]
    fn enumeration_counts() {
        let recs = vec![record()];
        let c = enumerate_candidates(&recs, 2, &[0.5], &PairSelection::FastestSlowest).unwrap();
        assert_eq!(
            c,
            vec![
                EnsembleConfig::osfa(1),
                EnsembleConfig::osfa(2),
                EnsembleConfig::seq(1, 2, 0.5),
                EnsembleConfig::seq(2, 1, 0.5),
                EnsembleConfig::conc(1, 2, 0.5),
            ]
        );
        assert_eq!(enumerate_candidates(&recs, 2, &[], &PairSelection::FastestSlowest).unwrap().len(), 2);
        let t: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        assert_eq!(enumerate_candidates(&[], 7, &t, &PairSelection::FastestSlowest).unwrap().len(), 40);
        assert_eq!(enumerate_candidates(&[], 3, &[0.5], &PairSelection::AllPairs).unwrap().len(), 3 + 3 * 3);
    }

    #[test]
    fn explicit_pair_is_oriented_by_speed() {
        let recs = vec![record()];
        let pairs = PairSelection::Explicit(vec![(VersionId(2), VersionId(1))]);
        let c = enumerate_candidates(&recs, 2, &[0.5], &pairs).unwrap();
        assert_eq!(c[4], EnsembleConfig::conc(1, 2, 0.5));
    }
}
