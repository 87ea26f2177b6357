use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

#[derive(Debug, Default)]
struct Inner {
    per_tier: BTreeMap<String, u64>,
    served: u64,
    early_terminated: u64,
    latencies_ms: Vec<f64>,
    billed_ms: f64,
    errors: BTreeMap<u16, u64>,
}

/// Request counters shared by all handlers.
#[derive(Debug, Default)]
pub struct Metrics {
    inner: Mutex<Inner>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub p50_ms: f64,
    pub p99_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub requests_served: u64,
    /// Served requests keyed by `objective@tier-tolerance`.
    pub per_tier: BTreeMap<String, u64>,
    pub et_fraction: f64,
    pub latency: Option<LatencySummary>,
    pub billed_ms_total: f64,
    /// Failed requests keyed by HTTP status.
    pub errors: BTreeMap<u16, u64>,
}

impl Metrics {
    pub fn record_served(&self, tier_key: String, early_terminated: bool, latency_ms: f64, billed_ms: f64) {
        let mut m = self.inner.lock().expect("metrics lock");
        *m.per_tier.entry(tier_key).or_default() += 1;
        m.served += 1;
        m.early_terminated += u64::from(early_terminated);
        m.latencies_ms.push(latency_ms);
        m.billed_ms += billed_ms;
    }

    /// Billed time of work that failed to produce a response still counts.
    pub fn record_error(&self, status: u16, billed_ms: f64) {
        let mut m = self.inner.lock().expect("metrics lock");
        *m.errors.entry(status).or_default() += 1;
        m.billed_ms += billed_ms;
    }

    pub fn snapshot(&self) -> MetricsSnapshot {
        let m = self.inner.lock().expect("metrics lock");
        let latency = (!m.latencies_ms.is_empty()).then(|| {
            let mut v = m.latencies_ms.clone();
            v.sort_by(f64::total_cmp);
            LatencySummary { p50_ms: percentile(&v, 0.50), p99_ms: percentile(&v, 0.99) }
        });
        MetricsSnapshot {
            requests_served: m.served,
            per_tier: m.per_tier.clone(),
            et_fraction: if m.served == 0 { 0.0 } else { m.early_terminated as f64 / m.served as f64 },
            latency,
            billed_ms_total: m.billed_ms,
            errors: m.errors.clone(),
        }
    }
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.5), 50.0);
        assert_eq!(percentile(&v, 0.99), 99.0);
        assert_eq!(percentile(&[7.0], 0.99), 7.0);
    }

    #[test]
    fn snapshot_aggregates() {
        let m = Metrics::default();
        assert!(m.snapshot().latency.is_none());
        m.record_served("cost@0.01".into(), true, 10.0, 5.0);
        m.record_served("cost@0.01".into(), false, 30.0, 7.0);
        m.record_error(503, 1.0);
        let s = m.snapshot();
        assert_eq!(s.per_tier["cost@0.01"], 2);
        assert_eq!(s.et_fraction, 0.5);
        assert_eq!(s.billed_ms_total, 13.0);
        assert_eq!(s.errors[&503], 1);
        assert_eq!(s.latency.unwrap().p50_ms, 10.0);
    }
}
