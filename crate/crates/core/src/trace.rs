//! Request traces: the line-delimited JSON file format, a seeded synthetic
//! generator calibrated to the behaviour of real ASR and image-classification
//! services, and per-request behaviour categories.
//!
//! A trace file starts with a header line followed by one record per line:
//!
//! ```text
//! {"mode":"asr","version_count":2}
//! {"id":"r0","outcomes":[{"server_ms":100.0,"network_ms":20.0,"error":0.2,"confidence":0.9},...]}
//! ```

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{RequestRecord, VersionId, VersionOutcome};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceMode {
    /// Continuous per-request error (word error rate).
    Asr,
    /// Binary per-request error (top-1).
    Ic,
}

impl std::str::FromStr for TraceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asr" => Ok(TraceMode::Asr),
            "ic" => Ok(TraceMode::Ic),
            other => Err(Error::validation(format!("unknown trace mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct TraceHeader {
    mode: TraceMode,
    version_count: usize,
}

/// A validated set of request records sharing one version count.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    mode: TraceMode,
    version_count: usize,
    records: Vec<RequestRecord>,
}

impl Trace {
    /// Validates every record and the trace-level invariants. An empty record
    /// list is accepted here; [`load_trace`] rejects empty files.
    pub fn new(mode: TraceMode, version_count: usize, records: Vec<RequestRecord>) -> Result<Self> {
        if version_count < 2 {
            return Err(Error::validation(format!("version_count must be >= 2, got {version_count}")));
        }
        for r in &records {
            validate_record(mode, version_count, r)?;
        }
        let trace = Trace { mode, version_count, records };
        trace.check_version_order()?;
        Ok(trace)
    }

    pub fn mode(&self) -> TraceMode {
        self.mode
    }

    pub fn version_count(&self) -> usize {
        self.version_count
    }

    pub fn records(&self) -> &[RequestRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<RequestRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Mean server time of one version over all records.
    pub fn mean_server_ms(&self, version: VersionId) -> f64 {
        mean_server_ms(&self.records, version)
    }

    /// Mean error of one version over all records.
    pub fn mean_error(&self, version: VersionId) -> f64 {
        let s: crate::stats::CompensatedSum = self.records.iter().map(|r| r.outcomes[version.slot()].error).collect();
        s.value() / self.records.len() as f64
    }

    fn check_version_order(&self) -> Result<()> {
        if self.records.is_empty() {
            return Ok(());
        }
        let means: Vec<f64> = (1..=self.version_count).map(|v| self.mean_server_ms(VersionId::new(v))).collect();
        for (i, w) in means.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(Error::validation(format!(
                    "server_ms: mean of version {} ({:.3}) is below version {} ({:.3}); versions must be ordered fastest first",
                    i + 2,
                    w[1],
                    i + 1,
                    w[0]
                )));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 over the canonical serialization of the records.
    pub fn digest(&self) -> String {
        records_digest(&self.records)
    }
}

pub(crate) fn mean_server_ms(records: &[RequestRecord], version: VersionId) -> f64 {
    let s: crate::stats::CompensatedSum = records.iter().map(|r| r.outcomes[version.slot()].server_ms).collect();
    s.value() / records.len() as f64
}

/// Hex SHA-256 over the canonical JSON lines of `records`.
pub fn records_digest(records: &[RequestRecord]) -> String {
    let mut h = Sha256::new();
    for r in records {
        h.update(serde_json::to_vec(r).expect("records serialize"));
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

fn validate_record(mode: TraceMode, version_count: usize, r: &RequestRecord) -> Result<()> {
    if r.outcomes.is_empty() {
        return Err(Error::validation(format!("outcomes: record {:?} has no outcomes", r.id)));
    }
    if r.outcomes.len() != version_count {
        return Err(Error::validation(format!(
            "outcomes: record {:?} has {} outcomes, expected {version_count}",
            r.id,
            r.outcomes.len()
        )));
    }
    for o in &r.outcomes {
        o.validate()?;
        if mode == TraceMode::Ic && o.error != 0.0 && o.error != 1.0 {
            return Err(Error::validation(format!(
                "error: binary-error trace has non-binary error {} in record {:?}",
                o.error, r.id
            )));
        }
    }
    Ok(())
}

/// Reads a trace file. Malformed lines are reported with their 1-based line
/// number; invariant violations name the offending field.
pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace> {
    read_trace(BufReader::new(File::open(path)?))
}

pub fn read_trace<R: BufRead>(reader: R) -> Result<Trace> {
    let mut header: Option<TraceHeader> = None;
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match header {
            None => {
                let h: TraceHeader = serde_json::from_str(&line)
                    .map_err(|e| Error::Parse { line: lineno, message: format!("bad header: {e}") })?;
                header = Some(h);
            }
            Some(h) => {
                let r: RequestRecord =
                    serde_json::from_str(&line).map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
                validate_record(h.mode, h.version_count, &r).map_err(|e| match e {
                    Error::Validation(m) => Error::Validation(format!("line {lineno}: {m}")),
                    other => other,
                })?;
                records.push(r);
            }
        }
    }
    let header = header.ok_or_else(|| Error::validation("empty trace"))?;
    if records.is_empty() {
        return Err(Error::validation("empty trace"));
    }
    Trace::new(header.mode, header.version_count, records)
}

/// Writes the canonical serialization of a trace.
pub fn save_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_trace(trace, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_trace<W: Write>(trace: &Trace, mut w: W) -> Result<()> {
    let header = TraceHeader { mode: trace.mode, version_count: trace.version_count };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for r in &trace.records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// How a request's error evolves from the fastest to the slowest version.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Improves,
    Unchanged,
    Degrades,
    Varies,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Improves, Category::Unchanged, Category::Degrades, Category::Varies];

    fn index(self) -> usize {
        match self {
            Category::Improves => 0,
            Category::Unchanged => 1,
            Category::Degrades => 2,
            Category::Varies => 3,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Category::Improves => "improves",
            Category::Unchanged => "unchanged",
            Category::Degrades => "degrades",
            Category::Varies => "varies",
        };
        f.write_str(s)
    }
}

/// Classifies a record by the shape of its per-version errors. Comparisons
/// use exact equality on the stored values.
pub fn categorize(record: &RequestRecord) -> Category {
    categorize_errors(&record.errors().collect::<Vec<_>>())
}

pub fn categorize_errors(errors: &[f64]) -> Category {
    let (first, last) = match (errors.first(), errors.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Category::Unchanged,
    };
    if errors.iter().all(|&e| e == first) {
        return Category::Unchanged;
    }
    let nonincreasing = errors.windows(2).all(|w| w[1] <= w[0]);
    let nondecreasing = errors.windows(2).all(|w| w[1] >= w[0]);
    if nonincreasing && last < first {
        Category::Improves
    } else if nondecreasing && last > first {
        Category::Degrades
    } else {
        Category::Varies
    }
}

/// Fraction of records in each category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryMix {
    pub improves: f64,
    pub unchanged: f64,
    pub degrades: f64,
    pub varies: f64,
}

impl CategoryMix {
    pub fn get(&self, c: Category) -> f64 {
        self.as_array()[c.index()]
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.improves, self.unchanged, self.degrades, self.varies]
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.as_array();
        if a.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::validation("category_mix: shares must be nonnegative"));
        }
        let s: f64 = a.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!("category_mix: shares sum to {s}, expected 1")));
        }
        Ok(())
    }
}

pub fn category_report(trace: &Trace) -> Result<CategoryMix> {
    category_report_records(trace.records())
}

pub fn category_report_records(records: &[RequestRecord]) -> Result<CategoryMix> {
    if records.is_empty() {
        return Err(Error::validation("empty trace"));
    }
    let mut counts = [0usize; 4];
    for r in records {
        counts[categorize(r).index()] += 1;
    }
    let n = records.len() as f64;
    Ok(CategoryMix {
        improves: counts[0] as f64 / n,
        unchanged: counts[1] as f64 / n,
        degrades: counts[2] as f64 / n,
        varies: counts[3] as f64 / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaShape {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaShape {
    pub const fn new(alpha: f64, beta: f64) -> Self {
        BetaShape { alpha, beta }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// Per-record confidence model.
///
/// Each record draws a base confidence from its category's Beta shape. The
/// confidence of version `v` (0-based, of `n`) is then
/// `base + version_shift * v / (n - 1) - error_coupling * (err_v - min_err) + noise * N(0,1)`,
/// clamped to `[0, 1]`: slower versions are slightly more confident, and a
/// version is less confident on requests it gets wrong.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceModel {
    pub improves: BetaShape,
    pub unchanged: BetaShape,
    pub degrades: BetaShape,
    pub varies: BetaShape,
    pub version_shift: f64,
    pub error_coupling: f64,
    pub noise: f64,
}

impl ConfidenceModel {
    pub fn shape(&self, c: Category) -> BetaShape {
        match c {
            Category::Improves => self.improves,
            Category::Unchanged => self.unchanged,
            Category::Degrades => self.degrades,
            Category::Varies => self.varies,
        }
    }
}

/// Per-category, per-version error levels.
///
/// For continuous-error traces a level is the chance that any one word of an
/// utterance is wrong; for binary traces it is the chance the single label is
/// wrong. `improves` must be nonincreasing with a strictly lower last level,
/// `degrades` nondecreasing with a strictly higher last level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorLevels {
    pub unchanged: f64,
    pub improves: Vec<f64>,
    pub degrades: Vec<f64>,
    pub varies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub mode: TraceMode,
    pub version_count: usize,
    pub record_count: usize,
    pub category_mix: CategoryMix,
    /// Slowest over fastest mean server time.
    pub latency_ratio: f64,
    pub base_server_ms: f64,
    pub network_ms_mean: f64,
    /// Sigma of the per-record lognormal latency jitter.
    pub latency_sigma: f64,
    pub confidence: ConfidenceModel,
    pub error_levels: ErrorLevels,
    /// Utterance length range for continuous-error traces.
    pub min_words: usize,
    pub max_words: usize,
    pub rng_seed: u64,
}

const DEFAULT_CONFIDENCE: ConfidenceModel = ConfidenceModel {
    improves: BetaShape::new(4.0, 3.0),
    unchanged: BetaShape::new(8.0, 2.0),
    degrades: BetaShape::new(2.0, 5.0),
    varies: BetaShape::new(3.0, 3.0),
    version_shift: 0.05,
    error_coupling: 1.5,
    noise: 0.02,
};

impl SynthParams {
    /// Speech-recognition-like preset: seven versions, 2.6x latency spread,
    /// three quarters of the utterances unaffected by the version.
    pub fn asr(record_count: usize, rng_seed: u64) -> Self {
        SynthParams {
            mode: TraceMode::Asr,
            version_count: 7,
            record_count,
            category_mix: CategoryMix { improves: 0.15, unchanged: 0.74, degrades: 0.05, varies: 0.06 },
            latency_ratio: 2.6,
            base_server_ms: 500.0,
            network_ms_mean: 300.0,
            latency_sigma: 0.25,
            confidence: ConfidenceModel { error_coupling: 0.6, ..DEFAULT_CONFIDENCE },
            error_levels: ErrorLevels {
                unchanged: 0.14,
                improves: vec![0.215, 0.214, 0.213, 0.212, 0.211, 0.208, 0.18],
                degrades: vec![0.08, 0.081, 0.082, 0.083, 0.084, 0.085, 0.10],
                varies: vec![0.20, 0.20, 0.20, 0.20, 0.195, 0.19, 0.15],
            },
            min_words: 4,
            max_words: 30,
            rng_seed,
        }
    }

    /// Image-classification-like preset: five networks, 5x latency spread,
    /// binary top-1 errors.
    pub fn ic(record_count: usize, rng_seed: u64) -> Self {
        SynthParams {
            mode: TraceMode::Ic,
            version_count: 5,
            record_count,
            category_mix: CategoryMix { improves: 0.15, unchanged: 0.65, degrades: 0.08, varies: 0.12 },
            latency_ratio: 5.0,
            base_server_ms: 20.0,
            network_ms_mean: 15.0,
            latency_sigma: 0.25,
            confidence: ConfidenceModel { error_coupling: 0.25, ..DEFAULT_CONFIDENCE },
            error_levels: ErrorLevels {
                unchanged: 0.21,
                improves: vec![1.0, 0.75, 0.5, 0.25, 0.0],
                degrades: vec![0.0, 0.25, 0.5, 0.75, 1.0],
                varies: vec![0.9, 0.5, 0.5, 0.5, 0.15],
            },
            min_words: 1,
            max_words: 1,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.category_mix.validate()?;
        let n = self.version_count;
        if n < 2 {
            return Err(Error::validation("version_count: must be >= 2"));
        }
        if !(self.latency_ratio > 1.0) {
            return Err(Error::validation("latency_ratio: must be > 1"));
        }
        if !(self.base_server_ms > 0.0) || !(self.network_ms_mean >= 0.0) || !(self.latency_sigma >= 0.0) {
            return Err(Error::validation("base_server_ms/network_ms_mean/latency_sigma out of range"));
        }
        if self.mode == TraceMode::Asr && (self.min_words == 0 || self.min_words > self.max_words) {
            return Err(Error::validation("min_words/max_words: need 1 <= min_words <= max_words"));
        }
        let el = &self.error_levels;
        for (name, levels) in [("improves", &el.improves), ("degrades", &el.degrades), ("varies", &el.varies)] {
            if levels.len() != n {
                return Err(Error::validation(format!(
                    "error_levels.{name}: expected {n} levels, got {}",
                    levels.len()
                )));
            }
            if levels.iter().any(|l| !(0.0..=1.0).contains(l)) {
                return Err(Error::validation(format!("error_levels.{name}: levels must lie in [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&el.unchanged) {
            return Err(Error::validation("error_levels.unchanged: must lie in [0, 1]"));
        }
        if !(el.improves.windows(2).all(|w| w[1] <= w[0]) && el.improves[n - 1] < el.improves[0]) {
            return Err(Error::validation("error_levels.improves: must decrease overall and never increase"));
        }
        if !(el.degrades.windows(2).all(|w| w[1] >= w[0]) && el.degrades[n - 1] > el.degrades[0]) {
            return Err(Error::validation("error_levels.degrades: must increase overall and never decrease"));
        }
        if self.category_mix.varies > 0.0 && n < 3 {
            return Err(Error::validation("category_mix.varies: needs at least 3 versions"));
        }
        let c = &self.confidence;
        for c in Category::ALL {
            let s = self.confidence.shape(c);
            if !(s.alpha > 0.0 && s.beta > 0.0) {
                return Err(Error::validation(format!("confidence.{c}: Beta parameters must be positive")));
            }
        }
        if !(c.noise >= 0.0) || !(c.error_coupling >= 0.0) {
            return Err(Error::validation("confidence: noise and error_coupling must be nonnegative"));
        }
        Ok(())
    }

    /// Mean server time of each version (0-based), geometric from the base to
    /// `base * latency_ratio`.
    pub fn version_server_ms(&self) -> Vec<f64> {
        let n = self.version_count;
        (0..n).map(|v| self.base_server_ms * self.latency_ratio.powf(v as f64 / (n - 1) as f64)).collect()
    }
}

/// Generates a synthetic trace. Deterministic for a fixed `rng_seed`.
pub fn generate_trace(params: &SynthParams) -> Result<Trace> {
    params.validate()?;
    let n = params.version_count;
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let server_means = params.version_server_ms();
    let cumulative: Vec<f64> = params
        .category_mix
        .as_array()
        .iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect();
    let betas: Vec<Beta<f64>> = Category::ALL
        .iter()
        .map(|&c| {
            let s = params.confidence.shape(c);
            Beta::new(s.alpha, s.beta).map_err(|e| Error::validation(format!("confidence.{c}: {e}")))
        })
        .collect::<Result<_>>()?;
    let sigma = params.latency_sigma;
    let width = params.record_count.max(1).to_string().len();

    let mut records = Vec::with_capacity(params.record_count);
    for i in 0..params.record_count {
        let u: f64 = rng.random();
        let cat = Category::ALL[cumulative.iter().position(|&c| u < c).unwrap_or(3)];
        let words = match params.mode {
            TraceMode::Asr => rng.random_range(params.min_words..=params.max_words),
            TraceMode::Ic => 1,
        };
        let errors = draw_errors(&mut rng, cat, words, &params.error_levels);
        debug_assert_eq!(categorize_errors(&errors), cat);

        let z: f64 = rng.sample(StandardNormal);
        let latency_factor = (sigma * z - sigma * sigma / 2.0).exp();
        let z: f64 = rng.sample(StandardNormal);
        let network_ms = params.network_ms_mean * (sigma * z - sigma * sigma / 2.0).exp();

        let base: f64 = betas[cat.index()].sample(&mut rng);
        let min_err = errors.iter().copied().fold(f64::INFINITY, f64::min);
        let outcomes = (0..n)
            .map(|v| {
                let noise: f64 = rng.sample(StandardNormal);
                let c = base + params.confidence.version_shift * v as f64 / (n - 1) as f64
                    - params.confidence.error_coupling * (errors[v] - min_err)
                    + params.confidence.noise * noise;
                VersionOutcome {
                    server_ms: server_means[v] * latency_factor,
                    network_ms,
                    error: errors[v],
                    confidence: c.clamp(0.0, 1.0),
                }
            })
            .collect();
        records.push(RequestRecord { id: format!("r{i:0width$}"), outcomes });
    }
    Trace::new(params.mode, n, records)
}

fn draw_errors(rng: &mut ChaCha8Rng, cat: Category, words: usize, levels: &ErrorLevels) -> Vec<f64> {
    let n = levels.improves.len();
    let ratio = |k: usize| k as f64 / words as f64;
    match cat {
        Category::Unchanged => {
            let k = (0..words).filter(|_| rng.random::<f64>() < levels.unchanged).count();
            vec![ratio(k); n]
        }
        Category::Improves | Category::Degrades => {
            let schedule = if cat == Category::Improves { &levels.improves } else { &levels.degrades };
            // Each word gets one uniform draw and is wrong at version v iff the
            // draw falls below the level of v, so counts move monotonically with
            // the schedule. The first word is drawn inside the band where it
            // flips, which guarantees a strict change between the endpoints.
            let (lo, hi) = {
                let (a, b) = (schedule[0], schedule[n - 1]);
                (a.min(b), a.max(b))
            };
            let mut draws: Vec<f64> = (0..words).map(|_| rng.random::<f64>()).collect();
            draws[0] = lo + (hi - lo) * rng.random::<f64>();
            schedule.iter().map(|&level| ratio(draws.iter().filter(|&&d| d < level).count())).collect()
        }
        Category::Varies => {
            for _ in 0..1000 {
                let errs: Vec<f64> = levels
                    .varies
                    .iter()
                    .map(|&level| ratio((0..words).filter(|_| rng.random::<f64>() < level).count()))
                    .collect();
                if categorize_errors(&errs) == Category::Varies {
                    return errs;
                }
            }
            // Rare fallback: a single-word bump in the middle.
            let mut errs = vec![0.0; n];
            errs[n / 2] = ratio(1);
            errs
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(errors: &[f64]) -> RequestRecord {
        RequestRecord {
            id: "x".into(),
            outcomes: errors
                .iter()
                .map(|&e| VersionOutcome { server_ms: 1.0, network_ms: 1.0, error: e, confidence: 0.5 })
                .collect(),
        }
    }

    #[test]
    fn categorize_examples() {
        assert_eq!(categorize(&rec(&[0.246, 0.23, 0.23, 0.23, 0.23, 0.0, 0.0])), Category::Improves);
        assert_eq!(categorize(&rec(&[0.0; 7])), Category::Unchanged);
        assert_eq!(categorize(&rec(&[0.1, 0.3, 0.2, 0.1, 0.05, 0.2, 0.1])), Category::Varies);
        assert_eq!(categorize(&rec(&[0.0, 0.0, 0.1])), Category::Degrades);
        // returns to its starting value: neither improves nor degrades
        assert_eq!(categorize(&rec(&[0.2, 0.1, 0.2])), Category::Varies);
    }

    #[test]
    fn category_report_cases() {
        let all_same: Vec<_> = (0..10).map(|i| rec(&[i as f64 / 10.0; 3])).collect();
        let t = Trace::new(TraceMode::Asr, 3, all_same).unwrap();
        let mix = category_report(&t).unwrap();
        assert_eq!(mix.as_array(), [0.0, 1.0, 0.0, 0.0]);

        let t = Trace::new(TraceMode::Asr, 3, vec![rec(&[0.3, 0.2, 0.1])]).unwrap();
        assert_eq!(category_report(&t).unwrap().as_array(), [1.0, 0.0, 0.0, 0.0]);

        let empty = Trace::new(TraceMode::Asr, 3, vec![]).unwrap();
        assert!(category_report(&empty).is_err());
    }

    #[test]
    fn ic_trace_rejects_fractional_error() {
        let err = Trace::new(TraceMode::Ic, 3, vec![rec(&[0.5, 0.0, 0.0])]).unwrap_err();
        assert!(err.to_string().contains("error"));
    }

    #[test]
    fn load_reports_line_numbers_and_fields() {
        let text = "{\"mode\":\"asr\",\"version_count\":2}\n\
            {\"id\":\"a\",\"outcomes\":[{\"server_ms\":1,\"network_ms\":1,\"error\":0.1,\"confidence\":0.5},{\"server_ms\":2,\"network_ms\":1,\"error\":0.1,\"confidence\":0.5}]}\n\
            {\"id\":\"b\",\"outcomes\":[{\"server_ms\":1,\"network_ms\":1,\"error\":0.1,\"confidence\":1.5},{\"server_ms\":2,\"network_ms\":1,\"error\":0.1,\"confidence\":0.5}]}\n";
        let err = read_trace(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("confidence out of range"), "{err}");
        assert!(err.to_string().contains("line 3"), "{err}");

        let bad = "{\"mode\":\"asr\",\"version_count\":2}\n{not json\n";
        match read_trace(bad.as_bytes()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }

        let err = read_trace("".as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "empty trace");
    }

    #[test]
    fn load_checks_version_order() {
        let text = "{\"mode\":\"asr\",\"version_count\":2}\n\
            {\"id\":\"a\",\"outcomes\":[{\"server_ms\":5,\"network_ms\":1,\"error\":0.1,\"confidence\":0.5},{\"server_ms\":2,\"network_ms\":1,\"error\":0.1,\"confidence\":0.5}]}\n";
        let err = read_trace(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("server_ms"), "{err}");
    }

    #[test]
    fn mix_must_sum_to_one() {
        let mut p = SynthParams::asr(10, 1);
        p.category_mix.varies = 0.5;
        assert!(generate_trace(&p).unwrap_err().to_string().contains("category_mix"));
    }

    #[test]
    fn zero_records_gives_empty_trace() {
        let t = generate_trace(&SynthParams::asr(0, 1)).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn generated_categories_match_construction() {
        for p in [SynthParams::asr(2000, 5), SynthParams::ic(2000, 5)] {
            let t = generate_trace(&p).unwrap();
            assert_eq!(t.version_count(), p.version_count);
            let ratio = t.mean_server_ms(VersionId::new(p.version_count)) / t.mean_server_ms(VersionId::new(1));
            assert!((ratio / p.latency_ratio - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn ic_preset_is_binary() {
        let t = generate_trace(&SynthParams::ic(500, 3)).unwrap();
        assert_eq!(t.mode(), TraceMode::Ic);
        assert!(t.records().iter().flat_map(|r| r.errors()).all(|e| e == 0.0 || e == 1.0));
    }
}
