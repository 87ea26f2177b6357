//! Core value types shared by the simulator, the rule generator and the gateway,
//! plus the two per-request accuracy metrics (word error rate and top-1 error).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-based index of a service version. Version 1 is the fastest and least
/// accurate, version `n` the slowest and most accurate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VersionId(pub u16);

impl VersionId {
    pub fn new(one_based: usize) -> Self {
        VersionId(one_based as u16)
    }

    /// Zero-based slot into `RequestRecord::outcomes`.
    pub fn slot(self) -> usize {
        (self.0 as usize).wrapping_sub(1)
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VersionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Measured behaviour of one service version on one request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VersionOutcome {
    pub server_ms: f64,
    pub network_ms: f64,
    pub error: f64,
    pub confidence: f64,
}

impl VersionOutcome {
    /// Builds an outcome from a raw WER value, clamping it into `[0, 1]`.
    pub fn from_wer(server_ms: f64, network_ms: f64, raw_wer: f64, confidence: f64) -> Self {
        VersionOutcome { server_ms, network_ms, error: raw_wer.clamp(0.0, 1.0), confidence }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.server_ms >= 0.0 && self.server_ms.is_finite()) {
            return Err(Error::validation(format!("server_ms out of range ({})", self.server_ms)));
        }
        if !(self.network_ms >= 0.0 && self.network_ms.is_finite()) {
            return Err(Error::validation(format!("network_ms out of range ({})", self.network_ms)));
        }
        if !(0.0..=1.0).contains(&self.error) {
            return Err(Error::validation(format!("error out of range ({})", self.error)));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::validation(format!("confidence out of range ({})", self.confidence)));
        }
        Ok(())
    }
}

/// A single service input with the outcome of every deployed version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub id: String,
    pub outcomes: Vec<VersionOutcome>,
}

impl RequestRecord {
    pub fn version_count(&self) -> usize {
        self.outcomes.len()
    }

    pub fn outcome(&self, version: VersionId) -> Result<&VersionOutcome> {
        self.outcomes
            .get(version.slot())
            .ok_or(Error::BadVersion { version: version.get(), available: self.outcomes.len() })
    }

    pub fn errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.outcomes.iter().map(|o| o.error)
    }
}

/// A candidate deployment for one tolerance tier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum EnsembleConfig {
    /// One-size-fits-all: a single version serves every request.
    Osfa { version: VersionId },
    /// Sequential issue: consult `second` only when `first` is not confident.
    Seq { first: VersionId, second: VersionId, threshold: f64 },
    /// Concurrent issue: dispatch both, cancel `slow` when `fast` is confident.
    Conc { fast: VersionId, slow: VersionId, threshold: f64 },
}

impl EnsembleConfig {
    pub fn osfa(version: usize) -> Self {
        EnsembleConfig::Osfa { version: VersionId::new(version) }
    }

    pub fn seq(first: usize, second: usize, threshold: f64) -> Self {
        EnsembleConfig::Seq { first: VersionId::new(first), second: VersionId::new(second), threshold }
    }

    pub fn conc(fast: usize, slow: usize, threshold: f64) -> Self {
        EnsembleConfig::Conc { fast: VersionId::new(fast), slow: VersionId::new(slow), threshold }
    }

    pub fn is_osfa(&self) -> bool {
        matches!(self, EnsembleConfig::Osfa { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            EnsembleConfig::Osfa { .. } => "osfa",
            EnsembleConfig::Seq { .. } => "seq",
            EnsembleConfig::Conc { .. } => "conc",
        }
    }

    /// Versions this config may dispatch to, in dispatch order.
    pub fn versions(&self) -> Vec<VersionId> {
        match *self {
            EnsembleConfig::Osfa { version } => vec![version],
            EnsembleConfig::Seq { first, second, .. } => vec![first, second],
            EnsembleConfig::Conc { fast, slow, .. } => vec![fast, slow],
        }
    }

    /// Structural checks that do not need a trace.
    pub fn validate(&self, version_count: usize) -> Result<()> {
        for v in self.versions() {
            if v.get() == 0 || v.get() > version_count {
                return Err(Error::BadVersion { version: v.get(), available: version_count });
            }
        }
        match *self {
            EnsembleConfig::Osfa { .. } => Ok(()),
            EnsembleConfig::Seq { first, second, threshold } => {
                if first == second {
                    return Err(Error::validation("seq: first and second must differ"));
                }
                check_threshold(threshold)
            }
            EnsembleConfig::Conc { fast, slow, threshold } => {
                if fast == slow {
                    return Err(Error::validation("conc: fast and slow must differ"));
                }
                check_threshold(threshold)
            }
        }
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::validation(format!("threshold out of range ({t})")))
    }
}

impl fmt::Display for EnsembleConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnsembleConfig::Osfa { version } => write!(f, "OSFA({version})"),
            EnsembleConfig::Seq { first, second, threshold } => {
                write!(f, "Seq({first},{second},{threshold})")
            }
            EnsembleConfig::Conc { fast, slow, threshold } => {
                write!(f, "Conc({fast},{slow},{threshold})")
            }
        }
    }
}

/// Aggregate outcome of simulating one config over a request sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub mean_error: f64,
    pub error_degradation: f64,
    pub mean_response_ms: f64,
    pub mean_cost_ms: f64,
    pub et_fraction: f64,
}

/// How error degradation against the reference config is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegradationMode {
    /// `(candidate - reference) / reference`, falling back to the absolute
    /// difference when the reference error is zero.
    #[default]
    Relative,
    /// `candidate - reference` in error units.
    Absolute,
}

/// Relative error degradation of a candidate against the reference config.
///
/// Negative when the candidate is more accurate than the reference. With a
/// zero reference error the ratio is undefined and the absolute difference is
/// returned instead.
pub fn degradation(candidate_mean_error: f64, reference_mean_error: f64) -> f64 {
    degradation_with(DegradationMode::Relative, candidate_mean_error, reference_mean_error)
}

pub fn degradation_with(mode: DegradationMode, candidate: f64, reference: f64) -> f64 {
    let diff = candidate - reference;
    match mode {
        DegradationMode::Relative if reference > 0.0 => diff / reference,
        _ => diff,
    }
}

/// Splits a transcript into lower-cased words on runs of whitespace.
/// Punctuation is kept as part of the word.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Minimum number of word insertions, deletions and substitutions turning
/// `hypothesis` into `reference`.
pub fn word_edit_distance<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> usize {
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut cur = vec![0; hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r.as_ref() != h.as_ref());
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[hypothesis.len()]
}

/// Word error rate: word-level edit distance over the reference length.
///
/// The value is not clamped and exceeds 1.0 when the hypothesis inserts more
/// words than the reference contains.
pub fn wer<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    Ok(word_edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

/// WER between two raw transcripts, tokenized with [`tokenize`].
pub fn wer_text(reference: &str, hypothesis: &str) -> Result<f64> {
    wer(&tokenize(reference), &tokenize(hypothesis))
}

/// Top-1 classification error: 0.0 on a correct prediction, 1.0 otherwise.
pub fn top1_error<L: PartialEq + ?Sized>(predicted: &L, actual: &L) -> f64 {
    if predicted == actual {
        0.0
    } else {
        1.0
    }
}

/// Index of the highest score, first one winning on ties.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    scores
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &s)| match best {
            Some((_, b)) if b >= s => best,
            _ => Some((i, s)),
        })
        .map(|(i, _)| i)
}
