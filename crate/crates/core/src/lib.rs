//! Accuracy-tolerance tiers for ML cloud services.
//!
//! A service deploys several versions of a model that trade accuracy for
//! latency. Clients annotate each request with how much relative accuracy
//! degradation they tolerate and whether they care about response time or
//! invocation cost; the provider routes the request to a one- or two-version
//! ensemble chosen offline so that the tolerance holds with high statistical
//! confidence.
//!
//! - [`domain`]: shared value types and accuracy metrics (WER, top-1).
//! - [`trace`]: request trace files, synthetic trace generation, behaviour
//!   categories.
//! - [`policysim`]: trace-driven simulation of OSFA, sequential and
//!   concurrent routing policies.
//! - [`rulegen`]: bootstrapped worst-case estimation and tolerance-to-config
//!   rule tables.
//! - [`eval`]: cross-validated tolerance sweeps and CSV reports.
//!
//! The `examples/` directory has one runnable program per capability.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod domain;
pub mod error;
pub mod eval;
pub mod policysim;
pub mod rulegen;
pub mod stats;
pub mod trace;

pub use domain::{degradation, top1_error, wer, EnsembleConfig, RequestRecord, SimResult, VersionId, VersionOutcome};
pub use error::{Error, Result};
pub use eval::{run_eval, EvalOptions, EvalReport, FoldStrategy, Policy};
pub use policysim::{enumerate_candidates, simulate, simulate_request, PairSelection, SimOptions};
pub use rulegen::{bootstrap, confident, BootstrapOptions, BootstrapSummary, Objective, RuleGenerator, TierRuleTable};
pub use trace::{categorize, category_report, generate_trace, load_trace, save_trace, Category, SynthParams, Trace};
