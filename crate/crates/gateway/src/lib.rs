//! Tier-routing HTTP gateway, mock version backend and the `toltiers` CLI.
//!
//! - [`config`]: gateway config file with environment overrides.
//! - [`protocol`]: headers and JSON bodies shared by gateway and backends.
//! - [`router`]: rule lookup and OSFA/Seq/Conc execution against backends.
//! - [`server`]: `POST /compute`, `GET /metrics`, `POST /reload-rules`.
//! - [`mock`]: backend serving `POST /infer` and `POST /cancel/{request_id}`.
//! - [`metrics`]: served-request counters.
//! - [`cli`]: the command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod metrics;
pub mod mock;
pub mod protocol;
pub mod router;
pub mod server;
