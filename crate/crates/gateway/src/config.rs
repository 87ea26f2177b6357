//! Gateway configuration: a TOML file with `TOLTIERS_*` environment
//! overrides.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! request_timeout_ms = 30000
//! # expected_candidate_digest = "…"
//!
//! [rules]
//! response_time = "rules-rt.json"
//! cost = "rules-cost.json"
//!
//! [backends]
//! 1 = ["http://127.0.0.1:9001"]
//! 7 = ["http://127.0.0.1:9001", "http://127.0.0.1:9002"]
//! ```
//!
//! | variable | overrides |
//! |---|---|
//! | `TOLTIERS_LISTEN` | `listen` |
//! | `TOLTIERS_REQUEST_TIMEOUT_MS` | `request_timeout_ms` |
//! | `TOLTIERS_EXPECTED_CANDIDATE_DIGEST` | `expected_candidate_digest` |
//! | `TOLTIERS_RULES_RESPONSE_TIME` | `rules.response_time` |
//! | `TOLTIERS_RULES_COST` | `rules.cost` |
//! | `TOLTIERS_BACKENDS_V<n>` | `backends.<n>`, comma-separated URLs |

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RulePaths {
    pub response_time: Option<PathBuf>,
    pub cost: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    #[serde(default = "default_timeout")]
    pub request_timeout_ms: u64,
    /// When set, rule tables whose candidate-set digest differs are refused.
    #[serde(default)]
    pub expected_candidate_digest: Option<String>,
    #[serde(default)]
    pub rules: RulePaths,
    /// Backend base URLs per 1-based version index.
    #[serde(default)]
    pub backends: BTreeMap<String, Vec<String>>,
}

fn default_listen() -> SocketAddr {
    "127.0.0.1:8080".parse().expect("valid address")
}

fn default_timeout() -> u64 {
    30_000
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            listen: default_listen(),
            request_timeout_ms: default_timeout(),
            expected_candidate_digest: None,
            rules: RulePaths::default(),
            backends: BTreeMap::new(),
        }
    }
}

impl GatewayConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path` (if given), applies the process environment and validates.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.to_path_buf(), source })?;
                Self::from_toml(&text)?
            }
            None => GatewayConfig::default(),
        };
        cfg.apply_env(std::env::vars())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        for (key, value) in vars {
            let Some(name) = key.strip_prefix("TOLTIERS_") else { continue };
            match name {
                "LISTEN" => {
                    self.listen =
                        value.parse().map_err(|e| ConfigError::Invalid(format!("TOLTIERS_LISTEN={value:?}: {e}")))?;
                }
                "REQUEST_TIMEOUT_MS" => {
                    self.request_timeout_ms = value
                        .parse()
                        .map_err(|e| ConfigError::Invalid(format!("TOLTIERS_REQUEST_TIMEOUT_MS={value:?}: {e}")))?;
                }
                "EXPECTED_CANDIDATE_DIGEST" => self.expected_candidate_digest = Some(value),
                "RULES_RESPONSE_TIME" => self.rules.response_time = Some(value.into()),
                "RULES_COST" => self.rules.cost = Some(value.into()),
                other => {
                    if let Some(v) = other.strip_prefix("BACKENDS_V") {
                        let urls = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from);
                        self.backends.insert(v.to_string(), urls.collect());
                    }
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.rules.response_time.is_none() && self.rules.cost.is_none() {
            return Err(ConfigError::Invalid("no rule table configured (rules.response_time / rules.cost)".into()));
        }
        self.pools()?;
        Ok(())
    }

    /// Backend pools keyed by numeric version.
    pub fn pools(&self) -> Result<BTreeMap<u16, Vec<String>>, ConfigError> {
        let mut out = BTreeMap::new();
        for (k, urls) in &self.backends {
            let v: u16 = k
                .parse()
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| ConfigError::Invalid(format!("backends: bad version key {k:?}")))?;
            if urls.is_empty() {
                return Err(ConfigError::Invalid(format!("backends.{k}: empty pool")));
            }
            out.insert(v, urls.iter().map(|u| u.trim_end_matches('/').to_string()).collect());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
listen = "0.0.0.0:9000"

[rules]
response_time = "rt.json"

[backends]
1 = ["http://a:1/"]
2 = ["http://b:2", "http://c:3"]
"#;

    #[test]
    fn parses_file() {
        let c = GatewayConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(c.listen.port(), 9000);
        assert_eq!(c.request_timeout_ms, 30_000);
        let pools = c.pools().unwrap();
        assert_eq!(pools[&1], vec!["http://a:1"]);
        assert_eq!(pools[&2].len(), 2);
        c.validate().unwrap();
    }

    #[test]
    fn env_overrides_win() {
        let mut c = GatewayConfig::from_toml(SAMPLE).unwrap();
        c.apply_env([
            ("TOLTIERS_LISTEN".to_string(), "127.0.0.1:7000".to_string()),
            ("TOLTIERS_RULES_COST".to_string(), "cost.json".to_string()),
            ("TOLTIERS_BACKENDS_V2".to_string(), "http://x:1, http://y:2".to_string()),
            ("UNRELATED".to_string(), "1".to_string()),
        ])
        .unwrap();
        assert_eq!(c.listen.port(), 7000);
        assert_eq!(c.rules.cost.as_deref(), Some(Path::new("cost.json")));
        assert_eq!(c.pools().unwrap()[&2], vec!["http://x:1", "http://y:2"]);
        assert!(c.apply_env([("TOLTIERS_LISTEN".to_string(), "nope".to_string())]).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(GatewayConfig::from_toml("bogus = 1").is_err());
        assert!(GatewayConfig::default().validate().is_err());
        let mut c = GatewayConfig::from_toml(SAMPLE).unwrap();
        c.backends.insert("zero".into(), vec!["http://a".into()]);
        assert!(c.validate().is_err());
    }
}
