use std::env;

use thiserror::Error;
use vizsynth_core::synth::SearchConfig;

pub const DEFAULT_PORT: u16 = 8787;
pub const DEFAULT_MAX_CONCURRENT: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{var}={value:?}: {reason}")]
pub struct EnvError {
    pub var: &'static str,
    pub value: String,
    pub reason: String,
}

/// Service settings. Request config overrides apply on top of `search`.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub port: u16,
    pub search: SearchConfig,
    pub max_concurrent: usize,
    /// Allowed CORS origin; any origin when unset.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> ServiceConfig {
        ServiceConfig {
            port: DEFAULT_PORT,
            search: SearchConfig::default(),
            max_concurrent: DEFAULT_MAX_CONCURRENT,
            cors_origin: None,
        }
    }
}

fn parse<T: std::str::FromStr>(var: &'static str, value: &str) -> Result<T, EnvError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| EnvError {
        var,
        value: value.to_string(),
        reason: e.to_string(),
    })
}

/// Parses a comma list of millisecond budgets; `inf` means unbounded.
pub fn parse_budgets(var: &'static str, value: &str) -> Result<Vec<Option<u64>>, EnvError> {
    value
        .split(',')
        .map(|part| match part.trim() {
            "inf" | "none" => Ok(None),
            p => parse::<u64>(var, p).map(Some),
        })
        .collect()
}

impl ServiceConfig {
    pub fn from_env() -> Result<ServiceConfig, EnvError> {
        ServiceConfig::from_lookup(|k| env::var(k).ok())
    }

    /// Reads `SYNTH_PORT`, `SYNTH_MAX_DEPTH`, `SYNTH_BUDGETS_MS`,
    /// `SYNTH_MAX_CANDIDATES`, `SYNTH_MAX_CONCURRENT` and `SYNTH_CORS_ORIGIN`.
    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<ServiceConfig, EnvError> {
        let mut cfg = ServiceConfig::default();
        if let Some(v) = get("SYNTH_PORT") {
            cfg.port = parse("SYNTH_PORT", &v)?;
        }
        if let Some(v) = get("SYNTH_MAX_DEPTH") {
            cfg.search.max_depth = parse("SYNTH_MAX_DEPTH", &v)?;
        }
        if let Some(v) = get("SYNTH_BUDGETS_MS") {
            cfg.search.worker_budgets_ms = parse_budgets("SYNTH_BUDGETS_MS", &v)?;
        }
        if let Some(v) = get("SYNTH_MAX_CANDIDATES") {
            cfg.search.max_candidates = parse("SYNTH_MAX_CANDIDATES", &v)?;
        }
        if let Some(v) = get("SYNTH_MAX_CONCURRENT") {
            cfg.max_concurrent = parse("SYNTH_MAX_CONCURRENT", &v)?;
            if cfg.max_concurrent == 0 {
                return Err(EnvError {
                    var: "SYNTH_MAX_CONCURRENT",
                    value: v,
                    reason: "must be at least 1".into(),
                });
            }
        }
        cfg.cors_origin = get("SYNTH_CORS_ORIGIN").filter(|s| !s.is_empty());
        cfg.search.validate().map_err(|e| EnvError {
            var: "SYNTH_*",
            value: String::new(),
            reason: e.to_string(),
        })?;
        Ok(cfg)
    }
}
