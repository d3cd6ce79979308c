use std::time::{SystemTime, UNIX_EPOCH};

use qholo_core::config::ExperimentConfig;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::commands::Outcome;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything outside `excluded` is a pure function of the command, config and build.
pub fn build(command: &str, cfg: &ExperimentConfig, outcome: &Outcome, threads: usize) -> String {
    let canonical = cfg.to_canonical();
    let artifacts: Map<String, Value> = outcome
        .artifacts
        .iter()
        .map(|(k, v)| (k.clone(), json!({ "sha256": sha256_hex(v), "bytes": v.len() })))
        .collect();
    let (status, error) = match &outcome.error {
        Some((code, message)) => ("error", json!({ "code": code, "message": message })),
        None if outcome.tolerance_failed => ("tolerance-failure", json!({ "code": "tolerance", "message": "oracle residual above tolerance" })),
        None => ("ok", Value::Null),
    };
    let metrics: Map<String, Value> = outcome.metrics.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let m = json!({
        "format": "qholo-manifest-1",
        "tool": { "name": "qholo", "version": env!("CARGO_PKG_VERSION") },
        "command": command,
        "status": status,
        "error": error,
        "config": {
            "canonical": canonical,
            "sha256": sha256_hex(canonical.as_bytes()),
        },
        "seed": cfg.seed,
        "rng": cfg.rng,
        "artifacts": artifacts,
        "metrics": metrics,
        "excluded": {
            "unix_time": stamp,
            "threads": threads,
        },
    });
    let mut s = serde_json::to_string_pretty(&m).expect("manifest serializes");
    s.push('\n');
    s
}
