//! Results records, summary files, and report aggregation.
//!
//! Every run writes `summary_<subcommand>.json` into its output directory:
//! `{run_id, subcommand, config_hash, metrics, timings}`. Metrics are pure
//! functions of (config, seeds) and reproduce bit-exactly; timings are
//! informational only. `report` merges every summary in a directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultsRecord {
    pub run_id: String,
    pub subcommand: String,
    pub config_hash: String,
    pub metrics: Value,
    /// Wall-clock seconds per stage; excluded from the determinism
    /// contract.
    pub timings: BTreeMap<String, f64>,
}

impl ResultsRecord {
    pub fn new(subcommand: &str, cfg: &ExperimentConfig, metrics: Value) -> Self {
        let config_hash = config_hash(cfg);
        ResultsRecord {
            run_id: format!("{subcommand}-{config_hash}"),
            subcommand: subcommand.to_string(),
            config_hash,
            metrics,
            timings: BTreeMap::new(),
        }
    }

    pub fn with_timing(mut self, stage: &str, seconds: f64) -> Self {
        self.timings.insert(stage.to_string(), seconds);
        self
    }
}

/// FNV-1a over the canonical TOML form of the config.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let text = cfg.to_toml();
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for byte in text.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

pub fn summary_path(out_dir: &Path, subcommand: &str) -> PathBuf {
    out_dir.join(format!("summary_{}.json", subcommand.replace(' ', "_")))
}

pub fn write_summary(out_dir: &Path, record: &ResultsRecord) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = summary_path(out_dir, &record.subcommand);
    let json = serde_json::to_string_pretty(record)
        .map_err(|e| Error::Format(format!("summary serialization: {e}")))?;
    std::fs::write(&path, json)?;
    Ok(path)
}

pub fn write_toml(out_dir: &Path, name: &str, value: &impl Serialize) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    let text =
        toml::to_string_pretty(value).map_err(|e| Error::Format(format!("{name}: {e}")))?;
    std::fs::write(&path, text)?;
    Ok(path)
}

/// Merge every `summary_*.json` under `out_dir` into one report file.
pub fn aggregate_reports(out_dir: &Path) -> Result<PathBuf> {
    let mut records: Vec<ResultsRecord> = Vec::new();
    let mut names: Vec<PathBuf> = std::fs::read_dir(out_dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("summary_") && n.ends_with(".json"))
        })
        .collect();
    names.sort();
    for path in names {
        let text = std::fs::read_to_string(&path)?;
        let record: ResultsRecord = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        records.push(record);
    }
    let path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(&records)
        .map_err(|e| Error::Format(format!("report serialization: {e}")))?;
    std::fs::write(&path, json)?;
    Ok(path)
}
