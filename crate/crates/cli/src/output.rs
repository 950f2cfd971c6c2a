//! Output files and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use vulnpatch_core::gateway::{accounting_report, sha256_hex, ProviderTotals};
use vulnpatch_core::Exchange;

/// Writes through a sibling temporary file so readers never see a partial
/// file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("cannot move into {}", path.display()))
}

pub fn json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

pub fn jsonl_string<T: Serialize>(rows: &[T]) -> String {
    rows.iter()
        .map(|r| serde_json::to_string(r).expect("serializable output") + "\n")
        .collect()
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_digest: Option<String>,
    /// Input path as given to its content digest.
    pub inputs: BTreeMap<String, String>,
    /// Output path to its content digest.
    pub outputs: BTreeMap<String, String>,
    /// Seconds of model latency per stage.
    pub timing: BTreeMap<String, f64>,
    pub accounting: BTreeMap<String, ProviderTotals>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub flags: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    pub fn new(command: &str, config_digest: Option<String>) -> Self {
        Self {
            command: command.to_string(),
            config_digest,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            timing: BTreeMap::new(),
            accounting: BTreeMap::new(),
            flags: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        let bytes =
            std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        self.inputs.insert(
            path.display().to_string(),
            sha256_hex(&String::from_utf8_lossy(&bytes)),
        );
        Ok(())
    }

    /// Writes an output and records its digest under `name`.
    pub fn output(&mut self, name: &str, path: &Path, text: &str) -> anyhow::Result<()> {
        write_atomic(path, text.as_bytes())?;
        self.outputs.insert(name.to_string(), sha256_hex(text));
        Ok(())
    }

    pub fn stage(&mut self, name: &str, exchanges: &[Exchange]) {
        *self.timing.entry(name.to_string()).or_default() +=
            exchanges.iter().map(|e| e.latency).sum::<f64>();
    }

    pub fn account(&mut self, exchanges: &[Exchange]) {
        self.accounting = accounting_report(exchanges);
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        write_atomic(path, json_string(self).as_bytes())
    }
}

/// `<file>.manifest.json` beside a single-file output.
pub fn manifest_beside(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
