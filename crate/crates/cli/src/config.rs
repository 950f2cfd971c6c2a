//! Configuration file: providers, external functions and run defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;
use vulnpatch_core::gateway::{sha256_hex, Cache};
use vulnpatch_core::prompting::DEFAULT_MAX_ROUNDS;
use vulnpatch_core::{ExternalFunctions, ProviderConfig, ProviderHandle};

pub const CONFIG_ENV: &str = "APPATCH_CONFIG";

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawConfig {
    Providers(Vec<ProviderConfig>),
    Full(FileConfig),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    providers: Vec<ProviderConfig>,
    /// Extra external-input functions, added to the built-in list.
    #[serde(default)]
    external_functions: Vec<String>,
    /// Response cache directory, relative to the configuration file.
    #[serde(default)]
    cache_dir: Option<PathBuf>,
    #[serde(default)]
    max_rounds: Option<usize>,
    #[serde(default)]
    cwe_filter: Option<bool>,
    #[serde(default)]
    entry_function: Option<String>,
}

#[derive(Debug)]
pub struct Config {
    /// SHA-256 of the file contents; `None` without a file.
    pub digest: Option<String>,
    pub providers: BTreeMap<String, ProviderConfig>,
    pub external: ExternalFunctions,
    pub cache_dir: Option<PathBuf>,
    pub max_rounds: usize,
    pub cwe_filter: bool,
    pub entry_function: Option<String>,
    base_dir: PathBuf,
}

impl Config {
    /// Reads `path`, falling back to the environment variable. Without
    /// either the configuration is empty.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let path = path
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        let Some(path) = path else {
            return Ok(Self::from_file(FileConfig::default(), None, PathBuf::new()));
        };
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let raw: RawConfig = serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        let file = match raw {
            RawConfig::Providers(providers) => FileConfig {
                providers,
                ..FileConfig::default()
            },
            RawConfig::Full(f) => f,
        };
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut seen = BTreeMap::new();
        for p in &file.providers {
            if seen.insert(p.id.clone(), ()).is_some() {
                bail!("duplicate provider id `{}` in {}", p.id, path.display());
            }
        }
        Ok(Self::from_file(file, Some(sha256_hex(&text)), base))
    }

    fn from_file(file: FileConfig, digest: Option<String>, base_dir: PathBuf) -> Self {
        let mut external = ExternalFunctions::default();
        external.extend(file.external_functions);
        Self {
            digest,
            providers: file
                .providers
                .into_iter()
                .map(|p| (p.id.clone(), p))
                .collect(),
            external,
            cache_dir: file.cache_dir.map(|d| base_dir.join(d)),
            max_rounds: file.max_rounds.unwrap_or(DEFAULT_MAX_ROUNDS),
            cwe_filter: file.cwe_filter.unwrap_or(false),
            entry_function: file.entry_function,
            base_dir,
        }
    }

    /// Builds a handle for a configured provider, with the response cache
    /// attached when one is configured.
    pub fn provider(&self, id: &str) -> anyhow::Result<ProviderHandle> {
        let Some(cfg) = self.providers.get(id) else {
            let known: Vec<&str> = self.providers.keys().map(String::as_str).collect();
            bail!("unknown provider `{id}` (configured: {})", known.join(", "));
        };
        let handle = ProviderHandle::from_config(cfg.clone(), &self.base_dir)?;
        Ok(match &self.cache_dir {
            Some(dir) => handle.with_cache(Cache::new(dir.clone())?),
            None => handle,
        })
    }
}
