use std::io::Write;
use std::path::{Path, PathBuf};

use super::{Exchange, GatewayError};

/// Directory of exchanges keyed by prompt digest:
/// `<root>/<first two hex digits>/<digest>.json`.
#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let root = root.into();
        std::fs::create_dir_all(&root)
            .map_err(|e| GatewayError::Cache(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, digest: &str) -> PathBuf {
        let shard = digest.get(..2).unwrap_or("00");
        self.root.join(shard).join(format!("{digest}.json"))
    }

    pub fn get(&self, digest: &str) -> Option<Exchange> {
        let path = self.path_for(digest);
        let text = std::fs::read_to_string(&path).ok()?;
        match serde_json::from_str(&text) {
            Ok(ex) => Some(ex),
            Err(e) => {
                tracing::warn!(path = %path.display(), error = %e, "unreadable cache entry");
                None
            }
        }
    }

    /// Writes to a temporary file in the shard directory, then renames it
    /// into place.
    pub fn put(&self, ex: &Exchange) -> Result<(), GatewayError> {
        let path = self.path_for(&ex.prompt_digest);
        let dir = path.parent().expect("cache paths have a shard directory");
        let err = |e: std::io::Error| GatewayError::Cache(format!("{}: {e}", path.display()));
        std::fs::create_dir_all(dir).map_err(err)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
        let body = serde_json::to_vec_pretty(ex).expect("exchanges serialize");
        tmp.write_all(&body).map_err(err)?;
        tmp.persist(&path).map_err(|e| err(e.error))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path()).unwrap();
        let ex = Exchange {
            provider_id: "p".into(),
            model: "m".into(),
            prompt: "q".into(),
            response: "r\n  with  spacing".into(),
            prompt_digest: "abcdef".into(),
            input_tokens: 1,
            output_tokens: 4,
            estimated: true,
            latency: 0.0,
        };
        cache.put(&ex).unwrap();
        assert!(dir.path().join("ab").join("abcdef.json").is_file());
        assert_eq!(cache.get("abcdef").unwrap(), ex);
        assert!(cache.get("ffff").is_none());
    }
}
