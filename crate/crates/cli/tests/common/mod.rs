//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Runs the binary in `cwd` with the config variable cleared.
pub fn vulnpatch(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vulnpatch"))
        .args(args)
        .current_dir(cwd)
        .env_remove("APPATCH_CONFIG")
        .output()
        .expect("binary runs")
}

/// Relative path to file contents, for every file under `dir`.
pub fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).expect("readable dir").flatten() {
            let p = e.path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(
                    p.strip_prefix(root).expect("under root").to_path_buf(),
                    std::fs::read(&p).expect("file"),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Copies the fixture config into `dir` with absolute script paths and a
/// cache directory beside it.
pub fn scripted_config(dir: &Path) -> PathBuf {
    let fx = fixtures().canonicalize().expect("fixtures dir");
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fx.join("config.json")).expect("config"))
            .expect("json");
    for p in cfg["providers"].as_array_mut().expect("providers") {
        let script = fx.join(p["script"].as_str().expect("script"));
        p["script"] = script.display().to_string().into();
    }
    cfg["cache_dir"] = "cache".into();
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).expect("json")).expect("write config");
    path
}
