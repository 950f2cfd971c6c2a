//! Dataset samples and their analysed form.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::apply_patch;
use crate::error::PipelineError;
use crate::model::{
    build_sdg, identify_external_inputs, import_graph, parse_program, DependenceGraph,
    ExternalFunctions, ExternalInputSet, GraphDocument, Program, SourceFile,
};
use crate::scoping::{vulnerability_semantics, SliceResult, VulnSpec};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SampleError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
}

/// A vulnerable program with its location, weakness classes and, for
/// training samples, the known fix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSample {
    pub id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<SourceFile>,
    /// Graph-interchange document used instead of sources.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<PathBuf>,
    pub vuln: VulnSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_patch: Option<String>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub provenance: serde_json::Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    path: String,
    #[serde(default)]
    text: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSample {
    id: String,
    #[serde(default)]
    sources: Vec<RawSource>,
    #[serde(default)]
    graph: Option<PathBuf>,
    vuln: VulnSpec,
    #[serde(default)]
    ground_truth_patch: Option<String>,
    #[serde(default)]
    provenance: serde_json::Value,
}

impl RawSample {
    /// Reads sources given only by path and anchors the graph path at
    /// `base`.
    fn resolve(self, base: &Path) -> Result<DatasetSample, String> {
        let mut sources = Vec::with_capacity(self.sources.len());
        for s in self.sources {
            let text = match s.text {
                Some(t) => t,
                None => std::fs::read_to_string(base.join(&s.path))
                    .map_err(|e| format!("source {}: {e}", base.join(&s.path).display()))?,
            };
            sources.push(SourceFile::new(s.path, text));
        }
        if sources.is_empty() && self.graph.is_none() {
            return Err("sample has neither sources nor a graph".into());
        }
        self.vuln.validate().map_err(|e| e.to_string())?;
        let sample = DatasetSample {
            id: self.id,
            sources,
            graph: self.graph.map(|g| base.join(g)),
            vuln: self.vuln,
            ground_truth_patch: self.ground_truth_patch,
            provenance: self.provenance,
        };
        sample.check_ground_truth()?;
        Ok(sample)
    }
}

impl DatasetSample {
    fn check_ground_truth(&self) -> Result<(), String> {
        match &self.ground_truth_patch {
            Some(p) if !self.sources.is_empty() => apply_patch(&self.sources, p)
                .map(|_| ())
                .map_err(|e| format!("ground-truth patch of `{}` does not apply: {e}", self.id)),
            _ => Ok(()),
        }
    }

    /// Parses one sample; relative paths resolve against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self, String> {
        let raw: RawSample = serde_json::from_str(text).map_err(|e| e.to_string())?;
        raw.resolve(base)
    }

    /// File used for headerless diffs: the first vulnerable line's file.
    pub fn default_file(&self) -> &str {
        self.vuln
            .vulnerable_lines
            .first()
            .map(|l| l.file.as_str())
            .or_else(|| self.sources.first().map(|s| s.path.as_str()))
            .unwrap_or("")
    }
}

fn base_of(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn load_sample(path: &Path) -> Result<DatasetSample, SampleError> {
    let text = std::fs::read_to_string(path).map_err(|e| SampleError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    DatasetSample::from_json(&text, &base_of(path)).map_err(|message| SampleError::Format {
        path: path.display().to_string(),
        line: 1,
        message,
    })
}

/// Reads a JSON-lines dataset. Blank lines are skipped; ids must be unique
/// and every ground-truth patch must apply to its sources.
pub fn load_dataset(path: &Path) -> Result<Vec<DatasetSample>, SampleError> {
    let text = std::fs::read_to_string(path).map_err(|e| SampleError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let base = base_of(path);
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| SampleError::Format {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        let sample = DatasetSample::from_json(line, &base).map_err(err)?;
        if !ids.insert(sample.id.clone()) {
            return Err(err(format!("duplicate sample id `{}`", sample.id)));
        }
        out.push(sample);
    }
    Ok(out)
}

/// A sample with its program model, dependence graph, external inputs and
/// vulnerability slice.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub sample_id: String,
    pub program: Program,
    pub graph: DependenceGraph,
    pub spec: VulnSpec,
    pub inputs: ExternalInputSet,
    pub slice: SliceResult,
}

pub fn prepare(
    sample: &DatasetSample,
    external: &ExternalFunctions,
    entry_function: Option<&str>,
) -> Result<PreparedSample, PipelineError> {
    let (program, graph) = match &sample.graph {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                PipelineError::Config(format!("cannot read graph {}: {e}", path.display()))
            })?;
            import_graph(&GraphDocument::from_json(&text)?)?
        }
        None => {
            let program = parse_program(&sample.sources)?;
            let graph = build_sdg(&program);
            (program, graph)
        }
    };
    let program = match entry_function {
        Some(e) => program.with_entry(Some(e)),
        None => program,
    };
    let inputs = identify_external_inputs(&program, &graph, external);
    let slice = vulnerability_semantics(&graph, &sample.vuln, &inputs)?;
    Ok(PreparedSample {
        sample_id: sample.id.clone(),
        program,
        graph,
        spec: sample.vuln.clone(),
        inputs,
        slice,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_line_errors_and_patch_check() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.c"), "int f()\n{\n  return 0;\n}\n").unwrap();
        let good = r#"{"id":"s1","sources":[{"path":"a.c"}],"vuln":{"vulnerable_lines":[{"file":"a.c","line":3}],"cwe_ids":["CWE-787"]},"ground_truth_patch":"@@ -3 +3 @@\n-  return 0;\n+  return 1;\n"}"#;
        let bad_patch = good
            .replace("s1", "s2")
            .replace("return 0;\\n+", "return 9;\\n+");
        let path = dir.path().join("d.jsonl");
        std::fs::write(&path, format!("{good}\n\n{bad_patch}\n")).unwrap();
        match load_dataset(&path).unwrap_err() {
            SampleError::Format { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("does not apply"), "{message}");
            }
            e => panic!("{e:?}"),
        }
        std::fs::write(&path, format!("{good}\n{good}\n")).unwrap();
        assert!(matches!(
            load_dataset(&path),
            Err(SampleError::Format { line: 2, .. })
        ));
        std::fs::write(&path, format!("{good}\n")).unwrap();
        let ds = load_dataset(&path).unwrap();
        assert_eq!(ds[0].sources[0].text.lines().count(), 4);
    }
}
