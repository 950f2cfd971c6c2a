//! Exemplar mining: reasoning and fixing strategies elicited from samples
//! whose fix is known.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::{parse_diff, patch_locations};
use crate::error::PipelineError;
use crate::gateway::{sha256_hex, ProviderHandle};
use crate::model::{ExternalFunctions, NodeId};
use crate::prompts::{exemplar_prompt, SliceFields};
use crate::sample::{prepare, DatasetSample, PreparedSample};
use crate::scoping::{describe_nodes, render_slice, vulnerable_functions, VulnLine};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub sample_id: String,
    pub slice_text: String,
    pub cwe_ids: Vec<String>,
    pub vulnerable_lines: Vec<VulnLine>,
    /// External inputs as listed in the mining prompt.
    pub ei_text: String,
    pub root_cause: String,
    pub fixing_strategy: String,
    pub ground_truth_patch: String,
    pub provider_id: String,
    /// SHA-256 of the mining prompt.
    pub prompt_digest: String,
}

impl Exemplar {
    pub fn lines_text(&self) -> String {
        crate::scoping::lines_text(&self.vulnerable_lines)
    }

    pub fn slice_fields(&self) -> (String, String) {
        (self.cwe_ids.join(", "), self.lines_text())
    }

    /// Rebuilds the mining prompt from the stored fields.
    pub fn reconstruct_prompt(&self) -> String {
        let (cwe, lines) = self.slice_fields();
        exemplar_prompt(
            SliceFields {
                slice: &self.slice_text,
                cwe_ids: &cwe,
                lines: &lines,
            },
            &self.ground_truth_patch,
            &self.ei_text,
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoolError {
    #[error("sample `{0}` is already in the pool")]
    DuplicateSample(String),
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
}

/// Exemplars in insertion order, indexed by weakness class.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExemplarPool {
    exemplars: Vec<Exemplar>,
    by_cwe: BTreeMap<String, Vec<usize>>,
}

impl ExemplarPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, ex: Exemplar) -> Result<(), PoolError> {
        if self.exemplars.iter().any(|e| e.sample_id == ex.sample_id) {
            return Err(PoolError::DuplicateSample(ex.sample_id));
        }
        let i = self.exemplars.len();
        for c in &ex.cwe_ids {
            self.by_cwe.entry(c.clone()).or_default().push(i);
        }
        self.exemplars.push(ex);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Exemplar> {
        self.exemplars.iter()
    }

    pub fn cwe_ids(&self) -> impl Iterator<Item = &str> {
        self.by_cwe.keys().map(String::as_str)
    }

    /// Exemplars tagged with `cwe`, in pool order.
    pub fn with_cwe<'a>(&'a self, cwe: &str) -> impl Iterator<Item = &'a Exemplar> + 'a {
        self.by_cwe
            .get(cwe)
            .into_iter()
            .flatten()
            .map(move |&i| &self.exemplars[i])
    }

    pub fn to_jsonl(&self) -> String {
        self.exemplars
            .iter()
            .map(|e| serde_json::to_string(e).expect("exemplars serialize") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str, path: &str) -> Result<Self, PoolError> {
        let mut pool = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| PoolError::Format {
                path: path.to_string(),
                line: i + 1,
                message,
            };
            let ex: Exemplar = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            if ex.root_cause.trim().is_empty() || ex.fixing_strategy.trim().is_empty() {
                return Err(err("empty root cause or fixing strategy".into()));
            }
            pool.push(ex).map_err(|e| err(e.to_string()))?;
        }
        Ok(pool)
    }

    /// Writes the pool as JSON lines through a temporary file.
    pub fn save(&self, path: &Path) -> Result<(), PoolError> {
        let io = |e: std::io::Error| PoolError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        tmp.write_all(self.to_jsonl().as_bytes()).map_err(io)?;
        tmp.persist(path).map_err(|e| io(e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PoolError> {
        let text = std::fs::read_to_string(path).map_err(|e| PoolError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_jsonl(&text, &path.display().to_string())
    }
}

impl<'a> IntoIterator for &'a ExemplarPool {
    type Item = &'a Exemplar;
    type IntoIter = std::slice::Iter<'a, Exemplar>;

    fn into_iter(self) -> Self::IntoIter {
        self.iter()
    }
}

fn section_marker(name: &str) -> Regex {
    Regex::new(&format!(r"(?im)^[ \t#>*_-]*{name}[ \t]*:[*_]*")).expect("valid regex")
}

fn markers() -> &'static (Regex, Regex) {
    static RE: OnceLock<(Regex, Regex)> = OnceLock::new();
    RE.get_or_init(|| {
        (
            section_marker("root cause"),
            section_marker("fixing strategy"),
        )
    })
}

fn clean_section(s: &str) -> String {
    s.trim().trim_end_matches(['*', '#']).trim().to_string()
}

/// Splits a mining reply into its root-cause and fixing-strategy sections.
pub fn parse_sections(reply: &str) -> Result<(String, String), PipelineError> {
    let (rc_re, fs_re) = markers();
    let rc = rc_re.find(reply);
    let fs = fs_re.find(reply);
    let (rc, fs) = match (rc, fs) {
        (Some(r), Some(f)) => (r, f),
        (None, None) => {
            return Err(PipelineError::MalformedResponse(
                "no ROOT CAUSE or FIXING STRATEGY section".into(),
            ))
        }
        (None, _) => {
            return Err(PipelineError::MalformedResponse(
                "no ROOT CAUSE section".into(),
            ))
        }
        (_, None) => {
            return Err(PipelineError::MalformedResponse(
                "no FIXING STRATEGY section".into(),
            ))
        }
    };
    let (root, strategy) = if rc.start() < fs.start() {
        (&reply[rc.end()..fs.start()], &reply[fs.end()..])
    } else {
        (&reply[rc.end()..], &reply[fs.end()..rc.start()])
    };
    let (root, strategy) = (clean_section(root), clean_section(strategy));
    if root.is_empty() || strategy.is_empty() {
        return Err(PipelineError::MalformedResponse(
            "empty ROOT CAUSE or FIXING STRATEGY section".into(),
        ));
    }
    Ok((root, strategy))
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("sample `{sample_id}`: {source}")]
pub struct MiningError {
    pub sample_id: String,
    #[source]
    pub source: PipelineError,
}

/// Slice text and external-input listing shown to the miner: functions
/// holding a vulnerable statement plus those holding an external input
/// that reaches a line changed by the known fix.
pub fn exemplar_view(
    prepared: &PreparedSample,
    ground_truth: &str,
    default_file: &str,
) -> (String, String) {
    let PreparedSample {
        program,
        graph,
        slice,
        ..
    } = prepared;
    let locations: Vec<NodeId> = parse_diff(ground_truth)
        .map(|p| patch_locations(&p, default_file))
        .unwrap_or_default()
        .iter()
        .flat_map(|l| graph.nodes_at(&l.file, l.line))
        .map(|n| n.id.clone())
        .collect();
    let reaching: Vec<NodeId> = slice
        .ei
        .iter()
        .filter(|e| {
            graph
                .forward_reachable(e)
                .map(|f| locations.iter().any(|l| f.contains(l)))
                .unwrap_or(false)
        })
        .cloned()
        .collect();
    let chosen: Vec<NodeId> = if reaching.is_empty() {
        slice.ei.iter().cloned().collect()
    } else {
        reaching
    };
    let mut functions = vulnerable_functions(program, slice);
    functions.extend(
        chosen
            .iter()
            .filter_map(|id| program.node(id))
            .map(|n| n.function.clone()),
    );
    let rendered = render_slice(slice, program, &functions);
    (rendered.text, describe_nodes(program, &chosen))
}

pub fn mine_exemplar(
    sample: &DatasetSample,
    provider: &ProviderHandle,
    external: &ExternalFunctions,
) -> Result<Exemplar, MiningError> {
    let fail = |source: PipelineError| MiningError {
        sample_id: sample.id.clone(),
        source,
    };
    let patch = sample.ground_truth_patch.clone().ok_or_else(|| {
        fail(PipelineError::Config(
            "sample has no ground-truth patch".into(),
        ))
    })?;
    let prepared = prepare(sample, external, None).map_err(fail)?;
    let (slice_text, ei_text) = exemplar_view(&prepared, &patch, sample.default_file());
    let mut ex = Exemplar {
        sample_id: sample.id.clone(),
        slice_text,
        cwe_ids: sample.vuln.cwe_ids.clone(),
        vulnerable_lines: sample.vuln.vulnerable_lines.clone(),
        ei_text,
        root_cause: String::new(),
        fixing_strategy: String::new(),
        ground_truth_patch: patch,
        provider_id: provider.id().to_string(),
        prompt_digest: String::new(),
    };
    let prompt = ex.reconstruct_prompt();
    let reply = provider.complete(&prompt).map_err(|e| fail(e.into()))?;
    let (root, strategy) = parse_sections(&reply.response).map_err(fail)?;
    ex.root_cause = root;
    ex.fixing_strategy = strategy;
    ex.prompt_digest = sha256_hex(&prompt);
    Ok(ex)
}

/// Mines every sample. Results keep dataset order whatever the completion
/// order; failures are returned alongside the pool.
pub fn build_pool(
    dataset: &[DatasetSample],
    provider: &ProviderHandle,
    external: &ExternalFunctions,
    jobs: usize,
) -> (ExemplarPool, Vec<MiningError>) {
    let slots: Vec<Mutex<Option<Result<Exemplar, MiningError>>>> =
        dataset.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(sample) = dataset.get(i) else { break };
        let r = mine_exemplar(sample, provider, external);
        *slots[i].lock().expect("slot poisoned") = Some(r);
    };
    let jobs = jobs.clamp(1, dataset.len().max(1));
    if jobs == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(work);
            }
        });
    }

    let mut pool = ExemplarPool::new();
    let mut errors = Vec::new();
    for slot in slots {
        match slot
            .into_inner()
            .expect("slot poisoned")
            .expect("every sample is mined")
        {
            Ok(ex) => {
                let id = ex.sample_id.clone();
                if let Err(e) = pool.push(ex) {
                    errors.push(MiningError {
                        sample_id: id,
                        source: PipelineError::Config(e.to_string()),
                    });
                }
            }
            Err(e) => {
                tracing::warn!(error = %e, "mining failed");
                errors.push(e);
            }
        }
    }
    (pool, errors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(id: &str, cwe: &str) -> Exemplar {
        Exemplar {
            sample_id: id.into(),
            slice_text: "1: x\n".into(),
            cwe_ids: vec![cwe.into()],
            vulnerable_lines: vec![VulnLine {
                file: "a.c".into(),
                line: 1,
            }],
            ei_text: String::new(),
            root_cause: "rc".into(),
            fixing_strategy: "fs".into(),
            ground_truth_patch: "@@ -1 +1 @@\n-x\n+y\n".into(),
            provider_id: "p".into(),
            prompt_digest: String::new(),
        }
    }

    #[test]
    fn sections() {
        let (r, f) = parse_sections(
            "ROOT CAUSE:\nargv flows into str.\n\nFIXING STRATEGY: size the buffer.",
        )
        .unwrap();
        assert_eq!(
            (r.as_str(), f.as_str()),
            ("argv flows into str.", "size the buffer.")
        );
        let (r, f) = parse_sections("**Root Cause:** a\n## Fixing Strategy:\nb").unwrap();
        assert_eq!((r.as_str(), f.as_str()), ("a", "b"));
        assert!(matches!(
            parse_sections(""),
            Err(PipelineError::MalformedResponse(_))
        ));
        assert!(parse_sections("ROOT CAUSE: a").is_err());
        assert!(parse_sections("ROOT CAUSE:\nFIXING STRATEGY: b").is_err());
    }

    #[test]
    fn pool_round_trip_and_index() {
        let mut pool = ExemplarPool::new();
        pool.push(ex("b", "CWE-787")).unwrap();
        pool.push(ex("a", "CWE-125")).unwrap();
        pool.push(ex("c", "CWE-787")).unwrap();
        assert!(pool.push(ex("a", "CWE-1")).is_err());
        let back = ExemplarPool::from_jsonl(&pool.to_jsonl(), "p").unwrap();
        assert_eq!(back, pool);
        let ids: Vec<_> = back
            .with_cwe("CWE-787")
            .map(|e| e.sample_id.as_str())
            .collect();
        assert_eq!(ids, vec!["b", "c"]);
    }

    #[test]
    fn truncated_last_line_reports_its_number() {
        let mut pool = ExemplarPool::new();
        pool.push(ex("a", "CWE-787")).unwrap();
        pool.push(ex("b", "CWE-787")).unwrap();
        let text = pool.to_jsonl();
        let cut = &text[..text.len() - 20];
        match ExemplarPool::from_jsonl(cut, "p").unwrap_err() {
            PoolError::Format { line, .. } => assert_eq!(line, 2),
            e => panic!("{e:?}"),
        }
    }
}
