use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};
use vulnpatch_core::eval::{merge_labels, parse_labels, LabelSource};
use vulnpatch_core::exemplar::build_pool;
use vulnpatch_core::model::{
    build_sdg, identify_external_inputs, import_graph, parse_program, GraphDocument,
};
use vulnpatch_core::prompting::{generate_patches, generate_root_cause, select_exemplars};
use vulnpatch_core::sample::{load_dataset, load_sample, prepare};
use vulnpatch_core::scoping::{render_slice, vulnerability_semantics};
use vulnpatch_core::validator::validate_all;
use vulnpatch_core::{
    classify_syneq, compute_metrics, Category, Exchange, ExemplarPool, PatchLabel, ProviderHandle,
    SourceFile, VulnLine, VulnSpec,
};

use crate::config::Config;
use crate::output::{json_string, jsonl_string, manifest_beside, Manifest};
use crate::{EvalArgs, MineArgs, PatchArgs, SliceArgs};

/// Command failure, split by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments, missing inputs or configuration problems.
    Usage(anyhow::Error),
    /// A pipeline stage failed on valid inputs.
    Pipeline(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Pipeline(_) => 1,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Pipeline(e) => e,
        }
    }
}

trait Classify<T> {
    fn usage(self) -> Result<T, Failure>;
    fn pipeline(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn pipeline(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Pipeline(e.into()))
    }
}

type CmdResult = Result<(), Failure>;

fn parse_vuln(items: &[String], files: &[String]) -> anyhow::Result<Vec<VulnLine>> {
    items
        .iter()
        .map(|item| {
            let (file, line) = match item.rsplit_once(':') {
                Some((f, l)) => (f.to_string(), l),
                None => match files {
                    [only] => (only.clone(), item.as_str()),
                    _ => bail!("`{item}`: name the file as file:line when there are several files"),
                },
            };
            let line = line
                .trim()
                .parse()
                .with_context(|| format!("`{item}`: bad line number"))?;
            Ok(VulnLine { file, line })
        })
        .collect()
}

pub fn slice(cfg: &Config, args: &SliceArgs) -> CmdResult {
    let mut manifest = Manifest::new("slice", cfg.digest.clone());
    let (program, graph) = match &args.graph {
        Some(path) => {
            manifest.input(path).usage()?;
            let text = std::fs::read_to_string(path).usage()?;
            import_graph(&GraphDocument::from_json(&text).usage()?).usage()?
        }
        None => {
            let mut sources = Vec::new();
            for p in &args.sources {
                manifest.input(p).usage()?;
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read {}", p.display()))
                    .usage()?;
                sources.push(SourceFile::new(p.display().to_string(), text));
            }
            let program = parse_program(&sources).pipeline()?;
            let graph = build_sdg(&program);
            (program, graph)
        }
    };
    let entry = args.entry.as_deref().or(cfg.entry_function.as_deref());
    let program = if entry.is_some() {
        program.with_entry(entry)
    } else {
        program
    };
    let mut files: Vec<String> = program.nodes.values().map(|n| n.file.clone()).collect();
    files.dedup();
    let spec = VulnSpec::new(parse_vuln(&args.vuln, &files).usage()?, args.cwe.clone()).usage()?;
    let inputs = identify_external_inputs(&program, &graph, &cfg.external);
    let result = vulnerability_semantics(&graph, &spec, &inputs).pipeline()?;
    let functions: BTreeSet<String> = result
        .nodes
        .iter()
        .filter_map(|id| program.node(id))
        .map(|n| n.function.clone())
        .collect();
    let rendered = render_slice(&result, &program, &functions);
    let text_path = args.out.with_extension("txt");
    manifest
        .output("slice", &args.out, &result.to_json())
        .usage()?;
    manifest
        .output("rendered", &text_path, &rendered.text)
        .usage()?;
    if result.fallback {
        manifest.flags.insert("fallback".into(), true.into());
    }
    manifest.write(&manifest_beside(&args.out)).usage()
}

pub fn mine(cfg: &Config, args: &MineArgs) -> CmdResult {
    let mut manifest = Manifest::new("mine", cfg.digest.clone());
    let provider = cfg.provider(&args.provider).usage()?;
    manifest.input(&args.dataset).usage()?;
    let dataset = load_dataset(&args.dataset).usage()?;
    let (pool, failures) = build_pool(&dataset, &provider, &cfg.external, args.jobs.max(1));
    manifest
        .output("pool", &args.pool, &pool.to_jsonl())
        .usage()?;
    let exchanges = provider.take_exchanges();
    manifest.stage("mining", &exchanges);
    manifest.account(&exchanges);
    for f in &failures {
        eprintln!("mining failed for `{}`: {}", f.sample_id, f.source);
    }
    manifest.flags.insert(
        "failed_samples".into(),
        failures.iter().map(|f| f.sample_id.clone()).collect(),
    );
    manifest.write(&manifest_beside(&args.pool)).usage()?;
    match failures.len() {
        0 => Ok(()),
        n => Err(Failure::Pipeline(anyhow!(
            "{n} of {} samples failed",
            dataset.len()
        ))),
    }
}

/// Per-sample patch summary, read back by `eval`.
#[derive(Debug, Serialize, Deserialize)]
struct PatchSummary {
    sample_id: String,
    candidate_ordinals: Vec<u32>,
    retained_ordinals: Vec<u32>,
    validated: bool,
}

pub fn patch(cfg: &Config, args: &PatchArgs) -> CmdResult {
    let mut manifest = Manifest::new("patch", cfg.digest.clone());
    manifest.input(&args.sample).usage()?;
    manifest.input(&args.pool).usage()?;
    let sample = load_sample(&args.sample).usage()?;
    let pool = ExemplarPool::load(&args.pool).usage()?;
    let mut handles: BTreeMap<String, ProviderHandle> = BTreeMap::new();
    let validator_ids = args.validators.clone().unwrap_or_default();
    for id in std::iter::once(&args.provider).chain(&validator_ids) {
        if !handles.contains_key(id) {
            handles.insert(id.clone(), cfg.provider(id).usage()?);
        }
    }
    let provider = &handles[&args.provider];
    let mut transcript: Vec<Exchange> = Vec::new();
    let mut stage = |m: &mut Manifest, name: &str, exchanges: Vec<Exchange>| {
        m.stage(name, &exchanges);
        transcript.extend(exchanges);
    };

    let entry = args.entry.as_deref().or(cfg.entry_function.as_deref());
    let prepared = prepare(&sample, &cfg.external, entry).pipeline()?;
    let out = &args.out;
    manifest
        .output(
            "slice.json",
            &out.join("slice.json"),
            &prepared.slice.to_json(),
        )
        .usage()?;

    let max_rounds = args.max_rounds.unwrap_or(cfg.max_rounds);
    let root_cause = generate_root_cause(&prepared, provider, max_rounds).pipeline()?;
    stage(&mut manifest, "root_cause", provider.take_exchanges());
    manifest
        .output(
            "slice.txt",
            &out.join("slice.txt"),
            &root_cause.rendered.text,
        )
        .usage()?;
    manifest
        .output(
            "root_cause.json",
            &out.join("root_cause.json"),
            &json_string(&root_cause),
        )
        .usage()?;

    let cwe_filter = args.cwe_filter || cfg.cwe_filter;
    let exemplars =
        select_exemplars(&root_cause, &pool, provider, &prepared.spec, cwe_filter).pipeline()?;
    stage(
        &mut manifest,
        "exemplar_selection",
        provider.take_exchanges(),
    );
    manifest
        .output(
            "selected_exemplars.json",
            &out.join("selected_exemplars.json"),
            &json_string(&exemplars),
        )
        .usage()?;

    let candidates = generate_patches(&exemplars, &prepared, &root_cause, provider).pipeline()?;
    stage(&mut manifest, "patch_generation", provider.take_exchanges());
    manifest
        .output(
            "candidates.json",
            &out.join("candidates.json"),
            &json_string(&candidates),
        )
        .usage()?;
    for c in &candidates {
        let name = format!("patches/patch_{}.diff", c.ordinal);
        manifest.output(&name, &out.join(&name), &c.diff).usage()?;
    }

    let validated = args.validators.is_some();
    let retained: Vec<u32> = if validated {
        let validators: Vec<&ProviderHandle> =
            validator_ids.iter().map(|id| &handles[id]).collect();
        let verdicts = validate_all(
            &candidates,
            &validators,
            &root_cause.rendered,
            &prepared.spec,
        )
        .pipeline()?;
        let mut seen = BTreeSet::new();
        let exchanges: Vec<Exchange> = validator_ids
            .iter()
            .filter(|id| seen.insert(id.as_str()))
            .flat_map(|id| handles[id].take_exchanges())
            .collect();
        stage(&mut manifest, "validation", exchanges);
        manifest
            .output(
                "verdicts.json",
                &out.join("verdicts.json"),
                &json_string(&verdicts),
            )
            .usage()?;
        verdicts
            .iter()
            .filter(|v| v.retained)
            .map(|v| v.ordinal)
            .collect()
    } else {
        manifest.flags.insert("no_validation".into(), true.into());
        candidates.iter().map(|c| c.ordinal).collect()
    };
    let summary = PatchSummary {
        sample_id: sample.id.clone(),
        candidate_ordinals: candidates.iter().map(|c| c.ordinal).collect(),
        retained_ordinals: retained,
        validated,
    };
    manifest
        .output(
            "summary.json",
            &out.join("summary.json"),
            &json_string(&summary),
        )
        .usage()?;
    manifest
        .output(
            "transcript.jsonl",
            &out.join("transcript.jsonl"),
            &jsonl_string(&transcript),
        )
        .usage()?;
    manifest.account(&transcript);
    manifest.write(&out.join("manifest.json")).usage()
}

/// Patch output directories under `results`: the directory itself when it
/// holds a summary, otherwise its immediate subdirectories that do.
fn result_dirs(results: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if results.join("summary.json").is_file() {
        return Ok(vec![results.to_path_buf()]);
    }
    let entries =
        std::fs::read_dir(results).with_context(|| format!("cannot read {}", results.display()))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.join("summary.json").is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

pub fn eval(cfg: &Config, args: &EvalArgs) -> CmdResult {
    let mut manifest = Manifest::new("eval", cfg.digest.clone());
    manifest.input(&args.ground_truth).usage()?;
    let dataset = load_dataset(&args.ground_truth).usage()?;
    let mut generated: BTreeMap<String, BTreeSet<u32>> = dataset
        .iter()
        .map(|s| (s.id.clone(), BTreeSet::new()))
        .collect();
    let mut labels: Vec<PatchLabel> = Vec::new();
    for dir in result_dirs(&args.results).usage()? {
        let summary_path = dir.join("summary.json");
        let text = std::fs::read_to_string(&summary_path).usage()?;
        let summary: PatchSummary = serde_json::from_str(&text)
            .with_context(|| format!("invalid {}", summary_path.display()))
            .usage()?;
        let Some(sample) = dataset.iter().find(|s| s.id == summary.sample_id) else {
            return Err(Failure::Usage(anyhow!(
                "{} names sample `{}` which is not in the ground truth",
                summary_path.display(),
                summary.sample_id
            )));
        };
        let ords = generated.get_mut(&sample.id).expect("dataset sample");
        if !ords.is_empty() {
            return Err(Failure::Usage(anyhow!(
                "sample `{}` has more than one result directory",
                sample.id
            )));
        }
        ords.extend(summary.retained_ordinals.iter().copied());
        let (Some(gt), false) = (&sample.ground_truth_patch, sample.sources.is_empty()) else {
            tracing::warn!(sample = %sample.id, "no sources or ground truth; SynEq not judged");
            continue;
        };
        for &ordinal in &summary.retained_ordinals {
            let path = dir.join(format!("patches/patch_{ordinal}.diff"));
            let diff = std::fs::read_to_string(&path)
                .with_context(|| format!("cannot read {}", path.display()))
                .usage()?;
            let outcome = classify_syneq(&sample.sources, &diff, gt);
            if let Some(note) = &outcome.note {
                tracing::warn!(sample = %sample.id, ordinal, "{note}");
            }
            if outcome.equal {
                labels.push(PatchLabel {
                    sample_id: sample.id.clone(),
                    ordinal,
                    category: Category::SynEq,
                    source: LabelSource::Auto,
                });
            }
        }
    }
    if let Some(path) = &args.labels {
        manifest.input(path).usage()?;
        let text = std::fs::read_to_string(path).usage()?;
        let human = parse_labels(&text).usage()?;
        if human.iter().any(|l| l.source == LabelSource::Auto) {
            tracing::warn!("labels file contains auto labels; they are merged as given");
        }
        labels.extend(human);
    }
    let merged = merge_labels(&labels).usage()?;
    let report = compute_metrics(&generated, &merged).usage()?;
    manifest
        .output("report", &args.report, &json_string(&report))
        .usage()?;
    if let Some(csv) = &args.csv {
        manifest.output("csv", csv, &report.to_csv()).usage()?;
    }
    manifest.write(&manifest_beside(&args.report)).usage()
}
