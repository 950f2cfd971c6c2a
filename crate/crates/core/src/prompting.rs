//! Root-cause generation with on-demand context expansion, exemplar
//! selection and candidate patch generation.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::diff::parse_diff;
use crate::error::PipelineError;
use crate::exemplar::{Exemplar, ExemplarPool};
use crate::gateway::{sha256_hex, ProviderHandle};
use crate::model::{CallGraph, Program};
use crate::prompts::{
    comparison_prompt, parse_verdict, patch_prompt, root_cause_prompt, ExemplarFields, SliceFields,
    Verdict,
};
use crate::sample::PreparedSample;
use crate::scoping::{render_slice, vulnerable_functions, RenderedSlice, VulnSpec};

/// Upper bound on selected exemplars.
pub const MAX_EXEMPLARS: usize = 8;
/// Upper bound on patches kept from one reply.
pub const MAX_PATCHES: usize = 5;
/// Default ceiling on root-cause prompts per sample.
pub const DEFAULT_MAX_ROUNDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootCause {
    pub text: String,
    /// Number of root-cause prompts sent.
    pub iterations: usize,
    pub functions_used: BTreeSet<String>,
    /// (prompt digest, response digest) per round.
    pub transcript: Vec<(String, String)>,
    /// The loop stopped on a context demand it could not satisfy.
    pub forced_final: bool,
    /// Slice as rendered in the last round.
    pub rendered: RenderedSlice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextDemand {
    /// Function names after caller placeholders are resolved.
    pub requested: Vec<String>,
    /// Names as written in the reply.
    pub raw: Vec<String>,
}

fn demand_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"\{\s*"?context_funcs"?\s*:\s*\[([^\]]*)\]\s*\}"#).expect("valid regex")
    })
}

/// Finds the first `{"context_funcs": [...]}` object in a reply. Names may
/// be quoted or bare; `CALLER_of_<f>` expands to every caller of `f`.
pub fn parse_context_demand(reply: &str, call_graph: &CallGraph) -> Option<ContextDemand> {
    let Some(caps) = demand_pattern().captures(reply) else {
        if reply.contains("context_funcs") {
            tracing::warn!("reply mentions context_funcs but holds no parseable demand");
        }
        return None;
    };
    let raw: Vec<String> = caps[1]
        .split(',')
        .map(|s| {
            s.trim()
                .trim_matches(|c| c == '"' || c == '\'')
                .trim()
                .to_string()
        })
        .filter(|s| !s.is_empty())
        .collect();
    let mut requested = Vec::new();
    for name in &raw {
        let expanded = match name.strip_prefix("CALLER_of_") {
            Some(callee) => {
                let callers = call_graph.callers_of(callee);
                if callers.is_empty() {
                    tracing::warn!(function = callee, "no known caller");
                }
                callers
            }
            None => vec![name.clone()],
        };
        for f in expanded {
            if !requested.contains(&f) {
                requested.push(f);
            }
        }
    }
    Some(ContextDemand { requested, raw })
}

fn fields<'a>(rendered: &'a RenderedSlice, cwe: &'a str, lines: &'a str) -> SliceFields<'a> {
    SliceFields {
        slice: &rendered.text,
        cwe_ids: cwe,
        lines,
    }
}

/// Asks for the root cause starting from the functions that hold the
/// vulnerable statements, adding demanded functions until the provider
/// answers without a demand, a demand adds nothing new, or `max_rounds`
/// prompts have been sent.
pub fn generate_root_cause(
    prepared: &PreparedSample,
    provider: &ProviderHandle,
    max_rounds: usize,
) -> Result<RootCause, PipelineError> {
    let program = &prepared.program;
    let call_graph = program.call_graph();
    let (cwe, lines) = (prepared.spec.cwe_text(), prepared.spec.lines_text());
    let mut functions = vulnerable_functions(program, &prepared.slice);
    let mut transcript = Vec::new();
    let max_rounds = max_rounds.max(1);
    loop {
        let rendered = render_slice(&prepared.slice, program, &functions);
        let prompt = root_cause_prompt(fields(&rendered, &cwe, &lines), &rendered.ei_text);
        let reply = provider.complete(&prompt)?;
        transcript.push((sha256_hex(&prompt), sha256_hex(&reply.response)));
        let finish = |forced_final: bool,
                      functions: BTreeSet<String>,
                      transcript: Vec<(String, String)>| RootCause {
            text: reply.response.trim().to_string(),
            iterations: transcript.len(),
            functions_used: functions,
            transcript,
            forced_final,
            rendered: rendered.clone(),
        };
        let Some(demand) = parse_context_demand(&reply.response, &call_graph) else {
            return Ok(finish(false, functions, transcript));
        };
        let mut grew = false;
        for f in &demand.requested {
            if functions.contains(f) {
                continue;
            }
            if program.function(f).is_none() {
                tracing::warn!(function = %f, "demanded function is not defined; skipped");
                continue;
            }
            functions.insert(f.clone());
            grew = true;
        }
        if !grew {
            tracing::warn!(
                round = transcript.len(),
                "context demand adds no function; using reply as final"
            );
            return Ok(finish(true, functions, transcript));
        }
        if transcript.len() >= max_rounds {
            tracing::warn!(max_rounds, "root-cause round ceiling reached");
            return Ok(finish(true, functions, transcript));
        }
    }
}

/// Compares the root cause with each pool exemplar in pool order and keeps
/// those judged similar, stopping at [`MAX_EXEMPLARS`]. With `cwe_filter`
/// only exemplars sharing a weakness class with `spec` are considered.
pub fn select_exemplars(
    root_cause: &RootCause,
    pool: &ExemplarPool,
    provider: &ProviderHandle,
    spec: &VulnSpec,
    cwe_filter: bool,
) -> Result<Vec<Exemplar>, PipelineError> {
    let mut chosen = Vec::new();
    for ex in pool {
        if chosen.len() == MAX_EXEMPLARS {
            break;
        }
        if cwe_filter && !ex.cwe_ids.iter().any(|c| spec.cwe_ids.contains(c)) {
            continue;
        }
        let reply = provider.complete(&comparison_prompt(&ex.root_cause, &root_cause.text))?;
        match parse_verdict(&reply.response) {
            Verdict::Yes => chosen.push(ex.clone()),
            Verdict::No => {}
            Verdict::Unparseable => {
                tracing::warn!(exemplar = %ex.sample_id, "unparseable similarity verdict counted as no")
            }
        }
    }
    Ok(chosen)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePatch {
    pub ordinal: u32,
    pub diff: String,
    /// The fenced block as it appeared in the reply.
    pub raw_block: String,
    pub prompt_digest: String,
}

/// Fenced blocks in order of appearance: (full block, body).
fn fenced_blocks(reply: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut lines = reply.lines().peekable();
    while let Some(line) = lines.next() {
        let Some(fence) = line.trim_start().strip_prefix("```") else {
            continue;
        };
        let _lang = fence.trim();
        let mut raw = vec![line];
        let mut body = Vec::new();
        let mut closed = false;
        for l in lines.by_ref() {
            raw.push(l);
            if l.trim_start().starts_with("```") {
                closed = true;
                break;
            }
            body.push(l);
        }
        if closed {
            out.push((raw.join("\n"), body.join("\n") + "\n"));
        }
    }
    out
}

/// Extracts candidate diffs whose hunks fall inside the functions shown in
/// the slice. Keeps the first [`MAX_PATCHES`].
pub fn parse_patches(
    reply: &str,
    program: &Program,
    rendered: &RenderedSlice,
    prompt_digest: &str,
) -> Result<Vec<CandidatePatch>, PipelineError> {
    let ranges: Vec<(&str, u32, u32)> = rendered
        .included_functions
        .iter()
        .filter_map(|f| program.function(f))
        .map(|f| (f.file.as_str(), f.first_line, f.last_line))
        .collect();
    let in_scope = |file: Option<&str>, line: usize| {
        ranges.iter().any(|(f, lo, hi)| {
            file.is_none_or(|p| {
                *f == p || f.ends_with(&format!("/{p}")) || p.ends_with(&format!("/{f}"))
            }) && (*lo as usize..=*hi as usize).contains(&line)
        })
    };
    let mut out = Vec::new();
    for (raw, body) in fenced_blocks(reply) {
        let Ok(patch) = parse_diff(&body) else {
            continue;
        };
        if patch.hunk_count() == 0 {
            continue;
        }
        let fits = patch.files.iter().all(|f| {
            f.hunks.iter().all(|h| {
                h.touched_lines()
                    .iter()
                    .all(|l| in_scope(f.path.as_deref(), *l))
            })
        });
        if !fits {
            tracing::warn!("patch block touches lines outside the shown functions; skipped");
            continue;
        }
        out.push(CandidatePatch {
            ordinal: out.len() as u32 + 1,
            diff: body,
            raw_block: raw,
            prompt_digest: prompt_digest.to_string(),
        });
    }
    match out.len() {
        0 => Err(PipelineError::NoPatches),
        n if n > MAX_PATCHES => {
            tracing::warn!(
                found = n,
                "more than {MAX_PATCHES} patches; keeping the first {MAX_PATCHES}"
            );
            out.truncate(MAX_PATCHES);
            Ok(out)
        }
        MAX_PATCHES => Ok(out),
        n => {
            tracing::warn!(found = n, "fewer than {MAX_PATCHES} patches");
            Ok(out)
        }
    }
}

/// Builds the few-shot patch prompt and parses the candidate patches.
pub fn generate_patches(
    exemplars: &[Exemplar],
    prepared: &PreparedSample,
    root_cause: &RootCause,
    provider: &ProviderHandle,
) -> Result<Vec<CandidatePatch>, PipelineError> {
    let shots: Vec<(String, String)> = exemplars.iter().map(Exemplar::slice_fields).collect();
    let exemplar_fields: Vec<ExemplarFields<'_>> = exemplars
        .iter()
        .zip(&shots)
        .map(|(e, (cwe, lines))| ExemplarFields {
            slice: SliceFields {
                slice: &e.slice_text,
                cwe_ids: cwe,
                lines,
            },
            root_cause: &e.root_cause,
            fixing_strategy: &e.fixing_strategy,
            patch: &e.ground_truth_patch,
        })
        .collect();
    let (cwe, lines) = (prepared.spec.cwe_text(), prepared.spec.lines_text());
    let rendered = &root_cause.rendered;
    let prompt = patch_prompt(
        &exemplar_fields,
        fields(rendered, &cwe, &lines),
        &root_cause.text,
    );
    let reply = provider.complete(&prompt)?;
    parse_patches(
        &reply.response,
        &prepared.program,
        rendered,
        &sha256_hex(&prompt),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cg() -> CallGraph {
        CallGraph::from_edges(&["m", "g", "n"], [("n", "g"), ("m", "g")])
    }

    #[test]
    fn demand_extraction() {
        let d = parse_context_demand(r#"I need more. {"context_funcs":["a","b"]} thanks"#, &cg())
            .unwrap();
        assert_eq!(d.requested, vec!["a", "b"]);
        assert!(parse_context_demand("The root cause is clear.", &cg()).is_none());
        let d = parse_context_demand(r#"{"context_funcs":[CALLER_of_g, g, "m"]}"#, &cg()).unwrap();
        assert_eq!(d.requested, vec!["m", "n", "g"]);
        assert_eq!(d.raw, vec!["CALLER_of_g", "g", "m"]);
        assert!(parse_context_demand(r#"{"context_funcs": "oops"}"#, &cg()).is_none());
    }

    #[test]
    fn fenced_block_scan() {
        let reply = "Patch 1:\n```diff\n@@ -1 +1 @@\n-a\n+b\n```\nprose\n```\nunclosed";
        let blocks = fenced_blocks(reply);
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].1, "@@ -1 +1 @@\n-a\n+b\n");
        assert!(blocks[0].0.starts_with("```diff"));
    }
}
