//! Vulnerability semantics: the union of every path slice running from an
//! external input to a vulnerable statement, and its rendering as numbered
//! source text.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DependenceGraph, ExternalInputSet, ModelError, NodeId, NodeKind, Program};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScopingError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid vulnerability description: {0}")]
    InvalidSpec(String),
    #[error("vulnerable lines resolve to no statement: {}", join_lines(.0))]
    Unresolved(Vec<VulnLine>),
}

fn join_lines(lines: &[VulnLine]) -> String {
    lines
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VulnLine {
    pub file: String,
    pub line: u32,
}

impl fmt::Display for VulnLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

/// Vulnerable statements and the weakness classes they belong to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnSpec {
    pub vulnerable_lines: Vec<VulnLine>,
    pub cwe_ids: Vec<String>,
}

fn cwe_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^CWE-\d+$").expect("valid regex"))
}

impl VulnSpec {
    pub fn new(
        vulnerable_lines: Vec<VulnLine>,
        cwe_ids: Vec<String>,
    ) -> Result<Self, ScopingError> {
        let spec = Self {
            vulnerable_lines,
            cwe_ids,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ScopingError> {
        if self.vulnerable_lines.is_empty() {
            return Err(ScopingError::InvalidSpec("no vulnerable lines".into()));
        }
        if let Some(l) = self.vulnerable_lines.iter().find(|l| l.line == 0) {
            return Err(ScopingError::InvalidSpec(format!(
                "line numbers start at 1: {l}"
            )));
        }
        if let Some(bad) = self.cwe_ids.iter().find(|c| !cwe_pattern().is_match(c)) {
            return Err(ScopingError::InvalidSpec(format!(
                "`{bad}` is not a CWE identifier"
            )));
        }
        Ok(())
    }

    /// Vulnerable lines as shown in prompts: bare numbers when every line
    /// is in one file, `file:line` otherwise.
    pub fn lines_text(&self) -> String {
        lines_text(&self.vulnerable_lines)
    }

    pub fn cwe_text(&self) -> String {
        self.cwe_ids.join(", ")
    }
}

/// Bare line numbers when every line is in one file, `file:line`
/// otherwise; comma separated.
pub fn lines_text(lines: &[VulnLine]) -> String {
    let single = lines.windows(2).all(|w| w[0].file == w[1].file);
    lines
        .iter()
        .map(|l| {
            if single {
                l.line.to_string()
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Statements on some dependence path from `ei` to `sv`, both included.
/// Empty when `ei` does not reach `sv`.
pub fn pair_slice(
    graph: &DependenceGraph,
    sv: &NodeId,
    ei: &NodeId,
) -> Result<BTreeSet<NodeId>, ScopingError> {
    let s = graph.require(sv)?;
    let e = graph.require(ei)?;
    let fwd = graph.reach(&[e], true);
    if !fwd[s] {
        return Ok(BTreeSet::new());
    }
    let bwd = graph.reach(&[s], false);
    let both: Vec<bool> = fwd.iter().zip(&bwd).map(|(a, b)| *a && *b).collect();
    Ok(graph.collect(&both))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceResult {
    pub nodes: BTreeSet<NodeId>,
    pub sv: BTreeSet<NodeId>,
    pub ei: BTreeSet<NodeId>,
    /// Set when no external input reaches any vulnerable statement and the
    /// slice is the plain backward closure of the vulnerable statements.
    pub fallback: bool,
    /// The (sv, ei) pairs whose path slice contributed each node.
    #[serde(skip)]
    pub provenance: BTreeMap<NodeId, BTreeSet<(NodeId, NodeId)>>,
}

impl SliceResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("slice results serialize")
    }
}

/// Resolves every vulnerable line to the nodes it holds.
pub fn resolve_lines(
    graph: &DependenceGraph,
    spec: &VulnSpec,
) -> Result<BTreeSet<NodeId>, ScopingError> {
    let mut ids = BTreeSet::new();
    let mut unresolved = Vec::new();
    for l in &spec.vulnerable_lines {
        let found = graph.nodes_at(&l.file, l.line);
        if found.is_empty() {
            unresolved.push(l.clone());
        }
        ids.extend(found.into_iter().map(|n| n.id.clone()));
    }
    if unresolved.is_empty() {
        Ok(ids)
    } else {
        Err(ScopingError::Unresolved(unresolved))
    }
}

pub fn vulnerability_semantics(
    graph: &DependenceGraph,
    spec: &VulnSpec,
    ei: &ExternalInputSet,
) -> Result<SliceResult, ScopingError> {
    let sv_ids = resolve_lines(graph, spec)?;
    let sv_idx: Vec<usize> = sv_ids
        .iter()
        .map(|id| graph.require(id))
        .collect::<Result<_, _>>()?;
    let ei_idx: Vec<usize> = ei.ids().filter_map(|id| graph.index_of(id)).collect();

    let bwd: Vec<Vec<bool>> = sv_idx.iter().map(|&s| graph.reach(&[s], false)).collect();
    let mut marks = vec![false; graph.len()];
    let mut provenance: BTreeMap<NodeId, BTreeSet<(NodeId, NodeId)>> = BTreeMap::new();
    let mut connected = false;
    for &e in &ei_idx {
        let fwd = graph.reach(&[e], true);
        for (k, &s) in sv_idx.iter().enumerate() {
            if !fwd[s] {
                continue;
            }
            connected = true;
            let pair = (graph.id_at(s).clone(), graph.id_at(e).clone());
            for (i, m) in marks.iter_mut().enumerate() {
                if fwd[i] && bwd[k][i] {
                    *m = true;
                    provenance
                        .entry(graph.id_at(i).clone())
                        .or_default()
                        .insert(pair.clone());
                }
            }
        }
    }

    let fallback = !connected;
    if fallback {
        for b in &bwd {
            for (m, x) in marks.iter_mut().zip(b) {
                *m |= *x;
            }
        }
    } else {
        for &s in &sv_idx {
            marks[s] = true;
        }
    }

    let nodes = graph.collect(&marks);
    let ei_in = ei.ids().filter(|id| nodes.contains(*id)).cloned().collect();
    Ok(SliceResult {
        nodes,
        sv: sv_ids,
        ei: ei_in,
        fallback,
        provenance,
    })
}

/// Slice text handed to a provider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedSlice {
    pub text: String,
    pub included_functions: BTreeSet<String>,
    pub listed_ei: Vec<NodeId>,
    /// One-line description of each listed external input.
    pub ei_text: String,
    /// No slice node falls inside the requested functions.
    pub empty: bool,
}

/// Renders the slice nodes that belong to `functions`, ordered by file and
/// line, each line prefixed with its original number. Every function that
/// contributes a line is introduced by its signature.
pub fn render_slice(
    result: &SliceResult,
    program: &Program,
    functions: &BTreeSet<String>,
) -> RenderedSlice {
    // file -> line -> text
    let mut files: BTreeMap<&str, BTreeMap<u32, String>> = BTreeMap::new();
    let mut contributing = BTreeSet::new();
    for id in &result.nodes {
        let Some(n) = program.node(id) else { continue };
        if !functions.contains(&n.function) {
            continue;
        }
        contributing.insert(n.function.as_str());
        if matches!(n.kind, NodeKind::Entry | NodeKind::ParamDef) {
            continue;
        }
        let text = source_line(program, &n.file, n.line).unwrap_or_else(|| n.text.clone());
        files
            .entry(&n.file)
            .or_default()
            .entry(n.line)
            .or_insert(text);
    }
    for name in &contributing {
        let Some(f) = program.function(name) else {
            continue;
        };
        let Some(entry) = f.entry.as_ref().and_then(|e| program.node(e)) else {
            continue;
        };
        files
            .entry(&entry.file)
            .or_default()
            .insert(entry.line, entry.text.clone());
    }

    let multi_file = files.len() > 1;
    let mut text = String::new();
    for (file, lines) in &files {
        if multi_file {
            text.push_str(&format!("// {file}\n"));
        }
        for (line, src) in lines {
            text.push_str(&format!("{line}: {src}\n"));
        }
    }

    // Inputs outside the shown functions are still named when none is inside.
    let mut listed_ei: Vec<NodeId> = result
        .ei
        .iter()
        .filter(|id| {
            program
                .node(id)
                .is_some_and(|n| functions.contains(&n.function))
        })
        .cloned()
        .collect();
    if listed_ei.is_empty() {
        listed_ei = result.ei.iter().cloned().collect();
    }
    let ei_text = describe_nodes(program, &listed_ei);
    let empty = text.is_empty();
    if empty {
        tracing::warn!(functions = ?functions, "no slice statement falls inside the requested functions");
    }
    RenderedSlice {
        text,
        included_functions: functions.clone(),
        listed_ei,
        ei_text,
        empty,
    }
}

fn source_line(program: &Program, file: &str, line: u32) -> Option<String> {
    let src = program.source(file)?;
    src.lines()
        .nth(line.checked_sub(1)? as usize)
        .map(|l| l.trim_end().to_string())
        .filter(|l| !l.trim().is_empty())
}

/// `line: text` for each node in source order, joined by `; `. Files are
/// named only when the nodes span more than one.
pub fn describe_nodes(program: &Program, ids: &[NodeId]) -> String {
    let mut nodes: Vec<_> = ids.iter().filter_map(|id| program.node(id)).collect();
    nodes.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    let multi = nodes.windows(2).any(|w| w[0].file != w[1].file);
    nodes
        .iter()
        .map(|n| {
            let text = n.text.trim().trim_end_matches(';');
            if multi {
                format!("{}:{}: {}", n.file, n.line, text)
            } else {
                format!("{}: {}", n.line, text)
            }
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Functions holding at least one vulnerable node.
pub fn vulnerable_functions(program: &Program, result: &SliceResult) -> BTreeSet<String> {
    result
        .sv
        .iter()
        .filter_map(|id| program.node(id))
        .map(|n| n.function.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_sdg, identify_external_inputs, Edge, EdgeKind, ExternalFunctions, InputReason,
        SourceFile, StatementNode,
    };
    use proptest::prelude::*;

    fn node(i: usize) -> StatementNode {
        StatementNode {
            id: NodeId(format!("n{i}")),
            file: "g.c".into(),
            function: "f".into(),
            line: i as u32 + 1,
            col: 0,
            text: format!("s{i}"),
            kind: NodeKind::Assign,
        }
    }

    fn graph(n: usize, edges: &[(usize, usize)]) -> DependenceGraph {
        DependenceGraph::new(
            (0..n).map(node).collect(),
            edges
                .iter()
                .map(|(a, b)| Edge::new(format!("n{a}"), format!("n{b}"), EdgeKind::Data)),
        )
        .unwrap()
    }

    fn ids(xs: &[usize]) -> BTreeSet<NodeId> {
        xs.iter().map(|i| NodeId(format!("n{i}"))).collect()
    }

    fn spec(lines: &[usize]) -> VulnSpec {
        VulnSpec::new(
            lines
                .iter()
                .map(|i| VulnLine {
                    file: "g.c".into(),
                    line: *i as u32 + 1,
                })
                .collect(),
            vec!["CWE-787".into()],
        )
        .unwrap()
    }

    fn inputs(xs: &[usize]) -> ExternalInputSet {
        ExternalInputSet::new(
            xs.iter()
                .map(|i| (NodeId(format!("n{i}")), InputReason::ExternalCall)),
        )
    }

    #[test]
    fn zero_length_path() {
        let g = graph(1, &[]);
        assert_eq!(
            pair_slice(&g, &"n0".into(), &"n0".into()).unwrap(),
            ids(&[0])
        );
    }

    #[test]
    fn chain_excludes_side_input() {
        // A=0 -> B=1 -> C=2, D=3 -> B
        let g = graph(4, &[(0, 1), (1, 2), (3, 1)]);
        assert_eq!(
            pair_slice(&g, &"n2".into(), &"n0".into()).unwrap(),
            ids(&[0, 1, 2])
        );
        assert!(pair_slice(&g, &"n0".into(), &"n2".into())
            .unwrap()
            .is_empty());
        assert!(matches!(
            pair_slice(&g, &"zz".into(), &"n0".into()),
            Err(ScopingError::Model(ModelError::UnknownNode(_)))
        ));
    }

    #[test]
    fn empty_inputs_fall_back_to_backward_closure() {
        let g = graph(4, &[(0, 1), (1, 2), (3, 1)]);
        let r = vulnerability_semantics(&g, &spec(&[2]), &ExternalInputSet::default()).unwrap();
        assert!(r.fallback);
        assert_eq!(r.nodes, ids(&[0, 1, 2, 3]));
    }

    #[test]
    fn unresolved_lines_are_listed() {
        let g = graph(2, &[]);
        match vulnerability_semantics(&g, &spec(&[7, 9]), &inputs(&[0])) {
            Err(ScopingError::Unresolved(lines)) => assert_eq!(lines.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn spec_validation() {
        assert!(VulnSpec::new(vec![], vec![]).is_err());
        assert!(VulnSpec::new(
            vec![VulnLine {
                file: "a".into(),
                line: 1
            }],
            vec!["787".into()]
        )
        .is_err());
        let s = VulnSpec::new(
            vec![
                VulnLine {
                    file: "a.c".into(),
                    line: 3,
                },
                VulnLine {
                    file: "b.c".into(),
                    line: 4,
                },
            ],
            vec!["CWE-787".into(), "CWE-125".into()],
        )
        .unwrap();
        assert_eq!(s.lines_text(), "a.c:3, b.c:4");
        assert_eq!(s.cwe_text(), "CWE-787, CWE-125");
        assert_eq!(spec(&[4, 9]).lines_text(), "5, 10");
    }

    fn fixture() -> (Program, DependenceGraph) {
        let src = include_str!("../../../fixtures/jsi_like.c");
        let p = crate::model::parse_program(&[SourceFile::new("jsi_like.c", src)]).unwrap();
        let g = build_sdg(&p);
        (p, g)
    }

    #[test]
    fn fixture_slice_and_rendering() {
        let (p, g) = fixture();
        let ei = identify_external_inputs(&p, &g, &ExternalFunctions::default());
        let s = VulnSpec::new(
            vec![VulnLine {
                file: "jsi_like.c".into(),
                line: 48,
            }],
            vec!["CWE-787".into()],
        )
        .unwrap();
        let r = vulnerability_semantics(&g, &s, &ei).unwrap();
        assert!(!r.fallback);
        let lines: BTreeSet<u32> = r.nodes.iter().map(|id| p.nodes[id].line).collect();
        assert_eq!(lines, BTreeSet::from([8, 15, 16, 22, 23, 24, 28, 42, 48]));

        let only = render_slice(&r, &p, &vulnerable_functions(&p, &r));
        assert_eq!(
            only.text,
            "42: char *Jsi_Strcpy(char *str1, const char *str2)\n48:     strcpy(str1, str2);\n"
        );
        assert_eq!(
            only.listed_ei.len(),
            3,
            "inputs outside the view are still named"
        );

        let both: BTreeSet<String> = ["Jsi_Strcpy", "Jsi_ValueToString"].map(String::from).into();
        let grown = render_slice(&r, &p, &both);
        assert!(
            grown
                .text
                .lines()
                .filter(|l| only.text.contains(*l))
                .count()
                == only.text.lines().count()
        );
        assert_eq!(grown.listed_ei.len(), 3);
        assert_eq!(
            grown.ei_text,
            "8: int argc; 8: char **argv; 24: p = (char *)malloc(len)"
        );
    }

    #[test]
    fn render_outside_slice_is_flagged_empty() {
        let (p, g) = fixture();
        let ei = identify_external_inputs(&p, &g, &ExternalFunctions::default());
        let s = VulnSpec::new(
            vec![VulnLine {
                file: "jsi_like.c".into(),
                line: 48,
            }],
            vec![],
        )
        .unwrap();
        let r = vulnerability_semantics(&g, &s, &ei).unwrap();
        let out = render_slice(&r, &p, &BTreeSet::from(["Jsi_Strlen".to_string()]));
        assert!(out.empty && out.text.is_empty());
    }

    /// Node count, edges, vulnerable nodes, inputs, extra inputs.
    type Instance = (
        usize,
        Vec<(usize, usize)>,
        Vec<usize>,
        Vec<usize>,
        Vec<usize>,
    );

    fn arb_instance() -> impl Strategy<Value = Instance> {
        (2usize..25).prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec((0..n, 0..n), 0..60),
                prop::collection::vec(0..n, 1..4),
                prop::collection::vec(0..n, 0..4),
                prop::collection::vec(0..n, 0..3),
            )
        })
    }

    proptest! {
        #[test]
        fn monotone_in_inputs_and_targets((n, edges, sv, ei, extra) in arb_instance()) {
            let g = graph(n, &edges);
            let base = vulnerability_semantics(&g, &spec(&sv), &inputs(&ei)).unwrap();
            let mut more_ei = ei.clone();
            more_ei.extend(&extra);
            let wider = vulnerability_semantics(&g, &spec(&sv), &inputs(&more_ei)).unwrap();
            if !base.fallback {
                prop_assert!(base.nodes.is_subset(&wider.nodes));
            }
            let mut more_sv = sv.clone();
            more_sv.extend(&extra);
            let deeper = vulnerability_semantics(&g, &spec(&more_sv), &inputs(&ei)).unwrap();
            if base.fallback == deeper.fallback {
                prop_assert!(base.nodes.is_subset(&deeper.nodes));
            }
            prop_assert!(base.sv.is_subset(&base.nodes));
            prop_assert!(base.ei.is_subset(&base.nodes));
            prop_assert_eq!(&base, &vulnerability_semantics(&g, &spec(&sv), &inputs(&ei)).unwrap());
        }

        #[test]
        fn pair_slice_within_reachability((n, edges, sv, ei, _x) in arb_instance()) {
            prop_assume!(!ei.is_empty());
            let g = graph(n, &edges);
            let (s, e) = (NodeId(format!("n{}", sv[0])), NodeId(format!("n{}", ei[0])));
            let p = pair_slice(&g, &s, &e).unwrap();
            prop_assert!(p.is_subset(&g.backward_reachable(&s).unwrap()));
            prop_assert!(p.is_subset(&g.forward_reachable(&e).unwrap()));
        }
    }
}
