//! JSON graph-interchange format: `{"nodes": [...], "edges": [...]}`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    default_entry, Callsite, DependenceGraph, Edge, EdgeKind, FunctionDef, ModelError, NodeId,
    NodeKind, Program, SourceFile, StatementNode,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub nodes: Vec<StatementNode>,
    pub edges: Vec<Edge>,
}

fn schema(path: String, message: impl Into<String>) -> ModelError {
    ModelError::Schema {
        path,
        message: message.into(),
    }
}

fn field<'v>(
    obj: &'v serde_json::Map<String, Value>,
    path: &str,
    key: &str,
) -> Result<&'v Value, ModelError> {
    obj.get(key)
        .ok_or_else(|| schema(format!("{path}.{key}"), "missing field"))
}

fn string_field(
    obj: &serde_json::Map<String, Value>,
    path: &str,
    key: &str,
) -> Result<String, ModelError> {
    field(obj, path, key)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| schema(format!("{path}.{key}"), "expected a string"))
}

impl GraphDocument {
    /// Parses and schema-checks a document. Errors carry the JSON path of
    /// the offending field.
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| schema("$".into(), e.to_string()))?;
        Self::from_value(&value)
    }

    pub fn from_value(value: &Value) -> Result<Self, ModelError> {
        let top = value
            .as_object()
            .ok_or_else(|| schema("$".into(), "expected an object"))?;
        let nodes_v = field(top, "$", "nodes")?
            .as_array()
            .ok_or_else(|| schema("$.nodes".into(), "expected an array"))?;
        let edges_v = field(top, "$", "edges")?
            .as_array()
            .ok_or_else(|| schema("$.edges".into(), "expected an array"))?;

        let mut nodes = Vec::with_capacity(nodes_v.len());
        for (i, n) in nodes_v.iter().enumerate() {
            let path = format!("$.nodes[{i}]");
            let obj = n
                .as_object()
                .ok_or_else(|| schema(path.clone(), "expected an object"))?;
            let id = string_field(obj, &path, "id")?;
            if id.is_empty() {
                return Err(schema(format!("{path}.id"), "empty id"));
            }
            let line = field(obj, &path, "line")?
                .as_u64()
                .filter(|l| *l >= 1 && *l <= u32::MAX as u64)
                .ok_or_else(|| schema(format!("{path}.line"), "expected a positive integer"))?;
            let kind_s = string_field(obj, &path, "kind")?;
            let kind = NodeKind::parse(&kind_s).ok_or_else(|| {
                schema(
                    format!("{path}.kind"),
                    format!("unknown node kind `{kind_s}`"),
                )
            })?;
            let id = NodeId(id);
            nodes.push(StatementNode {
                col: id.column().unwrap_or(0),
                id,
                file: string_field(obj, &path, "file")?,
                function: string_field(obj, &path, "function")?,
                line: line as u32,
                text: string_field(obj, &path, "text")?,
                kind,
            });
        }

        let mut edges = Vec::with_capacity(edges_v.len());
        for (i, e) in edges_v.iter().enumerate() {
            let path = format!("$.edges[{i}]");
            let obj = e
                .as_object()
                .ok_or_else(|| schema(path.clone(), "expected an object"))?;
            let kind_s = string_field(obj, &path, "kind")?;
            let kind = EdgeKind::parse(&kind_s).ok_or_else(|| {
                schema(
                    format!("{path}.kind"),
                    format!("unknown edge kind `{kind_s}`"),
                )
            })?;
            edges.push(Edge::new(
                string_field(obj, &path, "src")?,
                string_field(obj, &path, "dst")?,
                kind,
            ));
        }
        Ok(GraphDocument { nodes, edges })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph documents serialize")
    }
}

/// Exports a graph in canonical node order and sorted edge order.
pub fn export_graph(graph: &DependenceGraph) -> GraphDocument {
    GraphDocument {
        nodes: graph.nodes().to_vec(),
        edges: graph.edges().iter().cloned().collect(),
    }
}

fn call_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"([A-Za-z_][A-Za-z0-9_]*)\s*\(").expect("valid regex"))
}

fn called_names(text: &str) -> Vec<String> {
    call_pattern()
        .captures_iter(text)
        .map(|c| c[1].to_string())
        .filter(|n| {
            !matches!(
                n.as_str(),
                "if" | "while" | "for" | "return" | "sizeof" | "switch"
            )
        })
        .collect()
}

fn param_name(text: &str) -> String {
    text.rsplit(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .find(|s| !s.is_empty() && !s.chars().all(|c| c.is_ascii_digit()))
        .unwrap_or(text)
        .to_string()
}

/// Imports a conforming document as a graph plus a program model derived
/// from node attributes. Imported functions carry no lowered body.
pub fn import_graph(doc: &GraphDocument) -> Result<(Program, DependenceGraph), ModelError> {
    let graph = DependenceGraph::new(doc.nodes.clone(), doc.edges.iter().cloned())?;

    let mut order: Vec<String> = Vec::new();
    let mut by_fn: BTreeMap<&str, Vec<&StatementNode>> = BTreeMap::new();
    for n in graph.nodes() {
        if !by_fn.contains_key(n.function.as_str()) {
            order.push(n.function.clone());
        }
        by_fn.entry(&n.function).or_default().push(n);
    }

    let mut functions = Vec::with_capacity(order.len());
    for name in &order {
        let members = &by_fn[name.as_str()];
        let entry = members
            .iter()
            .find(|n| n.kind == NodeKind::Entry)
            .map(|n| n.id.clone());
        let param_nodes: Vec<_> = members
            .iter()
            .filter(|n| n.kind == NodeKind::ParamDef)
            .collect();
        let mut callsites = Vec::new();
        let mut seen = BTreeSet::new();
        for n in members
            .iter()
            .filter(|n| !matches!(n.kind, NodeKind::Entry | NodeKind::ParamDef))
        {
            for callee in called_names(&n.text) {
                if seen.insert((callee.clone(), n.id.clone())) {
                    callsites.push(Callsite {
                        callee,
                        node: n.id.clone(),
                    });
                }
            }
            for e in graph
                .edges()
                .iter()
                .filter(|e| e.kind == EdgeKind::Call && e.src == n.id)
            {
                let callee = graph
                    .node(&e.dst)
                    .map(|d| d.function.clone())
                    .unwrap_or_default();
                if seen.insert((callee.clone(), n.id.clone())) {
                    callsites.push(Callsite {
                        callee,
                        node: n.id.clone(),
                    });
                }
            }
        }
        functions.push(FunctionDef {
            name: name.clone(),
            file: members[0].file.clone(),
            params: param_nodes.iter().map(|n| param_name(&n.text)).collect(),
            statements: members.iter().map(|n| n.id.clone()).collect(),
            callsites,
            entry,
            param_defs: param_nodes.iter().map(|n| n.id.clone()).collect(),
            first_line: members.iter().map(|n| n.line).min().unwrap_or(1),
            last_line: members.iter().map(|n| n.line).max().unwrap_or(1),
            body: None,
        });
    }

    let files: BTreeSet<&str> = graph.nodes().iter().map(|n| n.file.as_str()).collect();
    let entry_function = default_entry(&functions);
    let program = Program {
        files: files.into_iter().map(|f| SourceFile::new(f, "")).collect(),
        functions,
        nodes: graph
            .nodes()
            .iter()
            .map(|n| (n.id.clone(), n.clone()))
            .collect(),
        entry_function,
    };
    Ok((program, graph))
}
