//! Program model: mini-C frontend, per-function dependence facts, the
//! interprocedural dependence graph and its JSON interchange format.

mod external;
mod graph;
mod interchange;
mod lexer;
mod lower;
mod parse;
mod sdg;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use external::{identify_external_inputs, ExternalFunctions, ExternalInputSet, InputReason};
pub use graph::{DependenceGraph, Edge, EdgeKind};
pub use interchange::{export_graph, import_graph, GraphDocument};
pub use sdg::build_sdg;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("{file}:{line}:{col}: syntax error: {message}")]
    Syntax {
        file: String,
        line: u32,
        col: u32,
        message: String,
    },
    #[error("{file}:{line}:{col}: unsupported construct: {construct}")]
    Unsupported {
        file: String,
        line: u32,
        col: u32,
        construct: String,
    },
    #[error("function `{0}` is defined more than once")]
    DuplicateFunction(String),
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("edge {src} -> {dst} references missing node `{missing}`")]
    DanglingEdge {
        src: String,
        dst: String,
        missing: String,
    },
    #[error("unknown node id `{0}`")]
    UnknownNode(String),
}

/// Graph-wide node identifier. Frontend-produced ids have the shape
/// `file:line:col`; imported graphs may use any string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn at(file: &str, line: u32, col: u32) -> Self {
        NodeId(format!("{file}:{line}:{col}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Column encoded in a `file:line:col` id, if any.
    pub(crate) fn column(&self) -> Option<u32> {
        let mut parts = self.0.rsplitn(3, ':');
        let col = parts.next()?.parse().ok()?;
        parts.next()?.parse::<u32>().ok()?;
        parts.next()?;
        Some(col)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Assign,
    Call,
    Branch,
    LoopHeader,
    Return,
    Decl,
    ParamDef,
    Entry,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Assign => "assign",
            NodeKind::Call => "call",
            NodeKind::Branch => "branch",
            NodeKind::LoopHeader => "loop-header",
            NodeKind::Return => "return",
            NodeKind::Decl => "decl",
            NodeKind::ParamDef => "param-def",
            NodeKind::Entry => "entry",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "assign" => NodeKind::Assign,
            "call" => NodeKind::Call,
            "branch" => NodeKind::Branch,
            "loop-header" => NodeKind::LoopHeader,
            "return" => NodeKind::Return,
            "decl" => NodeKind::Decl,
            "param-def" => NodeKind::ParamDef,
            "entry" => NodeKind::Entry,
            _ => return None,
        })
    }

    pub fn governs(self) -> bool {
        matches!(self, NodeKind::Branch | NodeKind::LoopHeader)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementNode {
    pub id: NodeId,
    pub file: String,
    pub function: String,
    pub line: u32,
    /// Source column; 0 when unknown (imported graphs with opaque ids).
    #[serde(skip)]
    pub col: u32,
    pub text: String,
    pub kind: NodeKind,
}

impl StatementNode {
    /// Canonical ordering key: file, then line, then column, then id.
    pub fn order_key(&self) -> (&str, u32, u32, &str) {
        (&self.file, self.line, self.col, self.id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub path: String,
    pub text: String,
}

impl SourceFile {
    pub fn new(path: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Callsite {
    pub callee: String,
    pub node: NodeId,
}

/// Variables a node defines and uses, plus the calls it makes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeFacts {
    pub defs: BTreeSet<String>,
    pub uses: BTreeSet<String>,
    pub calls: Vec<CallFact>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallFact {
    /// Callee name; `None` for calls through an expression.
    pub callee: Option<String>,
    /// Variables read by each argument.
    pub args: Vec<BTreeSet<String>>,
    /// False when the call is an expression statement whose result is
    /// discarded.
    pub value_used: bool,
}

/// Lowered body of a parsed function. Absent for imported functions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FunctionBody {
    pub facts: BTreeMap<NodeId, NodeFacts>,
    /// Control-flow successors.
    pub cfg: BTreeMap<NodeId, Vec<NodeId>>,
    /// Innermost enclosing branch or loop header of each governed node.
    pub governor: BTreeMap<NodeId, NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDef {
    pub name: String,
    pub file: String,
    pub params: Vec<String>,
    /// Every node attributed to this function, in source order.
    pub statements: Vec<NodeId>,
    pub callsites: Vec<Callsite>,
    pub entry: Option<NodeId>,
    pub param_defs: Vec<NodeId>,
    pub first_line: u32,
    pub last_line: u32,
    pub body: Option<FunctionBody>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub files: Vec<SourceFile>,
    pub functions: Vec<FunctionDef>,
    pub nodes: BTreeMap<NodeId, StatementNode>,
    pub entry_function: Option<String>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn node(&self, id: &NodeId) -> Option<&StatementNode> {
        self.nodes.get(id)
    }

    pub fn source(&self, path: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|f| f.path == path)
            .map(|f| f.text.as_str())
    }

    pub fn call_graph(&self) -> CallGraph {
        CallGraph::new(self)
    }

    /// Overrides the entry function. Unknown names clear it.
    pub fn with_entry(mut self, name: Option<&str>) -> Self {
        self.entry_function = match name {
            Some(n) if self.function(n).is_some() => Some(n.to_string()),
            Some(_) => None,
            None => default_entry(&self.functions),
        };
        self
    }
}

/// `main` when defined, else the only function nobody calls.
pub(crate) fn default_entry(functions: &[FunctionDef]) -> Option<String> {
    if functions.iter().any(|f| f.name == "main") {
        return Some("main".into());
    }
    let called: BTreeSet<&str> = functions
        .iter()
        .flat_map(|f| f.callsites.iter().map(|c| c.callee.as_str()))
        .filter(|c| functions.iter().any(|f| f.name == *c))
        .collect();
    let mut roots = functions
        .iter()
        .filter(|f| !called.contains(f.name.as_str()));
    match (roots.next(), roots.next()) {
        (Some(f), None) => Some(f.name.clone()),
        _ => None,
    }
}

/// Caller/callee relation among the program's defined functions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallGraph {
    order: Vec<String>,
    callers: BTreeMap<String, BTreeSet<String>>,
    callees: BTreeMap<String, BTreeSet<String>>,
}

impl CallGraph {
    pub fn new(program: &Program) -> Self {
        let mut g = CallGraph {
            order: program.functions.iter().map(|f| f.name.clone()).collect(),
            ..Default::default()
        };
        for f in &program.functions {
            for c in &f.callsites {
                if program.function(&c.callee).is_some() {
                    g.add(&f.name, &c.callee);
                }
            }
        }
        g
    }

    /// Builds a call graph from explicit (caller, callee) pairs.
    pub fn from_edges<'a>(
        functions: &[&str],
        edges: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Self {
        let mut g = CallGraph {
            order: functions.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        };
        for (a, b) in edges {
            g.add(a, b);
        }
        g
    }

    fn add(&mut self, caller: &str, callee: &str) {
        self.callers
            .entry(callee.to_string())
            .or_default()
            .insert(caller.to_string());
        self.callees
            .entry(caller.to_string())
            .or_default()
            .insert(callee.to_string());
    }

    pub fn contains(&self, name: &str) -> bool {
        self.order.iter().any(|f| f == name)
    }

    /// Callers of `name` in function definition order.
    pub fn callers_of(&self, name: &str) -> Vec<String> {
        let Some(set) = self.callers.get(name) else {
            return Vec::new();
        };
        self.order
            .iter()
            .filter(|f| set.contains(*f))
            .cloned()
            .collect()
    }

    pub fn callees_of(&self, name: &str) -> Vec<String> {
        let Some(set) = self.callees.get(name) else {
            return Vec::new();
        };
        self.order
            .iter()
            .filter(|f| set.contains(*f))
            .cloned()
            .collect()
    }

    pub fn functions(&self) -> &[String] {
        &self.order
    }
}

/// Parses mini-C sources into a program model.
pub fn parse_program(sources: &[SourceFile]) -> Result<Program, ModelError> {
    let mut asts = Vec::new();
    for src in sources {
        let mut parser = parse::Parser::new(&src.path, &src.text)?;
        asts.extend(parser.parse_unit()?);
    }
    let mut seen = BTreeSet::new();
    for f in &asts {
        if !seen.insert(f.name.as_str()) {
            return Err(ModelError::DuplicateFunction(f.name.clone()));
        }
    }
    let (functions, nodes) = lower::lower_functions(sources, &asts);
    let entry_function = default_entry(&functions);
    Ok(Program {
        files: sources.to_vec(),
        functions,
        nodes,
        entry_function,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_id_column() {
        assert_eq!(NodeId::at("a/b.c", 3, 7).column(), Some(7));
        assert_eq!(NodeId::from("n17").column(), None);
    }

    #[test]
    fn minimal_program_has_entry_and_return() {
        let p = parse_program(&[SourceFile::new("f.c", "int f(){return 0;}")]).unwrap();
        assert_eq!(p.functions.len(), 1);
        let kinds: Vec<_> = p.nodes.values().map(|n| n.kind).collect();
        assert_eq!(kinds, vec![NodeKind::Entry, NodeKind::Return]);
        assert_eq!(p.entry_function.as_deref(), Some("f"));
    }

    #[test]
    fn duplicate_functions_rejected() {
        let e = parse_program(&[SourceFile::new(
            "f.c",
            "int f(){return 0;}\nint f(){return 1;}",
        )])
        .unwrap_err();
        assert_eq!(e, ModelError::DuplicateFunction("f".into()));
    }

    #[test]
    fn call_graph_callers_follow_definition_order() {
        let p = parse_program(&[SourceFile::new(
            "g.c",
            "int g(int x){return x;}\nint n(){return g(2);}\nint m(){return g(1);}\nint main(){m(); n(); return 0;}",
        )])
        .unwrap();
        let cg = p.call_graph();
        assert_eq!(cg.callers_of("g"), vec!["n", "m"]);
        assert_eq!(cg.callees_of("main"), vec!["n", "m"]);
        assert_eq!(p.entry_function.as_deref(), Some("main"));
    }
}
