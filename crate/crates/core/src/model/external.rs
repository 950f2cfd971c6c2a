use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{DependenceGraph, NodeId, Program};

/// Names of library functions whose callsites introduce external data or
/// state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExternalFunctions(BTreeSet<String>);

impl Default for ExternalFunctions {
    fn default() -> Self {
        Self::new([
            "malloc",
            "calloc",
            "realloc",
            "free",
            "read",
            "fread",
            "fgets",
            "gets",
            "scanf",
            "fscanf",
            "recv",
            "recvfrom",
            "getenv",
            "socket_recv",
        ])
    }
}

impl ExternalFunctions {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        Self(names.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains(name)
    }

    pub fn extend<S: Into<String>>(&mut self, names: impl IntoIterator<Item = S>) {
        self.0.extend(names.into_iter().map(Into::into));
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputReason {
    ExternalCall,
    ProgramInputParam,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExternalInputSet(BTreeMap<NodeId, InputReason>);

impl ExternalInputSet {
    pub fn new(entries: impl IntoIterator<Item = (NodeId, InputReason)>) -> Self {
        Self(entries.into_iter().collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.0.contains_key(id)
    }

    pub fn reason(&self, id: &NodeId) -> Option<InputReason> {
        self.0.get(id).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = &NodeId> {
        self.0.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, InputReason)> {
        self.0.iter().map(|(k, v)| (k, *v))
    }

    /// Keeps only the listed ids.
    pub fn restrict(&self, keep: &BTreeSet<NodeId>) -> Self {
        Self(
            self.0
                .iter()
                .filter(|(k, _)| keep.contains(*k))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        )
    }
}

/// Callsites of external functions plus the param-def nodes of the entry
/// function. Ids absent from the graph are skipped.
pub fn identify_external_inputs(
    program: &Program,
    graph: &DependenceGraph,
    external_functions: &ExternalFunctions,
) -> ExternalInputSet {
    let mut set = BTreeMap::new();
    for f in &program.functions {
        for c in &f.callsites {
            if external_functions.contains(&c.callee) && graph.contains(&c.node) {
                set.insert(c.node.clone(), InputReason::ExternalCall);
            }
        }
    }
    if let Some(entry) = program
        .entry_function
        .as_deref()
        .and_then(|n| program.function(n))
    {
        for p in &entry.param_defs {
            if graph.contains(p) {
                set.entry(p.clone())
                    .or_insert(InputReason::ProgramInputParam);
            }
        }
    }
    ExternalInputSet(set)
}
