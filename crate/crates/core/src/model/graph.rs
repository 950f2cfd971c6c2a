use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{ModelError, NodeId, StatementNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Data,
    Control,
    Call,
    Param,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Data => "data",
            EdgeKind::Control => "control",
            EdgeKind::Call => "call",
            EdgeKind::Param => "param",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "data" => EdgeKind::Data,
            "control" => EdgeKind::Control,
            "call" => EdgeKind::Call,
            "param" => EdgeKind::Param,
            _ => return None,
        })
    }
}

/// `dst` depends on `src`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn new(src: impl Into<NodeId>, dst: impl Into<NodeId>, kind: EdgeKind) -> Self {
        Self {
            src: src.into(),
            dst: dst.into(),
            kind,
        }
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

/// Statement-level dependence graph. Immutable once built.
#[derive(Debug, Clone)]
pub struct DependenceGraph {
    nodes: Vec<StatementNode>,
    index: HashMap<NodeId, usize>,
    edges: BTreeSet<Edge>,
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
}

impl PartialEq for DependenceGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl Eq for DependenceGraph {}

impl DependenceGraph {
    /// Validates endpoints and uniqueness; duplicate edge triples collapse.
    pub fn new(
        nodes: Vec<StatementNode>,
        edges: impl IntoIterator<Item = Edge>,
    ) -> Result<Self, ModelError> {
        let mut nodes = nodes;
        nodes.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(ModelError::DuplicateNode(n.id.to_string()));
            }
        }
        let edges: BTreeSet<Edge> = edges.into_iter().collect();
        let mut succ = vec![Vec::new(); nodes.len()];
        let mut pred = vec![Vec::new(); nodes.len()];
        for e in &edges {
            let missing = |id: &NodeId| ModelError::DanglingEdge {
                src: e.src.to_string(),
                dst: e.dst.to_string(),
                missing: id.to_string(),
            };
            let s = *index.get(&e.src).ok_or_else(|| missing(&e.src))?;
            let d = *index.get(&e.dst).ok_or_else(|| missing(&e.dst))?;
            if !succ[s].contains(&d) {
                succ[s].push(d);
                pred[d].push(s);
            }
        }
        Ok(Self {
            nodes,
            index,
            edges,
            succ,
            pred,
        })
    }

    /// Nodes in canonical (file, line, column) order.
    pub fn nodes(&self) -> &[StatementNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn node(&self, id: &NodeId) -> Option<&StatementNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.index.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn require(&self, id: &NodeId) -> Result<usize, ModelError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| ModelError::UnknownNode(id.to_string()))
    }

    /// Nodes directly depended upon by `id`.
    pub fn predecessors(&self, id: &NodeId) -> Vec<&NodeId> {
        self.index
            .get(id)
            .map(|&i| self.pred[i].iter().map(|&p| &self.nodes[p].id).collect())
            .unwrap_or_default()
    }

    pub fn successors(&self, id: &NodeId) -> Vec<&NodeId> {
        self.index
            .get(id)
            .map(|&i| self.succ[i].iter().map(|&s| &self.nodes[s].id).collect())
            .unwrap_or_default()
    }

    /// Nodes at the given file and line. `file` also matches on a path
    /// suffix so that `a.c` finds `src/a.c`.
    pub fn nodes_at(&self, file: &str, line: u32) -> Vec<&StatementNode> {
        let exact: Vec<_> = self
            .nodes
            .iter()
            .filter(|n| n.line == line && n.file == file)
            .collect();
        if !exact.is_empty() {
            return exact;
        }
        self.nodes
            .iter()
            .filter(|n| n.line == line && path_suffix_matches(&n.file, file))
            .collect()
    }

    pub(crate) fn index_of(&self, id: &NodeId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub(crate) fn id_at(&self, i: usize) -> &NodeId {
        &self.nodes[i].id
    }

    /// Marks every node reachable from `starts` along dependence edges,
    /// following them forwards or backwards. Starts are included.
    pub(crate) fn reach(&self, starts: &[usize], forward: bool) -> Vec<bool> {
        let adj = if forward { &self.succ } else { &self.pred };
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = Vec::with_capacity(starts.len());
        for &s in starts {
            if !seen[s] {
                seen[s] = true;
                stack.push(s);
            }
        }
        while let Some(n) = stack.pop() {
            for &m in &adj[n] {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        seen
    }

    pub fn forward_reachable(&self, from: &NodeId) -> Result<BTreeSet<NodeId>, ModelError> {
        let i = self.require(from)?;
        Ok(self.collect(&self.reach(&[i], true)))
    }

    pub fn backward_reachable(&self, from: &NodeId) -> Result<BTreeSet<NodeId>, ModelError> {
        let i = self.require(from)?;
        Ok(self.collect(&self.reach(&[i], false)))
    }

    pub(crate) fn collect(&self, marks: &[bool]) -> BTreeSet<NodeId> {
        marks
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(i, _)| self.nodes[i].id.clone())
            .collect()
    }
}

fn path_suffix_matches(path: &str, suffix: &str) -> bool {
    path.ends_with(suffix) && {
        let head = &path[..path.len() - suffix.len()];
        head.is_empty() || head.ends_with('/') || head.ends_with('\\')
    } || suffix.ends_with(path) && {
        let head = &suffix[..suffix.len() - path.len()];
        head.ends_with('/') || head.ends_with('\\')
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NodeKind;

    fn node(id: &str, line: u32) -> StatementNode {
        StatementNode {
            id: id.into(),
            file: "src/a.c".into(),
            function: "f".into(),
            line,
            col: 0,
            text: String::new(),
            kind: NodeKind::Assign,
        }
    }

    #[test]
    fn dangling_edge_rejected() {
        let e = DependenceGraph::new(vec![node("a", 1)], [Edge::new("a", "zz", EdgeKind::Data)])
            .unwrap_err();
        assert!(matches!(e, ModelError::DanglingEdge { missing, .. } if missing == "zz"));
    }

    #[test]
    fn duplicate_triples_collapse() {
        let g = DependenceGraph::new(
            vec![node("a", 1), node("b", 2)],
            [
                Edge::new("a", "b", EdgeKind::Data),
                Edge::new("a", "b", EdgeKind::Data),
            ],
        )
        .unwrap();
        assert_eq!(g.edges().len(), 1);
    }

    #[test]
    fn nodes_at_matches_path_suffix() {
        let g = DependenceGraph::new(vec![node("a", 1), node("b", 2)], []).unwrap();
        assert_eq!(g.nodes_at("a.c", 2).len(), 1);
        assert_eq!(g.nodes_at("b.c", 2).len(), 0);
        assert_eq!(g.nodes_at("x/src/a.c", 1).len(), 1);
    }
}
