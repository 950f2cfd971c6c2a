//! Synthetic inputs for the benchmarks.

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use vulnpatch_core::model::{
    DependenceGraph, Edge, EdgeKind, ExternalInputSet, InputReason, NodeKind,
};
use vulnpatch_core::{Category, NodeId, StatementNode, VulnLine, VulnSpec};

/// A graph with `n` statements and roughly `degree` out-edges each, plus a
/// spec naming the last statement and a handful of external inputs.
pub struct SliceInstance {
    pub graph: DependenceGraph,
    pub spec: VulnSpec,
    pub inputs: ExternalInputSet,
}

fn node(i: usize) -> StatementNode {
    StatementNode {
        id: NodeId::at("bench.c", i as u32 + 1, 5),
        file: "bench.c".into(),
        function: format!("fn{}", i / 40),
        line: i as u32 + 1,
        col: 5,
        text: format!("v{i} = v{};", i.saturating_sub(1)),
        kind: NodeKind::Assign,
    }
}

pub fn slice_instance(n: usize, degree: usize, seed: u64) -> SliceInstance {
    assert!(n > 1);
    let mut rng = StdRng::seed_from_u64(seed);
    let ids: Vec<NodeId> = (0..n).map(|i| node(i).id).collect();
    let mut edges = Vec::with_capacity(n * degree);
    for a in 0..n - 1 {
        for _ in 0..degree {
            // Mostly forward edges so that the sink is reachable, with a few back edges.
            let b = if rng.random_bool(0.9) {
                rng.random_range(a + 1..n)
            } else {
                rng.random_range(0..=a)
            };
            let kind = if rng.random_bool(0.7) {
                EdgeKind::Data
            } else {
                EdgeKind::Control
            };
            edges.push(Edge::new(ids[a].clone(), ids[b].clone(), kind));
        }
    }
    let graph = DependenceGraph::new((0..n).map(node).collect(), edges).expect("valid graph");
    let spec = VulnSpec::new(
        vec![VulnLine {
            file: "bench.c".into(),
            line: n as u32,
        }],
        vec!["CWE-787".into()],
    )
    .expect("valid spec");
    let inputs = ExternalInputSet::new((0..4).map(|_| {
        (
            ids[rng.random_range(0..n / 2)].clone(),
            InputReason::ExternalCall,
        )
    }));
    SliceInstance {
        graph,
        spec,
        inputs,
    }
}

/// A C-like file of `lines` lines sprinkled with comments and odd spacing.
pub fn noisy_source(lines: usize, seed: u64) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = String::new();
    for i in 0..lines {
        match rng.random_range(0..4) {
            0 => out.push_str(&format!("  x{i}  =  \"a // b\" ; // note {i}\n")),
            1 => out.push_str(&format!("/* block\n   {i} */ if (x{i}) {{\n")),
            2 => out.push_str("\n\t\n"),
            _ => out.push_str(&format!("\treturn   x{i};\n")),
        }
    }
    out
}

pub type Generated = BTreeMap<String, BTreeSet<u32>>;
pub type Labels = BTreeMap<(String, u32), Category>;

/// Up to five patches per sample with random labels on some of them.
pub fn metrics_input(samples: usize, seed: u64) -> (Generated, Labels) {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut generated = BTreeMap::new();
    let mut labels = BTreeMap::new();
    for s in 0..samples {
        let id = format!("sample-{s}");
        let k = rng.random_range(0..=5u32);
        for o in 1..=k {
            let category = match rng.random_range(0..6) {
                0 => Category::SynEq,
                1 => Category::SemEq,
                2 => Category::Plausible,
                3 => Category::Incorrect,
                _ => continue,
            };
            labels.insert((id.clone(), o), category);
        }
        generated.insert(id, (1..=k).collect());
    }
    (generated, labels)
}
