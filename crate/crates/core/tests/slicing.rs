use std::collections::BTreeSet;
use std::path::PathBuf;

use proptest::prelude::*;
use vulnpatch_core::model::{
    build_sdg, export_graph, identify_external_inputs, import_graph, parse_program,
    DependenceGraph, Edge, EdgeKind, ExternalInputSet, GraphDocument, InputReason, NodeKind,
};
use vulnpatch_core::scoping::{pair_slice, vulnerability_semantics};
use vulnpatch_core::{ExternalFunctions, NodeId, SourceFile, StatementNode, VulnLine, VulnSpec};

const KINDS: [EdgeKind; 4] = [
    EdgeKind::Data,
    EdgeKind::Control,
    EdgeKind::Call,
    EdgeKind::Param,
];

fn node(i: usize) -> StatementNode {
    StatementNode {
        id: NodeId(format!("r.c:{}:3", i + 1)),
        file: "r.c".into(),
        function: format!("g{}", i % 3),
        line: i as u32 + 1,
        col: 3,
        text: format!("x{i} = y;"),
        kind: NodeKind::Assign,
    }
}

fn graph(n: usize, edges: &[(usize, usize, usize)]) -> DependenceGraph {
    DependenceGraph::new(
        (0..n).map(node).collect(),
        edges
            .iter()
            .map(|&(a, b, k)| Edge::new(node(a).id, node(b).id, KINDS[k])),
    )
    .unwrap()
}

/// Reflexive transitive closure by Floyd-Warshall.
fn closure(n: usize, edges: &[(usize, usize, usize)]) -> Vec<Vec<bool>> {
    let mut r = vec![vec![false; n]; n];
    for (i, row) in r.iter_mut().enumerate() {
        row[i] = true;
    }
    for &(a, b, _) in edges {
        r[a][b] = true;
    }
    for k in 0..n {
        let via = r[k].clone();
        for row in r.iter_mut().filter(|row| row[k]) {
            for (cell, &reach) in row.iter_mut().zip(&via) {
                *cell |= reach;
            }
        }
    }
    r
}

/// Node count, (src, dst, kind) edges, vulnerable nodes, inputs.
type Instance = (usize, Vec<(usize, usize, usize)>, Vec<usize>, Vec<usize>);

fn instance() -> impl Strategy<Value = Instance> {
    (1usize..30).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec((0..n, 0..n, 0..4usize), 0..n * 3),
            prop::collection::vec(0..n, 1..4),
            prop::collection::vec(0..n, 0..4),
        )
    })
}

fn spec_for(sv: &[usize]) -> VulnSpec {
    VulnSpec::new(
        sv.iter()
            .map(|&s| VulnLine {
                file: "r.c".into(),
                line: s as u32 + 1,
            })
            .collect(),
        vec!["CWE-20".into()],
    )
    .unwrap()
}

proptest! {
    #[test]
    fn slice_matches_closure_on_cyclic_graphs((n, edges, sv, ei) in instance()) {
        let g = graph(n, &edges);
        let r = closure(n, &edges);
        let inputs = ExternalInputSet::new(ei.iter().map(|&e| (node(e).id, InputReason::ExternalCall)));
        let got = vulnerability_semantics(&g, &spec_for(&sv), &inputs).unwrap();

        let connected = ei.iter().any(|&e| sv.iter().any(|&s| r[e][s]));
        let want: BTreeSet<NodeId> = (0..n)
            .filter(|&v| {
                if connected {
                    sv.contains(&v) || ei.iter().any(|&e| sv.iter().any(|&s| r[e][v] && r[v][s]))
                } else {
                    sv.iter().any(|&s| r[v][s])
                }
            })
            .map(|v| node(v).id)
            .collect();
        prop_assert_eq!(got.fallback, !connected);
        prop_assert_eq!(&got.nodes, &want);
        let sv_ids: BTreeSet<NodeId> = sv.iter().map(|&s| node(s).id).collect();
        prop_assert!(sv_ids.is_subset(&got.nodes));
        for e in &got.ei {
            prop_assert!(got.nodes.contains(e));
        }
    }

    #[test]
    fn pair_slice_is_path_set((n, edges, sv, ei) in instance()) {
        let g = graph(n, &edges);
        let r = closure(n, &edges);
        let (s, e) = (sv[0], ei.first().copied().unwrap_or(0));
        let got = pair_slice(&g, &node(s).id, &node(e).id).unwrap();
        let want: BTreeSet<NodeId> = (0..n)
            .filter(|&v| r[e][s] && r[e][v] && r[v][s])
            .map(|v| node(v).id)
            .collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn interchange_round_trip((n, edges, _sv, _ei) in instance()) {
        let doc = export_graph(&graph(n, &edges));
        let back = GraphDocument::from_json(&doc.to_json()).unwrap();
        prop_assert_eq!(&back, &doc);
        let (_, imported) = import_graph(&back).unwrap();
        prop_assert_eq!(export_graph(&imported), doc);
    }
}

fn fixture(name: &str) -> SourceFile {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name);
    SourceFile::new(name, std::fs::read_to_string(path).unwrap())
}

#[test]
fn fixture_slice_survives_interchange() {
    let program = parse_program(&[fixture("jsi_like.c")])
        .unwrap()
        .with_entry(Some("Jsi_ValueToString"));
    let sdg = build_sdg(&program);
    let spec = VulnSpec::new(
        vec![VulnLine {
            file: "jsi_like.c".into(),
            line: 48,
        }],
        vec!["CWE-787".into()],
    )
    .unwrap();
    let external = ExternalFunctions::default();
    let direct = vulnerability_semantics(
        &sdg,
        &spec,
        &identify_external_inputs(&program, &sdg, &external),
    )
    .unwrap();
    assert!(!direct.fallback);

    let doc = GraphDocument::from_json(&export_graph(&sdg).to_json()).unwrap();
    let (imported, g2) = import_graph(&doc).unwrap();
    let imported = imported.with_entry(Some("Jsi_ValueToString"));
    let via = vulnerability_semantics(
        &g2,
        &spec,
        &identify_external_inputs(&imported, &g2, &external),
    )
    .unwrap();
    assert_eq!(direct.nodes, via.nodes);
    assert_eq!(direct.ei, via.ei);
}

#[test]
fn fixture_edges_stay_within_known_statements() {
    let program = parse_program(&[fixture("chain.c")]).unwrap();
    let sdg = build_sdg(&program);
    for e in sdg.edges() {
        let (s, d) = (sdg.node(&e.src).unwrap(), sdg.node(&e.dst).unwrap());
        match e.kind {
            // Intraprocedural edges never cross a function boundary.
            EdgeKind::Data | EdgeKind::Control => assert_eq!(s.function, d.function, "{e:?}"),
            EdgeKind::Call => assert_eq!(d.kind, NodeKind::Entry, "{e:?}"),
            EdgeKind::Param => {}
        }
    }
    // f0 calls f1 calls ... f11: each call reaches the next entry.
    for i in 0..11 {
        let entry = sdg
            .nodes()
            .iter()
            .find(|n| n.function == format!("f{}", i + 1) && n.kind == NodeKind::Entry)
            .unwrap();
        let callers: Vec<&str> = sdg
            .predecessors(&entry.id)
            .into_iter()
            .map(|id| sdg.node(id).unwrap().function.as_str())
            .collect();
        assert!(callers.contains(&format!("f{i}").as_str()), "{callers:?}");
    }
}
