//! System dependence graph construction.
//!
//! Data edges come from reaching definitions over each function's CFG,
//! control edges from the innermost enclosing branch or loop header. Each
//! resolved callsite gets a call edge to the callee entry and param edges
//! into the callee's param-def nodes, both from the callsite itself and
//! from the statements defining the argument variables. Callee return
//! statements feed the callsite through param edges when the call's value
//! is consumed.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{DependenceGraph, Edge, EdgeKind, FunctionBody, NodeId, NodeKind, Program};

type Defs = BTreeSet<(String, NodeId)>;

/// Reaching definitions at the entry of every node of one function.
pub(crate) fn reaching_definitions(body: &FunctionBody) -> BTreeMap<NodeId, Defs> {
    let mut preds: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    for (n, succs) in &body.cfg {
        preds.entry(n).or_default();
        for s in succs {
            preds.entry(s).or_default().push(n);
        }
    }
    let mut inn: BTreeMap<NodeId, Defs> = BTreeMap::new();
    let mut out: BTreeMap<NodeId, Defs> = BTreeMap::new();
    let mut work: VecDeque<&NodeId> = body.cfg.keys().collect();
    while let Some(n) = work.pop_front() {
        let mut input = Defs::new();
        for p in preds.get(n).into_iter().flatten() {
            if let Some(o) = out.get(*p) {
                input.extend(o.iter().cloned());
            }
        }
        let facts = &body.facts[n];
        let mut output: Defs = input
            .iter()
            .filter(|(v, _)| !facts.defs.contains(v))
            .cloned()
            .collect();
        output.extend(facts.defs.iter().map(|v| (v.clone(), n.clone())));
        inn.insert(n.clone(), input);
        if out.get(n) != Some(&output) {
            out.insert(n.clone(), output);
            for s in &body.cfg[n] {
                work.push_back(s);
            }
        }
    }
    inn
}

/// Builds the interprocedural dependence graph of a parsed program.
pub fn build_sdg(program: &Program) -> DependenceGraph {
    let mut edges = BTreeSet::new();
    let mut reaching = BTreeMap::new();

    for f in &program.functions {
        let Some(body) = &f.body else { continue };
        let rd = reaching_definitions(body);
        for (n, facts) in &body.facts {
            for (var, d) in &rd[n] {
                if facts.uses.contains(var) && d != n {
                    edges.insert(Edge::new(d.clone(), n.clone(), EdgeKind::Data));
                }
            }
        }
        for (n, g) in &body.governor {
            edges.insert(Edge::new(g.clone(), n.clone(), EdgeKind::Control));
        }
        reaching.insert(f.name.as_str(), rd);
    }

    for f in &program.functions {
        let Some(body) = &f.body else { continue };
        let rd = &reaching[f.name.as_str()];
        for (site, facts) in &body.facts {
            for call in &facts.calls {
                let Some(callee) = call.callee.as_deref().and_then(|c| program.function(c)) else {
                    continue;
                };
                if let Some(entry) = &callee.entry {
                    edges.insert(Edge::new(site.clone(), entry.clone(), EdgeKind::Call));
                }
                for (arg, formal) in call.args.iter().zip(&callee.param_defs) {
                    edges.insert(Edge::new(site.clone(), formal.clone(), EdgeKind::Param));
                    for (var, d) in &rd[site] {
                        if arg.contains(var) {
                            edges.insert(Edge::new(d.clone(), formal.clone(), EdgeKind::Param));
                        }
                    }
                }
                if !call.value_used {
                    continue;
                }
                for r in &callee.statements {
                    if program.nodes[r].kind == NodeKind::Return {
                        edges.insert(Edge::new(r.clone(), site.clone(), EdgeKind::Param));
                    }
                }
            }
        }
    }

    DependenceGraph::new(program.nodes.values().cloned().collect(), edges)
        .expect("frontend nodes are unique and edges reference them")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_program, SourceFile};

    fn graph(src: &str) -> (Program, DependenceGraph) {
        let p = parse_program(&[SourceFile::new("t.c", src)]).unwrap();
        let g = build_sdg(&p);
        (p, g)
    }

    fn at(g: &DependenceGraph, line: u32, kind: NodeKind) -> NodeId {
        g.nodes()
            .iter()
            .find(|n| n.line == line && n.kind == kind)
            .unwrap()
            .id
            .clone()
    }

    #[test]
    fn single_def_use_pair() {
        let (_, g) = graph("int f(){int a=1; int b=a;}");
        let data: Vec<_> = g
            .edges()
            .iter()
            .filter(|e| e.kind == EdgeKind::Data)
            .collect();
        assert_eq!(data.len(), 1);
        assert_eq!(data[0].src, NodeId::from("t.c:1:9"));
        assert_eq!(data[0].dst, NodeId::from("t.c:1:18"));
    }

    #[test]
    fn branch_governs_its_body() {
        let (_, g) = graph("int f(int c)\n{\n  int x = 0;\n  if(c){x=1;}\n  return x;\n}");
        let br = at(&g, 4, NodeKind::Branch);
        let assign = at(&g, 4, NodeKind::Assign);
        assert!(g
            .edges()
            .contains(&Edge::new(br, assign, EdgeKind::Control)));
        // both definitions of x reach the return
        let ret = at(&g, 5, NodeKind::Return);
        let defs: Vec<_> = g.predecessors(&ret);
        assert_eq!(defs.len(), 2);
    }

    #[test]
    fn redefinition_kills() {
        let (_, g) = graph("int f()\n{\n  int x = 1;\n  x = 2;\n  return x;\n}");
        let ret = at(&g, 5, NodeKind::Return);
        assert_eq!(g.predecessors(&ret), vec![&at(&g, 4, NodeKind::Assign)]);
    }

    #[test]
    fn loop_carried_dependence() {
        let (_, g) = graph(
            "int f(int n)\n{\n  int s = 0;\n  while (s < n) {\n    s = s + 1;\n  }\n  return s;\n}",
        );
        let header = at(&g, 4, NodeKind::LoopHeader);
        let inc = at(&g, 5, NodeKind::Assign);
        assert!(g
            .edges()
            .contains(&Edge::new(inc.clone(), header.clone(), EdgeKind::Data)));
        assert!(g
            .edges()
            .contains(&Edge::new(header, inc, EdgeKind::Control)));
    }

    #[test]
    fn interprocedural_edges() {
        let src = "int g(int y)\n{\n  return y + 1;\n}\nint f(int a)\n{\n  int b = a;\n  int c = g(b);\n  return c;\n}";
        let (p, g) = graph(src);
        let site = at(&g, 8, NodeKind::Decl);
        let callee = p.function("g").unwrap();
        let entry = callee.entry.clone().unwrap();
        let formal = callee.param_defs[0].clone();
        let b_def = at(&g, 7, NodeKind::Decl);
        let ret = at(&g, 3, NodeKind::Return);
        let e = g.edges();
        assert!(e.contains(&Edge::new(site.clone(), entry, EdgeKind::Call)));
        assert!(e.contains(&Edge::new(site.clone(), formal.clone(), EdgeKind::Param)));
        assert!(e.contains(&Edge::new(b_def, formal, EdgeKind::Param)));
        assert!(e.contains(&Edge::new(ret, site, EdgeKind::Param)));
    }

    #[test]
    fn discarded_result_gets_no_return_edge() {
        let src = "int g(int y)\n{\n  return y;\n}\nint f(int a)\n{\n  g(a);\n  return 0;\n}";
        let (_, g) = graph(src);
        let ret = at(&g, 3, NodeKind::Return);
        assert!(g.successors(&ret).is_empty());
    }

    #[test]
    fn unresolved_calls_get_no_call_edges() {
        let (_, g) = graph("int f(int n)\n{\n  char *p = malloc(n);\n  return 0;\n}");
        assert!(g.edges().iter().all(|e| e.kind != EdgeKind::Call));
    }

    #[test]
    fn deterministic() {
        let src = "int f(int n)\n{\n  int s = 0;\n  for (int i = 0; i < n; i++) { s += i; }\n  return s;\n}";
        let (_, a) = graph(src);
        let (_, b) = graph(src);
        assert_eq!(a, b);
    }
}
