//! Lowering from the parsed AST to statement nodes, def/use facts and a
//! per-function control-flow graph.

use std::collections::{BTreeMap, BTreeSet};

use super::parse::{Expr, FunctionAst, Span, Stmt};
use super::{
    CallFact, Callsite, FunctionBody, FunctionDef, NodeFacts, NodeId, NodeKind, SourceFile,
    StatementNode,
};

pub(crate) fn lower_functions(
    sources: &[SourceFile],
    asts: &[FunctionAst],
) -> (Vec<FunctionDef>, BTreeMap<NodeId, StatementNode>) {
    let defined: BTreeSet<String> = asts.iter().map(|f| f.name.clone()).collect();
    let mut nodes = BTreeMap::new();
    let mut functions = Vec::new();
    for ast in asts {
        let src = sources
            .iter()
            .find(|s| s.path == ast.file)
            .map(|s| s.text.as_str())
            .unwrap_or("");
        let mut lw = Lowerer {
            ast,
            src,
            defined: &defined,
            pointers: pointer_vars(ast),
            nodes: Vec::new(),
            body: FunctionBody::default(),
            callsites: Vec::new(),
        };
        let def = lw.run();
        for n in lw.nodes {
            nodes.insert(n.id.clone(), n);
        }
        functions.push(def);
    }
    (functions, nodes)
}

fn pointer_vars(ast: &FunctionAst) -> BTreeSet<String> {
    fn walk(s: &Stmt, out: &mut BTreeSet<String>) {
        match s {
            Stmt::Decl { decls, .. } => {
                out.extend(decls.iter().filter(|d| d.indirect).map(|d| d.name.clone()));
            }
            Stmt::If { then, els, .. } => {
                walk(then, out);
                if let Some(e) = els {
                    walk(e, out);
                }
            }
            Stmt::While { body, .. } => walk(body, out),
            Stmt::For { init, body, .. } => {
                if let Some(i) = init {
                    walk(i, out);
                }
                walk(body, out);
            }
            Stmt::Block(b) => b.iter().for_each(|s| walk(s, out)),
            _ => {}
        }
    }
    let mut out: BTreeSet<String> = ast
        .params
        .iter()
        .filter(|p| p.indirect)
        .map(|p| p.name.clone())
        .collect();
    ast.body.iter().for_each(|s| walk(s, &mut out));
    out
}

fn one_line(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            out.push_str(line.trim_end());
        } else {
            let l = line.trim();
            if !l.is_empty() {
                out.push(' ');
                out.push_str(l);
            }
        }
    }
    out
}

struct Lowerer<'a> {
    ast: &'a FunctionAst,
    src: &'a str,
    defined: &'a BTreeSet<String>,
    pointers: BTreeSet<String>,
    nodes: Vec<StatementNode>,
    body: FunctionBody,
    callsites: Vec<Callsite>,
}

impl<'a> Lowerer<'a> {
    fn run(&mut self) -> FunctionDef {
        let ast = self.ast;
        let entry = self.add_node(
            ast.name_span,
            Some(ast.signature),
            NodeKind::Entry,
            NodeFacts::default(),
            None,
        );
        let mut preds = vec![entry.clone()];
        let mut param_defs = Vec::new();
        for p in &ast.params {
            let facts = NodeFacts {
                defs: [p.name.clone()].into(),
                ..Default::default()
            };
            let id = self.add_node(p.span, None, NodeKind::ParamDef, facts, None);
            self.link(&preds, &id);
            preds = vec![id.clone()];
            param_defs.push(id);
        }
        for s in &ast.body {
            preds = self.stmt(s, preds, None);
        }
        let mut statements: Vec<&StatementNode> = self.nodes.iter().collect();
        statements.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
        let statements = statements.into_iter().map(|n| n.id.clone()).collect();
        FunctionDef {
            name: ast.name.clone(),
            file: ast.file.clone(),
            params: ast.params.iter().map(|p| p.name.clone()).collect(),
            statements,
            callsites: self.callsites.clone(),
            entry: Some(entry),
            param_defs,
            first_line: ast.signature.line,
            last_line: ast.end_line,
            body: Some(std::mem::take(&mut self.body)),
        }
    }

    fn text(&self, span: Span) -> String {
        self.src
            .get(span.start..span.end)
            .map(one_line)
            .unwrap_or_default()
    }

    fn add_node(
        &mut self,
        anchor: Span,
        text_span: Option<Span>,
        kind: NodeKind,
        facts: NodeFacts,
        governor: Option<&NodeId>,
    ) -> NodeId {
        let id = NodeId::at(&self.ast.file, anchor.line, anchor.col);
        let text = self.text(text_span.unwrap_or(anchor));
        for call in &facts.calls {
            if let Some(c) = &call.callee {
                self.callsites.push(Callsite {
                    callee: c.clone(),
                    node: id.clone(),
                });
            }
        }
        self.nodes.push(StatementNode {
            id: id.clone(),
            file: self.ast.file.clone(),
            function: self.ast.name.clone(),
            line: anchor.line,
            col: anchor.col,
            text,
            kind,
        });
        self.body.facts.insert(id.clone(), facts);
        self.body.cfg.entry(id.clone()).or_default();
        if let Some(g) = governor {
            self.body.governor.insert(id.clone(), g.clone());
        }
        id
    }

    fn link(&mut self, preds: &[NodeId], to: &NodeId) {
        for p in preds {
            let succ = self.body.cfg.entry(p.clone()).or_default();
            if !succ.contains(to) {
                succ.push(to.clone());
            }
        }
    }

    /// Lowers `s` reached from `preds`; returns the fall-through exits.
    fn stmt(&mut self, s: &Stmt, preds: Vec<NodeId>, gov: Option<&NodeId>) -> Vec<NodeId> {
        match s {
            Stmt::Empty => preds,
            Stmt::Block(stmts) => {
                let mut cur = preds;
                for s in stmts {
                    cur = self.stmt(s, cur, gov);
                }
                cur
            }
            Stmt::Decl { span, decls } => {
                let mut w = self.walker();
                for d in decls {
                    w.facts.defs.insert(d.name.clone());
                    for dim in &d.dims {
                        w.rvalue(dim);
                    }
                    if let Some(init) = &d.init {
                        w.rvalue(init);
                    }
                }
                let facts = w.finish();
                let id = self.add_node(*span, None, NodeKind::Decl, facts, gov);
                self.link(&preds, &id);
                vec![id]
            }
            Stmt::Expr { span, expr } => {
                let kind = match strip_casts(expr) {
                    Expr::Call { .. } => NodeKind::Call,
                    _ => NodeKind::Assign,
                };
                let mut w = self.walker();
                w.rvalue(expr);
                let mut facts = w.finish();
                if kind == NodeKind::Call {
                    // the statement's own call is recorded last
                    if let Some(top) = facts.calls.last_mut() {
                        top.value_used = false;
                    }
                }
                let id = self.add_node(*span, None, kind, facts, gov);
                self.link(&preds, &id);
                vec![id]
            }
            Stmt::Return { span, value } => {
                let mut w = self.walker();
                if let Some(v) = value {
                    w.rvalue(v);
                }
                let facts = w.finish();
                let id = self.add_node(*span, None, NodeKind::Return, facts, gov);
                self.link(&preds, &id);
                Vec::new()
            }
            Stmt::If {
                span,
                cond,
                then,
                els,
            } => {
                let facts = self.cond_facts(Some(cond));
                let id = self.add_node(*span, None, NodeKind::Branch, facts, gov);
                self.link(&preds, &id);
                let mut exits = self.stmt(then, vec![id.clone()], Some(&id));
                match els {
                    Some(e) => exits.extend(self.stmt(e, vec![id.clone()], Some(&id))),
                    None => exits.push(id.clone()),
                }
                exits
            }
            Stmt::While { span, cond, body } => {
                let facts = self.cond_facts(Some(cond));
                let id = self.add_node(*span, None, NodeKind::LoopHeader, facts, gov);
                self.link(&preds, &id);
                let back = self.stmt(body, vec![id.clone()], Some(&id));
                self.link(&back, &id);
                vec![id]
            }
            Stmt::For {
                span,
                init,
                cond,
                step,
                body,
            } => {
                let mut cur = preds;
                if let Some(i) = init {
                    cur = self.stmt(i, cur, gov);
                }
                let facts = self.cond_facts(cond.as_ref());
                let id = self.add_node(*span, None, NodeKind::LoopHeader, facts, gov);
                self.link(&cur, &id);
                let mut back = self.stmt(body, vec![id.clone()], Some(&id));
                if let Some((sspan, sexpr)) = step {
                    let mut w = self.walker();
                    w.rvalue(sexpr);
                    let facts = w.finish();
                    let sid = self.add_node(*sspan, None, NodeKind::Assign, facts, Some(&id));
                    self.link(&back, &sid);
                    back = vec![sid];
                }
                self.link(&back, &id);
                vec![id]
            }
        }
    }

    fn cond_facts(&self, cond: Option<&Expr>) -> NodeFacts {
        let mut w = self.walker();
        if let Some(c) = cond {
            w.rvalue(c);
        }
        w.finish()
    }

    fn walker(&self) -> Walker<'_> {
        Walker {
            defined: self.defined,
            pointers: &self.pointers,
            facts: NodeFacts::default(),
        }
    }
}

fn strip_casts(e: &Expr) -> &Expr {
    match e {
        Expr::Cast(inner) => strip_casts(inner),
        other => other,
    }
}

/// Variable an lvalue ultimately writes through.
fn base_var(e: &Expr) -> Option<&str> {
    match e {
        Expr::Var(x) => Some(x),
        Expr::Deref(i) | Expr::Member(i) | Expr::Cast(i) | Expr::AddrOf(i) | Expr::Index(i, _) => {
            base_var(i)
        }
        Expr::Binary(l, _) => base_var(l),
        _ => None,
    }
}

struct Walker<'a> {
    defined: &'a BTreeSet<String>,
    pointers: &'a BTreeSet<String>,
    facts: NodeFacts,
}

impl Walker<'_> {
    fn finish(self) -> NodeFacts {
        self.facts
    }

    fn lvalue(&mut self, e: &Expr, compound: bool) {
        match e {
            Expr::Var(x) => {
                self.facts.defs.insert(x.clone());
                if compound {
                    self.facts.uses.insert(x.clone());
                }
            }
            other => {
                // writes through a pointer, array or field: a weak update
                if let Some(b) = base_var(other) {
                    self.facts.defs.insert(b.to_string());
                }
                self.rvalue(other);
            }
        }
    }

    fn rvalue(&mut self, e: &Expr) {
        match e {
            Expr::Var(x) => {
                self.facts.uses.insert(x.clone());
            }
            Expr::Lit | Expr::Sizeof(None) => {}
            Expr::Call {
                callee,
                target,
                args,
            } => {
                if callee.is_none() {
                    self.rvalue(target);
                }
                let external = callee.as_ref().is_some_and(|c| !self.defined.contains(c));
                let mut arg_vars = Vec::with_capacity(args.len());
                for a in args {
                    let mut vars = BTreeSet::new();
                    collect_vars(a, &mut vars);
                    arg_vars.push(vars);
                    self.rvalue(a);
                    match strip_casts(a) {
                        Expr::AddrOf(inner) => {
                            if let Some(b) = base_var(inner) {
                                self.facts.defs.insert(b.to_string());
                            }
                        }
                        Expr::Var(x) if external && self.pointers.contains(x) => {
                            self.facts.defs.insert(x.clone());
                        }
                        _ => {}
                    }
                }
                self.facts.calls.push(CallFact {
                    callee: callee.clone(),
                    args: arg_vars,
                    value_used: true,
                });
            }
            Expr::Assign { compound, lhs, rhs } => {
                self.rvalue(rhs);
                self.lvalue(lhs, *compound);
            }
            Expr::IncDec(inner) => self.lvalue(inner, true),
            Expr::AddrOf(i) | Expr::Deref(i) | Expr::Unary(i) | Expr::Member(i) | Expr::Cast(i) => {
                self.rvalue(i)
            }
            Expr::Sizeof(Some(i)) => self.rvalue(i),
            Expr::Binary(a, b) | Expr::Index(a, b) => {
                self.rvalue(a);
                self.rvalue(b);
            }
            Expr::Ternary(a, b, c) => {
                self.rvalue(a);
                self.rvalue(b);
                self.rvalue(c);
            }
            Expr::InitList(items) => items.iter().for_each(|i| self.rvalue(i)),
        }
    }
}

fn collect_vars(e: &Expr, out: &mut BTreeSet<String>) {
    match e {
        Expr::Var(x) => {
            out.insert(x.clone());
        }
        Expr::Lit | Expr::Sizeof(None) => {}
        Expr::Call {
            callee,
            target,
            args,
        } => {
            if callee.is_none() {
                collect_vars(target, out);
            }
            args.iter().for_each(|a| collect_vars(a, out));
        }
        Expr::AddrOf(i)
        | Expr::Deref(i)
        | Expr::Unary(i)
        | Expr::Member(i)
        | Expr::Cast(i)
        | Expr::IncDec(i) => collect_vars(i, out),
        Expr::Sizeof(Some(i)) => collect_vars(i, out),
        Expr::Binary(a, b) | Expr::Index(a, b) => {
            collect_vars(a, out);
            collect_vars(b, out);
        }
        Expr::Assign { lhs, rhs, .. } => {
            collect_vars(lhs, out);
            collect_vars(rhs, out);
        }
        Expr::Ternary(a, b, c) => {
            collect_vars(a, out);
            collect_vars(b, out);
            collect_vars(c, out);
        }
        Expr::InitList(items) => items.iter().for_each(|i| collect_vars(i, out)),
    }
}

#[cfg(test)]
mod tests {
    use crate::model::{parse_program, SourceFile};

    use super::*;

    fn facts_at(src: &str, line: u32) -> (NodeKind, NodeFacts) {
        let p = parse_program(&[SourceFile::new("t.c", src)]).unwrap();
        let f = &p.functions[0];
        let id = f
            .statements
            .iter()
            .find(|id| p.nodes[*id].line == line && p.nodes[*id].kind != NodeKind::ParamDef)
            .unwrap();
        (p.nodes[id].kind, f.body.as_ref().unwrap().facts[id].clone())
    }

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn indexed_store_is_weak_update() {
        let (kind, f) = facts_at("void f(char *buf, int i, int v)\n{\n    buf[i] = v;\n}", 3);
        assert_eq!(kind, NodeKind::Assign);
        assert_eq!(f.defs, set(&["buf"]));
        assert_eq!(f.uses, set(&["buf", "i", "v"]));
    }

    #[test]
    fn external_call_defines_pointer_and_address_args() {
        let src = "void f(int fd)\n{\n    char buf[8];\n    int n;\n    read(fd, buf, 8);\n    scanf(\"%d\", &n);\n}";
        let (kind, f) = facts_at(src, 5);
        assert_eq!(kind, NodeKind::Call);
        assert_eq!(f.defs, set(&["buf"]));
        assert_eq!(f.uses, set(&["buf", "fd"]));
        let (_, f) = facts_at(src, 6);
        assert_eq!(f.defs, set(&["n"]));
    }

    #[test]
    fn for_loop_nodes_and_governors() {
        let src = "int f(int n)\n{\n    int s = 0;\n    for (int i = 0; i < n; i++) {\n        s += i;\n    }\n    return s;\n}";
        let p = parse_program(&[SourceFile::new("t.c", src)]).unwrap();
        let f = &p.functions[0];
        let body = f.body.as_ref().unwrap();
        let on4: Vec<_> = f
            .statements
            .iter()
            .filter(|id| p.nodes[*id].line == 4)
            .collect();
        // loop header, init, step
        assert_eq!(on4.len(), 3);
        let header = on4
            .iter()
            .find(|id| p.nodes[**id].kind == NodeKind::LoopHeader)
            .unwrap();
        let body_stmt = f
            .statements
            .iter()
            .find(|id| p.nodes[*id].line == 5)
            .unwrap();
        assert_eq!(&body.governor[body_stmt], *header);
        assert_eq!(p.nodes[*header].text, "for (int i = 0; i < n; i++)");
    }

    #[test]
    fn signature_text_is_single_line() {
        let p = parse_program(&[SourceFile::new(
            "t.c",
            "static int\nf(int a,\n  int b)\n{\n  return a + b;\n}",
        )])
        .unwrap();
        let entry = p.functions[0].entry.clone().unwrap();
        assert_eq!(p.nodes[&entry].text, "static int f(int a, int b)");
        assert_eq!(p.nodes[&entry].line, 2);
    }
}
