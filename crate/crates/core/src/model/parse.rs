//! Recursive-descent parser for the mini-C subset.
//!
//! Accepted: function definitions, prototypes, global declarations,
//! `typedef`s of plain types, struct/union/enum definitions (skipped),
//! declarations, assignments, calls, `if`/`else`, `while`, `for`, `return`.
//! `do`, `switch`, `goto`, `break` and `continue` are rejected with an
//! unsupported-construct diagnostic.

use std::collections::BTreeSet;

use super::lexer::{tokenize, TokKind, Token};
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Span {
    pub line: u32,
    pub col: u32,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum Expr {
    Var(String),
    Lit,
    Call {
        callee: Option<String>,
        target: Box<Expr>,
        args: Vec<Expr>,
    },
    AddrOf(Box<Expr>),
    Deref(Box<Expr>),
    Unary(Box<Expr>),
    IncDec(Box<Expr>),
    Binary(Box<Expr>, Box<Expr>),
    Assign {
        compound: bool,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Ternary(Box<Expr>, Box<Expr>, Box<Expr>),
    Index(Box<Expr>, Box<Expr>),
    Member(Box<Expr>),
    Cast(Box<Expr>),
    Sizeof(Option<Box<Expr>>),
    InitList(Vec<Expr>),
}

#[derive(Debug, Clone)]
pub(crate) struct Declarator {
    pub name: String,
    pub indirect: bool,
    pub dims: Vec<Expr>,
    pub init: Option<Expr>,
}

#[derive(Debug, Clone)]
pub(crate) enum Stmt {
    Decl {
        span: Span,
        decls: Vec<Declarator>,
    },
    Expr {
        span: Span,
        expr: Expr,
    },
    If {
        span: Span,
        cond: Expr,
        then: Box<Stmt>,
        els: Option<Box<Stmt>>,
    },
    While {
        span: Span,
        cond: Expr,
        body: Box<Stmt>,
    },
    For {
        span: Span,
        init: Option<Box<Stmt>>,
        cond: Option<Expr>,
        step: Option<(Span, Expr)>,
        body: Box<Stmt>,
    },
    Return {
        span: Span,
        value: Option<Expr>,
    },
    Block(Vec<Stmt>),
    Empty,
}

#[derive(Debug, Clone)]
pub(crate) struct Param {
    pub name: String,
    pub indirect: bool,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub(crate) struct FunctionAst {
    pub name: String,
    pub file: String,
    /// Span of the function name token.
    pub name_span: Span,
    /// Span of the whole signature, return type through closing parenthesis.
    pub signature: Span,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    pub end_line: u32,
}

const TYPE_WORDS: &[&str] = &[
    "void", "char", "short", "int", "long", "float", "double", "signed", "unsigned", "const",
    "volatile", "static", "extern", "register", "inline", "struct", "union", "enum", "bool",
    "_Bool", "FILE",
];

const UNSUPPORTED: &[&str] = &[
    "do", "switch", "case", "default", "goto", "break", "continue", "asm",
];

pub(crate) struct Parser<'a> {
    file: &'a str,
    toks: Vec<Token>,
    pos: usize,
    typedefs: BTreeSet<String>,
}

impl<'a> Parser<'a> {
    pub fn new(file: &'a str, src: &str) -> Result<Self, ModelError> {
        Ok(Self {
            file,
            toks: tokenize(file, src)?,
            pos: 0,
            typedefs: BTreeSet::new(),
        })
    }

    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, n: usize) -> &Token {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if t.kind != TokKind::Eof {
            self.pos += 1;
        }
        t
    }

    fn prev_end(&self) -> usize {
        if self.pos == 0 {
            0
        } else {
            self.toks[self.pos - 1].end
        }
    }

    fn error(&self, tok: &Token, message: impl Into<String>) -> ModelError {
        let message = message.into();
        let message = if tok.kind == TokKind::Eof {
            format!("{message} at end of input")
        } else {
            message
        };
        ModelError::Syntax {
            file: self.file.to_string(),
            line: tok.line,
            col: tok.col,
            message,
        }
    }

    fn unsupported(&self, tok: &Token, construct: &str) -> ModelError {
        ModelError::Unsupported {
            file: self.file.to_string(),
            line: tok.line,
            col: tok.col,
            construct: construct.to_string(),
        }
    }

    fn expect(&mut self, punct: &str) -> Result<Token, ModelError> {
        if self.peek().is(punct) {
            Ok(self.bump())
        } else {
            let t = self.peek().clone();
            Err(self.error(&t, format!("expected `{punct}`, found `{}`", t.text)))
        }
    }

    fn expect_ident(&mut self) -> Result<Token, ModelError> {
        if self.peek().kind == TokKind::Ident {
            Ok(self.bump())
        } else {
            let t = self.peek().clone();
            Err(self.error(&t, format!("expected identifier, found `{}`", t.text)))
        }
    }

    fn span_from(&self, first: &Token) -> Span {
        Span {
            line: first.line,
            col: first.col,
            start: first.start,
            end: self.prev_end(),
        }
    }

    fn is_type_word(&self, t: &Token) -> bool {
        t.kind == TokKind::Ident
            && (TYPE_WORDS.contains(&t.text.as_str())
                || self.typedefs.contains(&t.text)
                || (t.text.ends_with("_t") && t.text.len() > 2))
    }

    /// Whether the statement at the cursor starts a declaration.
    fn at_declaration(&self) -> bool {
        let t = self.peek();
        if self.is_type_word(t) {
            return true;
        }
        if t.kind != TokKind::Ident {
            return false;
        }
        // `Name ident ...` or `Name *ident =` / `Name **ident;` etc.
        let mut n = 1;
        while self.peek_at(n).is("*") {
            n += 1;
        }
        let after_name = self.peek_at(n + 1);
        self.peek_at(n).kind == TokKind::Ident
            && !self.is_keyword(&self.peek_at(n).text)
            && (n == 1
                || after_name.is("=")
                || after_name.is(";")
                || after_name.is(",")
                || after_name.is("["))
    }

    fn is_keyword(&self, w: &str) -> bool {
        matches!(w, "if" | "else" | "while" | "for" | "return" | "sizeof")
            || UNSUPPORTED.contains(&w)
    }

    /// Consumes type specifiers. Returns false when nothing was consumed.
    fn type_prefix(&mut self) -> Result<bool, ModelError> {
        let mut any = false;
        let mut have_base = false;
        loop {
            let t = self.peek().clone();
            if t.is_ident("struct") || t.is_ident("union") || t.is_ident("enum") {
                self.bump();
                if self.peek().kind == TokKind::Ident {
                    self.bump();
                }
                if self.peek().is("{") {
                    self.skip_braces()?;
                }
                any = true;
                have_base = true;
            } else if self.is_type_word(&t) {
                self.bump();
                any = true;
                have_base |= !is_qualifier(&t.text);
            } else if !have_base && t.kind == TokKind::Ident && !self.is_keyword(&t.text) {
                // user-defined type name
                self.bump();
                any = true;
                have_base = true;
            } else {
                return Ok(any);
            }
        }
    }

    fn skip_braces(&mut self) -> Result<(), ModelError> {
        let open = self.expect("{")?;
        let mut depth = 1;
        while depth > 0 {
            let t = self.bump();
            if t.kind == TokKind::Eof {
                return Err(self.error(&open, "unbalanced `{`"));
            }
            if t.is("{") {
                depth += 1;
            } else if t.is("}") {
                depth -= 1;
            }
        }
        Ok(())
    }

    fn pointer_stars(&mut self) -> bool {
        let mut indirect = false;
        while self.peek().is("*") || self.peek().is_ident("const") {
            if self.bump().is("*") {
                indirect = true;
            }
        }
        indirect
    }

    pub fn parse_unit(&mut self) -> Result<Vec<FunctionAst>, ModelError> {
        let mut functions = Vec::new();
        while self.peek().kind != TokKind::Eof {
            if self.peek().is(";") {
                self.bump();
                continue;
            }
            if self.peek().is_ident("typedef") {
                self.typedef()?;
                continue;
            }
            let first = self.peek().clone();
            if !self.type_prefix()? {
                return Err(self.error(&first, format!("unexpected `{}`", first.text)));
            }
            if self.peek().is(";") {
                // bare struct/enum definition
                self.bump();
                continue;
            }
            self.pointer_stars();
            let name = self.expect_ident()?;
            if self.peek().is("(") {
                let params = self.params()?;
                let signature = self.span_from(&first);
                if self.peek().is(";") {
                    self.bump();
                    continue;
                }
                if !self.peek().is("{") {
                    let t = self.peek().clone();
                    return Err(self.error(&t, "expected function body"));
                }
                let body = self.block()?;
                let end_line = self.toks[self.pos - 1].line;
                functions.push(FunctionAst {
                    name: name.text.clone(),
                    file: self.file.to_string(),
                    name_span: Span {
                        line: name.line,
                        col: name.col,
                        start: name.start,
                        end: name.end,
                    },
                    signature,
                    params,
                    body: match body {
                        Stmt::Block(b) => b,
                        other => vec![other],
                    },
                    end_line,
                });
            } else {
                // global declaration; globals carry no cross-function flow
                self.declarator_rest(name.text, false)?;
                while self.peek().is(",") {
                    self.bump();
                    let indirect = self.pointer_stars();
                    let n = self.expect_ident()?;
                    self.declarator_rest(n.text, indirect)?;
                }
                self.expect(";")?;
            }
        }
        Ok(functions)
    }

    fn typedef(&mut self) -> Result<(), ModelError> {
        let kw = self.bump();
        let mut last_ident = None;
        loop {
            let t = self.peek().clone();
            if t.kind == TokKind::Eof {
                return Err(self.error(&kw, "unterminated typedef"));
            }
            if t.is("{") {
                self.skip_braces()?;
                continue;
            }
            if t.is("(") {
                return Err(self.unsupported(&kw, "function-pointer typedef"));
            }
            self.bump();
            if t.is(";") {
                break;
            }
            if t.kind == TokKind::Ident {
                last_ident = Some(t.text);
            }
        }
        if let Some(name) = last_ident {
            self.typedefs.insert(name);
        }
        Ok(())
    }

    fn params(&mut self) -> Result<Vec<Param>, ModelError> {
        self.expect("(")?;
        let mut params = Vec::new();
        if self.peek().is_ident("void") && self.peek_at(1).is(")") {
            self.bump();
        }
        while !self.peek().is(")") {
            if self.peek().is("...") {
                self.bump();
                continue;
            }
            let first = self.peek().clone();
            if !self.type_prefix()? {
                return Err(self.error(
                    &first,
                    format!("expected parameter type, found `{}`", first.text),
                ));
            }
            let mut indirect = self.pointer_stars();
            if self.peek().is("(") {
                return Err(self.unsupported(&first, "function-pointer parameter"));
            }
            if self.peek().kind == TokKind::Ident {
                let name = self.bump();
                while self.peek().is("[") {
                    self.bump();
                    while !self.peek().is("]") {
                        if self.peek().kind == TokKind::Eof {
                            let t = self.peek().clone();
                            return Err(self.error(&t, "expected `]`"));
                        }
                        self.bump();
                    }
                    self.bump();
                    indirect = true;
                }
                params.push(Param {
                    name: name.text.clone(),
                    indirect,
                    span: Span {
                        line: name.line,
                        col: name.col,
                        start: first.start,
                        end: self.prev_end(),
                    },
                });
            }
            if self.peek().is(",") {
                self.bump();
            } else if !self.peek().is(")") {
                let t = self.peek().clone();
                return Err(self.error(&t, format!("expected `,` or `)`, found `{}`", t.text)));
            }
        }
        self.expect(")")?;
        Ok(params)
    }

    fn block(&mut self) -> Result<Stmt, ModelError> {
        let open = self.expect("{")?;
        let mut stmts = Vec::new();
        loop {
            if self.peek().is("}") {
                self.bump();
                return Ok(Stmt::Block(stmts));
            }
            if self.peek().kind == TokKind::Eof {
                let t = self.peek().clone();
                let _ = open;
                return Err(self.error(&t, "unbalanced `{`: expected `}`"));
            }
            stmts.push(self.statement()?);
        }
    }

    fn statement(&mut self) -> Result<Stmt, ModelError> {
        let first = self.peek().clone();
        if first.is("{") {
            return self.block();
        }
        if first.is(";") {
            self.bump();
            return Ok(Stmt::Empty);
        }
        if first.kind == TokKind::Ident {
            if UNSUPPORTED.contains(&first.text.as_str()) {
                return Err(self.unsupported(&first, &format!("`{}` statement", first.text)));
            }
            match first.text.as_str() {
                "if" => {
                    self.bump();
                    self.expect("(")?;
                    let cond = self.expr()?;
                    self.expect(")")?;
                    let span = self.span_from(&first);
                    let then = Box::new(self.statement()?);
                    let els = if self.peek().is_ident("else") {
                        self.bump();
                        Some(Box::new(self.statement()?))
                    } else {
                        None
                    };
                    return Ok(Stmt::If {
                        span,
                        cond,
                        then,
                        els,
                    });
                }
                "while" => {
                    self.bump();
                    self.expect("(")?;
                    let cond = self.expr()?;
                    self.expect(")")?;
                    let span = self.span_from(&first);
                    let body = Box::new(self.statement()?);
                    return Ok(Stmt::While { span, cond, body });
                }
                "for" => return self.for_stmt(),
                "return" => {
                    self.bump();
                    let value = if self.peek().is(";") {
                        None
                    } else {
                        Some(self.expr()?)
                    };
                    self.expect(";")?;
                    return Ok(Stmt::Return {
                        span: self.span_from(&first),
                        value,
                    });
                }
                "else" => return Err(self.error(&first, "`else` without `if`")),
                _ => {}
            }
            if self.at_declaration() {
                return self.declaration(true);
            }
        }
        let expr = self.expr()?;
        self.expect(";")?;
        Ok(Stmt::Expr {
            span: self.span_from(&first),
            expr,
        })
    }

    fn for_stmt(&mut self) -> Result<Stmt, ModelError> {
        let first = self.bump();
        self.expect("(")?;
        let init = if self.peek().is(";") {
            self.bump();
            None
        } else if self.at_declaration() {
            Some(Box::new(self.declaration(true)?))
        } else {
            let t = self.peek().clone();
            let expr = self.expr()?;
            let span = self.span_from(&t);
            self.expect(";")?;
            Some(Box::new(Stmt::Expr { span, expr }))
        };
        let cond = if self.peek().is(";") {
            None
        } else {
            Some(self.expr()?)
        };
        self.expect(";")?;
        let step = if self.peek().is(")") {
            None
        } else {
            let t = self.peek().clone();
            let e = self.expr()?;
            Some((self.span_from(&t), e))
        };
        self.expect(")")?;
        let span = self.span_from(&first);
        let body = Box::new(self.statement()?);
        Ok(Stmt::For {
            span,
            init,
            cond,
            step,
            body,
        })
    }

    fn declaration(&mut self, needs_semi: bool) -> Result<Stmt, ModelError> {
        let first = self.peek().clone();
        self.type_prefix()?;
        let mut decls = Vec::new();
        loop {
            let indirect = self.pointer_stars();
            if self.peek().is("(") {
                let t = self.peek().clone();
                return Err(self.unsupported(&t, "function-pointer declaration"));
            }
            let name = self.expect_ident()?;
            decls.push(self.declarator_rest(name.text, indirect)?);
            if self.peek().is(",") {
                self.bump();
            } else {
                break;
            }
        }
        if needs_semi {
            self.expect(";")?;
        }
        Ok(Stmt::Decl {
            span: self.span_from(&first),
            decls,
        })
    }

    fn declarator_rest(
        &mut self,
        name: String,
        mut indirect: bool,
    ) -> Result<Declarator, ModelError> {
        let mut dims = Vec::new();
        while self.peek().is("[") {
            self.bump();
            indirect = true;
            if !self.peek().is("]") {
                dims.push(self.expr()?);
            }
            self.expect("]")?;
        }
        let init = if self.peek().is("=") {
            self.bump();
            Some(self.initializer()?)
        } else {
            None
        };
        Ok(Declarator {
            name,
            indirect,
            dims,
            init,
        })
    }

    fn initializer(&mut self) -> Result<Expr, ModelError> {
        if self.peek().is("{") {
            self.bump();
            let mut items = Vec::new();
            while !self.peek().is("}") {
                items.push(self.initializer()?);
                if self.peek().is(",") {
                    self.bump();
                } else {
                    break;
                }
            }
            self.expect("}")?;
            Ok(Expr::InitList(items))
        } else {
            self.assignment()
        }
    }

    pub(crate) fn expr(&mut self) -> Result<Expr, ModelError> {
        let first = self.assignment()?;
        if self.peek().is(",") {
            let t = self.peek().clone();
            return Err(self.unsupported(&t, "comma operator"));
        }
        Ok(first)
    }

    fn assignment(&mut self) -> Result<Expr, ModelError> {
        let lhs = self.ternary()?;
        let t = self.peek().clone();
        if t.kind == TokKind::Punct
            && matches!(
                t.text.as_str(),
                "=" | "+=" | "-=" | "*=" | "/=" | "%=" | "&=" | "|=" | "^=" | "<<=" | ">>="
            )
        {
            self.bump();
            let rhs = self.assignment()?;
            return Ok(Expr::Assign {
                compound: t.text != "=",
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            });
        }
        Ok(lhs)
    }

    fn ternary(&mut self) -> Result<Expr, ModelError> {
        let cond = self.binary(0)?;
        if self.peek().is("?") {
            self.bump();
            let a = self.assignment()?;
            self.expect(":")?;
            let b = self.ternary()?;
            return Ok(Expr::Ternary(Box::new(cond), Box::new(a), Box::new(b)));
        }
        Ok(cond)
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, ModelError> {
        let mut lhs = self.unary()?;
        loop {
            let t = self.peek();
            let prec = if t.kind == TokKind::Punct {
                binary_prec(&t.text)
            } else {
                None
            };
            match prec {
                Some(p) if p >= min_prec => {
                    self.bump();
                    let rhs = self.binary(p + 1)?;
                    lhs = Expr::Binary(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn at_type_in_parens(&self) -> bool {
        let t = self.peek_at(1);
        if self.is_type_word(t) {
            return true;
        }
        if t.kind == TokKind::Ident && !self.is_keyword(&t.text) {
            let mut n = 2;
            let mut stars = false;
            while self.peek_at(n).is("*") {
                n += 1;
                stars = true;
            }
            return stars && self.peek_at(n).is(")");
        }
        false
    }

    fn type_in_parens(&mut self) -> Result<(), ModelError> {
        self.expect("(")?;
        self.type_prefix()?;
        self.pointer_stars();
        while self.peek().is("[") {
            self.bump();
            while !self.peek().is("]") && self.peek().kind != TokKind::Eof {
                self.bump();
            }
            self.expect("]")?;
        }
        self.expect(")")?;
        Ok(())
    }

    fn unary(&mut self) -> Result<Expr, ModelError> {
        let t = self.peek().clone();
        if t.kind == TokKind::Punct {
            match t.text.as_str() {
                "++" | "--" => {
                    self.bump();
                    return Ok(Expr::IncDec(Box::new(self.unary()?)));
                }
                "&" => {
                    self.bump();
                    return Ok(Expr::AddrOf(Box::new(self.unary()?)));
                }
                "*" => {
                    self.bump();
                    return Ok(Expr::Deref(Box::new(self.unary()?)));
                }
                "!" | "~" | "-" | "+" => {
                    self.bump();
                    return Ok(Expr::Unary(Box::new(self.unary()?)));
                }
                "(" if self.at_type_in_parens() => {
                    self.type_in_parens()?;
                    if self.peek().is("{") {
                        return Err(self.unsupported(&t, "compound literal"));
                    }
                    return Ok(Expr::Cast(Box::new(self.unary()?)));
                }
                _ => {}
            }
        }
        if t.is_ident("sizeof") {
            self.bump();
            if self.peek().is("(") && self.at_type_in_parens() {
                self.type_in_parens()?;
                return Ok(Expr::Sizeof(None));
            }
            return Ok(Expr::Sizeof(Some(Box::new(self.unary()?))));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, ModelError> {
        let mut e = self.primary()?;
        loop {
            let t = self.peek().clone();
            if t.is("(") {
                self.bump();
                let mut args = Vec::new();
                while !self.peek().is(")") {
                    args.push(self.assignment()?);
                    if self.peek().is(",") {
                        self.bump();
                    } else if !self.peek().is(")") {
                        let t = self.peek().clone();
                        return Err(
                            self.error(&t, format!("expected `,` or `)`, found `{}`", t.text))
                        );
                    }
                }
                self.expect(")")?;
                let callee = match &e {
                    Expr::Var(name) => Some(name.clone()),
                    _ => None,
                };
                e = Expr::Call {
                    callee,
                    target: Box::new(e),
                    args,
                };
            } else if t.is("[") {
                self.bump();
                let idx = self.expr()?;
                self.expect("]")?;
                e = Expr::Index(Box::new(e), Box::new(idx));
            } else if t.is(".") || t.is("->") {
                self.bump();
                self.expect_ident()?;
                e = Expr::Member(Box::new(e));
            } else if t.is("++") || t.is("--") {
                self.bump();
                e = Expr::IncDec(Box::new(e));
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, ModelError> {
        let t = self.bump();
        match t.kind {
            TokKind::Ident if !self.is_keyword(&t.text) && !self.is_type_word(&t) => {
                Ok(Expr::Var(t.text))
            }
            TokKind::Number | TokKind::Char => Ok(Expr::Lit),
            TokKind::Str => {
                while self.peek().kind == TokKind::Str {
                    self.bump();
                }
                Ok(Expr::Lit)
            }
            TokKind::Punct if t.is("(") => {
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            TokKind::Ident if UNSUPPORTED.contains(&t.text.as_str()) => {
                Err(self.unsupported(&t, &format!("`{}` statement", t.text)))
            }
            _ => Err(self.error(&t, format!("unexpected `{}` in expression", t.text))),
        }
    }
}

fn is_qualifier(word: &str) -> bool {
    matches!(
        word,
        "const" | "volatile" | "static" | "extern" | "register" | "inline"
    )
}

fn binary_prec(op: &str) -> Option<u8> {
    Some(match op {
        "||" => 1,
        "&&" => 2,
        "|" => 3,
        "^" => 4,
        "&" => 5,
        "==" | "!=" => 6,
        "<" | ">" | "<=" | ">=" => 7,
        "<<" | ">>" => 8,
        "+" | "-" => 9,
        "*" | "/" | "%" => 10,
        _ => return None,
    })
}
