//! Recursive-descent parser for the schema DSL.
//!
//! ```text
//! relation Prof/3;
//! method pr on Prof inputs (1);
//! method ud on Udirectory inputs () bound 100;
//! id Prof(i,n,s) -> Udirectory(i,a,p);
//! fd Udirectory: 1 -> 2;
//! query Q1(n) :- Prof(i,n,10000);
//! fact Prof(1,"ann",10000);
//! plan P { T <= ud(in=) <- unit; A := { (i) :- T(i,a,p) }; return A; }
//! ```
//!
//! Statement terminators are optional. Positions are 1-based in the text and
//! 0-based in the parsed values.

use std::collections::BTreeSet;

use answerability_core::constraints::{Dependency, Fd, Tgd};
use answerability_core::model::{Atom, ConjunctiveQuery, Fact, Instance, Name, Term, Value};
use answerability_core::plans::{Block, Command, Expr, Plan};
use answerability_core::schema::{validate_schema, AccessMethod, Bound, Schema, Subject};

use crate::diagnostics::{Diagnostic, Span};
use crate::lexer::{tokenize, Tok, Token};

/// Everything a source file declares.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Document {
    pub schema: Schema,
    pub queries: Vec<ConjunctiveQuery>,
    pub plans: Vec<Plan>,
    pub facts: Instance,
}

impl Document {
    pub fn query(&self, name: &str) -> Option<&ConjunctiveQuery> {
        self.queries.iter().find(|q| &*q.name == name)
    }

    pub fn plan(&self, name: &str) -> Option<&Plan> {
        self.plans.iter().find(|p| &*p.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatementKind {
    Relation,
    Method,
    Constraint,
    Query,
    Fact,
    Plan,
}

/// A statement's kind, its index among statements of that kind, and where
/// it was written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Statement {
    pub kind: StatementKind,
    pub index: usize,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub document: Document,
    pub statements: Vec<Statement>,
    /// Facts in source order, duplicates included; `Fact` statements index
    /// into this list.
    pub facts: Vec<Fact>,
}

impl SourceFile {
    pub fn span_of(&self, kind: StatementKind, index: usize) -> Span {
        self.statements
            .iter()
            .find(|s| s.kind == kind && s.index == index)
            .map(|s| s.span)
            .unwrap_or_default()
    }
}

const KEYWORDS: [&str; 8] = ["relation", "method", "id", "tgd", "fd", "query", "fact", "plan"];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: Span,
    file: SourceFile,
    diags: Vec<Diagnostic>,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn span(&self) -> Span {
        self.toks.get(self.pos).map(|t| t.span).unwrap_or(self.end)
    }

    fn prev_span(&self) -> Span {
        self.pos.checked_sub(1).map(|i| self.toks[i].span).unwrap_or_default()
    }

    fn unexpected(&self, wanted: &str) -> Diagnostic {
        let found = match self.peek() {
            Some(t) => t.describe(),
            None => "end of input".to_string(),
        };
        Diagnostic::error(self.span(), format!("expected {wanted}, found {found}"))
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok, wanted: &str) -> PResult<Span> {
        if self.eat(&t) {
            Ok(self.prev_span())
        } else {
            Err(self.unexpected(wanted))
        }
    }

    fn ident(&mut self, wanted: &str) -> PResult<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.unexpected(wanted)),
        }
    }

    fn keyword(&mut self, kw: &str) -> PResult<()> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.unexpected(&format!("`{kw}`"))),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn int(&mut self, wanted: &str) -> PResult<usize> {
        match self.peek() {
            Some(Tok::Int(s)) => {
                let span = self.span();
                let n = s.parse().map_err(|_| Diagnostic::error(span, "integer too large"))?;
                self.pos += 1;
                Ok(n)
            }
            _ => Err(self.unexpected(wanted)),
        }
    }

    /// A 1-based position, returned 0-based.
    fn position(&mut self) -> PResult<usize> {
        let span = self.span();
        match self.int("a position")? {
            0 => Err(Diagnostic::error(span, "positions are numbered from 1")),
            n => Ok(n - 1),
        }
    }

    fn term(&mut self) -> PResult<Term> {
        let t = match self.peek() {
            Some(Tok::Ident(s)) => Term::var(s),
            Some(Tok::Int(s)) | Some(Tok::Str(s)) => Term::constant(s),
            _ => return Err(self.unexpected("a variable or constant")),
        };
        self.pos += 1;
        Ok(t)
    }

    fn list<T>(&mut self, mut item: impl FnMut(&mut Self) -> PResult<T>) -> PResult<Vec<T>> {
        self.expect(Tok::LParen, "`(`")?;
        let mut out = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(out);
        }
        loop {
            out.push(item(self)?);
            if self.eat(&Tok::RParen) {
                return Ok(out);
            }
            self.expect(Tok::Comma, "`,` or `)`")?;
        }
    }

    fn atom(&mut self) -> PResult<(Atom, Span)> {
        let start = self.span();
        let rel = self.ident("a relation name")?;
        let terms = self.list(Self::term)?;
        Ok((Atom::new(&rel, terms), start.to(self.prev_span())))
    }

    fn atoms(&mut self) -> PResult<Vec<(Atom, Span)>> {
        let mut out = vec![self.atom()?];
        while self.eat(&Tok::Comma) {
            out.push(self.atom()?);
        }
        Ok(out)
    }

    fn end_statement(&mut self) {
        self.eat(&Tok::Semi);
    }

    /// Skips to just past the next `;` or up to the next statement keyword,
    /// moving at least past the token the failed statement began with.
    fn recover(&mut self, start: usize) {
        if self.pos == start {
            self.pos += 1;
        }
        while let Some(t) = self.peek() {
            match t {
                Tok::Semi => {
                    self.pos += 1;
                    return;
                }
                Tok::Ident(s) if KEYWORDS.contains(&s.as_str()) => return,
                _ => self.pos += 1,
            }
        }
    }

    fn record(&mut self, kind: StatementKind, index: usize, start: Span) {
        let span = start.to(self.prev_span());
        self.file.statements.push(Statement { kind, index, span });
    }

    fn statement(&mut self) -> PResult<()> {
        let start = self.span();
        let kw = self.ident("a statement keyword")?;
        let doc = &self.file.document;
        let (kind, index) = match kw.as_str() {
            "relation" => (StatementKind::Relation, doc.schema.signature.len()),
            "method" => (StatementKind::Method, doc.schema.methods.len()),
            "id" | "tgd" | "fd" => (StatementKind::Constraint, doc.schema.constraints.len()),
            "query" => (StatementKind::Query, doc.queries.len()),
            "fact" => (StatementKind::Fact, self.file.facts.len()),
            "plan" => (StatementKind::Plan, doc.plans.len()),
            other => {
                return Err(Diagnostic::error(
                    start,
                    format!("unknown statement `{other}`; expected one of {}", KEYWORDS.join(", ")),
                ))
            }
        };
        match kw.as_str() {
            "relation" => self.relation(start)?,
            "method" => self.method()?,
            "id" => self.id()?,
            "tgd" => {
                let body = self.atoms()?;
                self.expect(Tok::Arrow, "`->`")?;
                let head = self.atoms()?;
                let tgd = Tgd::new(strip(body), strip(head));
                self.file.document.schema.constraints.push(tgd.into());
            }
            "fd" => {
                let rel = self.ident("a relation name")?;
                self.expect(Tok::Colon, "`:`")?;
                let mut det = vec![self.position()?];
                while self.eat(&Tok::Comma) {
                    det.push(self.position()?);
                }
                self.expect(Tok::Arrow, "`->`")?;
                let j = self.position()?;
                self.file.document.schema.constraints.push(Fd::new(&rel, &det, j).into());
            }
            "query" => self.query()?,
            "fact" => self.fact()?,
            _ => self.plan()?,
        }
        if kw != "plan" {
            self.end_statement();
        }
        self.record(kind, index, start);
        Ok(())
    }

    fn relation(&mut self, start: Span) -> PResult<()> {
        let name = self.ident("a relation name")?;
        self.expect(Tok::Slash, "`/`")?;
        let arity = self.int("an arity")?;
        self.file
            .document
            .schema
            .signature
            .add(&name, arity)
            .map_err(|e| Diagnostic::error(start.to(self.prev_span()), e.to_string()))
    }

    fn method(&mut self) -> PResult<()> {
        let name = self.ident("a method name")?;
        self.keyword("on")?;
        let rel = self.ident("a relation name")?;
        self.keyword("inputs")?;
        let inputs = self.list(Self::position)?;
        let bound = if self.at_keyword("bound") || self.at_keyword("lowerbound") {
            let upper = self.at_keyword("bound");
            self.pos += 1;
            let span = self.span();
            let k = self.int("a bound")?;
            let k = u32::try_from(k).map_err(|_| Diagnostic::error(span, "bound too large"))?;
            Some(if upper { Bound::Result(k) } else { Bound::LowerOnly(k) })
        } else {
            None
        };
        self.file
            .document
            .schema
            .methods
            .push(AccessMethod::new(&name, &rel, &inputs, bound));
        Ok(())
    }

    fn id(&mut self) -> PResult<()> {
        let (body, bspan) = self.atom()?;
        self.expect(Tok::Arrow, "`->`")?;
        let (head, hspan) = self.atom()?;
        if self.peek() == Some(&Tok::Comma) {
            return Err(Diagnostic::error(
                self.span(),
                "an ID has a single head atom; use `tgd` for several",
            ));
        }
        for (a, span) in [(&body, bspan), (&head, hspan)] {
            if let Some(v) = repeated_variable(a) {
                return Err(Diagnostic::error(span, format!("repeated variable `{v}` in ID atom")));
            }
            if a.terms.iter().any(|t| matches!(t, Term::Const(_))) {
                return Err(Diagnostic::error(span, "constants are not allowed in IDs"));
            }
        }
        self.file
            .document
            .schema
            .constraints
            .push(Dependency::Tgd(Tgd::new(vec![body], vec![head])));
        Ok(())
    }

    fn query(&mut self) -> PResult<()> {
        let name = self.ident("a query name")?;
        let free = self.list(|p| p.ident("a variable"))?;
        self.expect(Tok::Turnstile, "`:-`")?;
        let atoms = strip(self.atoms()?);
        let free: Vec<&str> = free.iter().map(String::as_str).collect();
        self.file.document.queries.push(ConjunctiveQuery::new(&name, &free, atoms));
        Ok(())
    }

    fn fact(&mut self) -> PResult<()> {
        let (atom, span) = self.atom()?;
        let tuple = atom
            .terms
            .iter()
            .map(|t| match t {
                Term::Const(c) => Ok(Value::Const(c.clone())),
                Term::Var(v) => Err(Diagnostic::error(
                    span,
                    format!("facts must be ground; `{v}` is a variable (quote it for a constant)"),
                )),
            })
            .collect::<PResult<Vec<_>>>()?;
        let fact = Fact {
            relation: atom.relation,
            tuple,
        };
        self.file.document.facts.insert(fact.clone());
        self.file.facts.push(fact);
        Ok(())
    }

    fn plan(&mut self) -> PResult<()> {
        let name = self.ident("a plan name")?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut commands = Vec::new();
        let output = loop {
            if self.at_keyword("return") {
                self.pos += 1;
                let out = self.ident("a table name")?;
                self.eat(&Tok::Semi);
                self.expect(Tok::RBrace, "`}`")?;
                break out;
            }
            let target = self.ident("a table name or `return`")?;
            if self.eat(&Tok::Assign) {
                let expr = self.expr()?;
                commands.push(Command::Middleware {
                    target: target.into(),
                    expr,
                });
            } else {
                self.expect(Tok::AccessArrow, "`<=` or `:=`")?;
                let method = self.ident("a method name")?;
                self.expect(Tok::LParen, "`(`")?;
                self.keyword("in")?;
                self.expect(Tok::Eq, "`=`")?;
                let mut input_map = Vec::new();
                if !self.eat(&Tok::RParen) {
                    loop {
                        input_map.push(self.position()?);
                        if self.eat(&Tok::RParen) {
                            break;
                        }
                        self.expect(Tok::Comma, "`,` or `)`")?;
                    }
                }
                self.expect(Tok::From, "`<-`")?;
                let source = self.expr()?;
                commands.push(Command::Access {
                    target: target.into(),
                    method: method.into(),
                    input_map,
                    source,
                });
            }
            self.eat(&Tok::Semi);
        };
        self.file.document.plans.push(Plan {
            name: name.into(),
            commands,
            output: output.into(),
        });
        Ok(())
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut e = self.expr_term()?;
        while self.eat(&Tok::Pipe) {
            e = e.union(self.expr_term()?);
        }
        Ok(e)
    }

    fn expr_term(&mut self) -> PResult<Expr> {
        if self.at_keyword("unit") {
            self.pos += 1;
            return Ok(Expr::unit());
        }
        if self.at_keyword("empty") {
            self.pos += 1;
            return Ok(Expr::empty());
        }
        self.expect(Tok::LBrace, "`unit`, `empty` or `{`")?;
        let head = self.list(Self::term)?;
        let body = if self.eat(&Tok::Turnstile) {
            strip(self.atoms()?)
        } else {
            Vec::new()
        };
        self.expect(Tok::RBrace, "`}`")?;
        Ok(Expr {
            blocks: vec![Block::new(head, body)],
        })
    }
}

fn strip(atoms: Vec<(Atom, Span)>) -> Vec<Atom> {
    atoms.into_iter().map(|(a, _)| a).collect()
}

fn repeated_variable(a: &Atom) -> Option<Name> {
    let mut seen = BTreeSet::new();
    a.variables().find(|v| !seen.insert((*v).clone())).cloned()
}

/// Parses a source file, collecting every syntax error.
pub fn parse(src: &str) -> Result<SourceFile, Vec<Diagnostic>> {
    let toks = tokenize(src).map_err(|d| vec![d])?;
    let end = toks.last().map(|t| Span {
        offset: t.span.offset + t.span.len,
        len: 0,
        col: t.span.col + t.span.len,
        ..t.span
    });
    let mut p = Parser {
        toks,
        pos: 0,
        end: end.unwrap_or(Span {
            line: 1,
            col: 1,
            ..Span::default()
        }),
        file: SourceFile {
            document: Document::default(),
            statements: Vec::new(),
            facts: Vec::new(),
        },
        diags: Vec::new(),
    };
    while p.peek().is_some() {
        if p.eat(&Tok::Semi) {
            continue;
        }
        let start = p.pos;
        if let Err(d) = p.statement() {
            p.diags.push(d);
            p.recover(start);
        }
    }
    if p.diags.is_empty() {
        Ok(p.file)
    } else {
        Err(p.diags)
    }
}

/// Parses and then checks the schema, queries and facts against the
/// declared signature.
pub fn parse_and_check(src: &str) -> Result<SourceFile, Vec<Diagnostic>> {
    let file = parse(src)?;
    let doc = &file.document;
    let mut diags: Vec<Diagnostic> = validate_schema(&doc.schema)
        .into_iter()
        .map(|d| {
            let span = match d.subject {
                Subject::Relation(i) => file.span_of(StatementKind::Relation, i),
                Subject::Constraint(i) => file.span_of(StatementKind::Constraint, i),
                Subject::Method(i) => file.span_of(StatementKind::Method, i),
            };
            Diagnostic::error(span, d.message)
        })
        .collect();
    for (i, q) in doc.queries.iter().enumerate() {
        if let Err(e) = q.validate(&doc.schema.signature) {
            diags.push(Diagnostic::error(file.span_of(StatementKind::Query, i), e.to_string()));
        }
    }
    let mut seen = BTreeSet::new();
    for (i, q) in doc.queries.iter().enumerate() {
        if !seen.insert(q.name.clone()) {
            diags.push(Diagnostic::error(
                file.span_of(StatementKind::Query, i),
                format!("query `{}` is declared twice", q.name),
            ));
        }
    }
    for (i, f) in file.facts.iter().enumerate() {
        let atom = Atom {
            relation: f.relation.clone(),
            terms: f.tuple.iter().map(|_| Term::var("_")).collect(),
        };
        if let Err(e) = doc.schema.signature.check_atom(&atom) {
            diags.push(Diagnostic::error(file.span_of(StatementKind::Fact, i), e.to_string()));
        }
    }
    if diags.is_empty() {
        Ok(file)
    } else {
        diags.sort_by_key(|d| d.span.offset);
        Err(diags)
    }
}
