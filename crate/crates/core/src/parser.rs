//! The `.dl` text format: facts, query rules, tgds, egds and FD/key
//! shorthands, plus the matching serializers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::model::{name, Atom, Cq, DependencySet, Egd, Instance, ModelError, Name, Term, Tgd, Ucq};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{col}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    #[error("unexpected character `{0}`")]
    BadChar(char),
    #[error("unterminated string literal")]
    UnterminatedString,
    #[error("expected {expected}, found {found}")]
    Expected { expected: String, found: String },
    #[error("predicate `{pred}` has arity {found} here but {expected} at {first_line}:{first_col}")]
    Arity {
        pred: String,
        expected: usize,
        found: usize,
        first_line: usize,
        first_col: usize,
    },
    #[error("unsafe rule: head variable `{0}` does not occur in the body")]
    UnsafeHead(String),
    #[error("query head arguments must be variables, found `{0}`")]
    HeadNotVariable(String),
    #[error("fact contains variable `{0}`")]
    NonGroundFact(String),
    #[error("null `{0}` is only allowed in facts")]
    NullOutsideFact(String),
    #[error("egd side `{0}` must be a body variable")]
    EgdTerm(String),
    #[error("degenerate egd `{0} = {0}`")]
    DegenerateEgd(String),
    #[error("`exists` variable `{0}` also occurs in the body")]
    ExistsInBody(String),
    #[error("rules for `{0}` have different head arities")]
    UcqHeads(String),
    #[error("fd/key on `{0}` whose arity is unknown")]
    UnknownPredicate(String),
    #[error("position {pos} out of range for `{pred}`/{arity}")]
    Position { pred: String, pos: usize, arity: usize },
    #[error("{0}")]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Str(String),
    LParen,
    RParen,
    Comma,
    Dot,
    ColonDash,
    Colon,
    Arrow,
    Eq,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Str(s) => write!(f, "string \"{s}\""),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::ColonDash => f.write_str("`:-`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::Eq => f.write_str("`=`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1usize, 1usize);
    let err = |line, col, kind| ParseError { line, col, kind };
    while let Some(&c) = chars.peek() {
        let (l0, c0) = (line, col);
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let ch = chars.next();
            if ch == Some('\n') {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            ch
        };
        let tok = match c {
            c if c.is_whitespace() => {
                bump(&mut chars);
                continue;
            }
            '%' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump(&mut chars);
                }
                continue;
            }
            '(' => {
                bump(&mut chars);
                Tok::LParen
            }
            ')' => {
                bump(&mut chars);
                Tok::RParen
            }
            ',' => {
                bump(&mut chars);
                Tok::Comma
            }
            '.' => {
                bump(&mut chars);
                Tok::Dot
            }
            '=' => {
                bump(&mut chars);
                Tok::Eq
            }
            ':' => {
                bump(&mut chars);
                if chars.peek() == Some(&'-') {
                    bump(&mut chars);
                    Tok::ColonDash
                } else {
                    Tok::Colon
                }
            }
            '-' => {
                bump(&mut chars);
                if chars.peek() == Some(&'>') {
                    bump(&mut chars);
                    Tok::Arrow
                } else {
                    return Err(err(l0, c0, ParseErrorKind::BadChar('-')));
                }
            }
            '"' => {
                bump(&mut chars);
                let mut s = String::new();
                loop {
                    match bump(&mut chars) {
                        None => return Err(err(l0, c0, ParseErrorKind::UnterminatedString)),
                        Some('"') => break,
                        Some('\\') => match bump(&mut chars) {
                            Some('n') => s.push('\n'),
                            Some(other) => s.push(other),
                            None => return Err(err(l0, c0, ParseErrorKind::UnterminatedString)),
                        },
                        Some(ch) => s.push(ch),
                    }
                }
                Tok::Str(s)
            }
            c if c.is_ascii_alphanumeric() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        bump(&mut chars);
                    } else {
                        break;
                    }
                }
                Tok::Ident(s)
            }
            other => return Err(err(l0, c0, ParseErrorKind::BadChar(other))),
        };
        out.push(Spanned { tok, line: l0, col: c0 });
    }
    out.push(Spanned { tok: Tok::Eof, line, col });
    Ok(out)
}

/// An FD or key declaration as written, kept for display.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FdDecl {
    pub predicate: Name,
    pub lhs: Vec<usize>,
    pub rhs: Vec<usize>,
    pub is_key: bool,
    /// Indices into `Program::deps.egds` produced by this declaration.
    pub egds: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct Program {
    /// Queries in order of first appearance; same-named rules are merged.
    pub queries: Vec<Ucq>,
    pub deps: DependencySet,
    pub facts: Instance,
    pub fd_decls: Vec<FdDecl>,
    pub arities: BTreeMap<Name, usize>,
}

impl Program {
    pub fn query(&self, name: &str) -> Option<&Ucq> {
        self.queries.iter().find(|q| &*q.name == name)
    }

    /// The named query when it has exactly one disjunct.
    pub fn cq(&self, name: &str) -> Option<Cq> {
        match self.query(name)?.disjuncts.as_slice() {
            [only] => Some(only.clone()),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Ctx {
    Fact,
    Rule,
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    arities: BTreeMap<Name, (usize, usize, usize)>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn here(&self) -> (usize, usize) {
        let s = &self.toks[self.pos];
        (s.line, s.col)
    }

    fn err_here(&self, kind: ParseErrorKind) -> ParseError {
        let (line, col) = self.here();
        ParseError { line, col, kind }
    }

    fn next(&mut self) -> Spanned {
        let s = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        s
    }

    fn expect(&mut self, tok: Tok) -> PResult<()> {
        if *self.peek() == tok {
            self.next();
            Ok(())
        } else {
            Err(self.err_here(ParseErrorKind::Expected {
                expected: tok.to_string(),
                found: self.peek().to_string(),
            }))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, usize, usize)> {
        let s = self.next();
        match s.tok {
            Tok::Ident(id) => Ok((id, s.line, s.col)),
            other => Err(ParseError {
                line: s.line,
                col: s.col,
                kind: ParseErrorKind::Expected {
                    expected: what.to_string(),
                    found: other.to_string(),
                },
            }),
        }
    }

    fn term(&mut self, ctx: Ctx) -> PResult<Term> {
        let s = self.next();
        let at = |kind| ParseError { line: s.line, col: s.col, kind };
        match s.tok {
            Tok::Str(v) => Ok(Term::Const(name(&v))),
            Tok::Ident(id) => {
                let first = id.chars().next().unwrap_or('_');
                if first.is_ascii_uppercase() {
                    Ok(Term::Var(name(&id)))
                } else if first == '_' {
                    match id.strip_prefix("_n").and_then(|d| d.parse::<u32>().ok()) {
                        Some(n) if ctx == Ctx::Fact => Ok(Term::Null(n)),
                        Some(_) => Err(at(ParseErrorKind::NullOutsideFact(id))),
                        None => Err(at(ParseErrorKind::BadChar('_'))),
                    }
                } else {
                    Ok(Term::Const(name(&id)))
                }
            }
            other => Err(at(ParseErrorKind::Expected {
                expected: "a term".into(),
                found: other.to_string(),
            })),
        }
    }

    fn check_arity(&mut self, pred: &str, arity: usize, line: usize, col: usize) -> PResult<()> {
        match self.arities.get(pred) {
            Some(&(a, l, c)) if a != arity => Err(ParseError {
                line,
                col,
                kind: ParseErrorKind::Arity {
                    pred: pred.to_string(),
                    expected: a,
                    found: arity,
                    first_line: l,
                    first_col: c,
                },
            }),
            Some(_) => Ok(()),
            None => {
                self.arities.insert(name(pred), (arity, line, col));
                Ok(())
            }
        }
    }

    fn atom(&mut self, ctx: Ctx) -> PResult<Atom> {
        let (atom, line, col) = self.atom_raw(ctx)?;
        self.check_arity(&atom.predicate, atom.arity(), line, col)?;
        Ok(atom)
    }

    fn atom_raw(&mut self, ctx: Ctx) -> PResult<(Atom, usize, usize)> {
        let (pred, line, col) = self.ident("a predicate")?;
        let mut args = Vec::new();
        if *self.peek() == Tok::LParen {
            self.next();
            if *self.peek() != Tok::RParen {
                loop {
                    args.push(self.term(ctx)?);
                    if *self.peek() == Tok::Comma {
                        self.next();
                    } else {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen)?;
        }
        Ok((Atom::new(&pred, args), line, col))
    }

    fn atom_list(&mut self) -> PResult<Vec<Atom>> {
        let mut atoms = vec![self.atom(Ctx::Rule)?];
        while *self.peek() == Tok::Comma {
            self.next();
            atoms.push(self.atom(Ctx::Rule)?);
        }
        Ok(atoms)
    }

    fn positions(&mut self) -> PResult<Vec<(usize, usize, usize)>> {
        let mut out = Vec::new();
        loop {
            let (id, line, col) = self.ident("a position")?;
            let pos = id.parse::<usize>().map_err(|_| ParseError {
                line,
                col,
                kind: ParseErrorKind::Expected {
                    expected: "a position number".into(),
                    found: format!("`{id}`"),
                },
            })?;
            out.push((pos, line, col));
            if *self.peek() == Tok::Comma {
                self.next();
            } else {
                return Ok(out);
            }
        }
    }
}

struct PendingFd {
    predicate: String,
    lhs: Vec<(usize, usize, usize)>,
    rhs: Vec<(usize, usize, usize)>,
    is_key: bool,
    line: usize,
    col: usize,
}

/// Parses a whole program.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        arities: BTreeMap::new(),
    };
    let mut queries: Vec<(String, Vec<Cq>, usize, usize)> = Vec::new();
    let mut tgds = Vec::new();
    let mut egds = Vec::new();
    let mut facts = Instance::new();
    let mut pending_fds = Vec::new();

    while *p.peek() != Tok::Eof {
        let (line, col) = p.here();
        let at = |kind| ParseError { line, col, kind };
        if let (Tok::Ident(kw), Tok::Ident(_)) = (p.peek().clone(), p.peek_at(1).clone()) {
            if kw == "fd" || kw == "key" {
                p.next();
                let (pred, _, _) = p.ident("a predicate")?;
                p.expect(Tok::Colon)?;
                let lhs = p.positions()?;
                let rhs = if kw == "fd" {
                    p.expect(Tok::Arrow)?;
                    p.positions()?
                } else {
                    Vec::new()
                };
                p.expect(Tok::Dot)?;
                pending_fds.push(PendingFd {
                    predicate: pred,
                    lhs,
                    rhs,
                    is_key: kw == "key",
                    line,
                    col,
                });
                continue;
            }
        }

        // Boolean query head without parentheses: `q :- ...`.
        if matches!(p.peek(), Tok::Ident(_)) && *p.peek_at(1) == Tok::ColonDash {
            let (qname, _, _) = p.ident("a query name")?;
            p.next();
            let body = p.atom_list()?;
            p.expect(Tok::Dot)?;
            let cq = Cq::new(&qname, Vec::new(), body).map_err(|e| at(e.into()))?;
            push_query(&mut queries, qname, cq, line, col)?;
            continue;
        }

        let head_start = p.pos;
        let mut first = p.atom_raw(Ctx::Rule);
        if first.is_err() {
            // Nulls only parse in facts; retry in that context.
            p.pos = head_start;
            if p.atom_raw(Ctx::Fact).is_ok() && *p.peek() == Tok::Dot {
                first = Ok((Atom::new("_", Vec::new()), line, col));
            } else if let Err(e) = first {
                return Err(e);
            }
        }
        match p.peek() {
            Tok::ColonDash => {
                let (head, _, _) = first?;
                p.next();
                let mut free = Vec::new();
                for t in &head.args {
                    match t {
                        Term::Var(v) => free.push(v.clone()),
                        other => return Err(at(ParseErrorKind::HeadNotVariable(other.to_string()))),
                    }
                }
                let body = p.atom_list()?;
                p.expect(Tok::Dot)?;
                let body_vars: BTreeSet<&Name> = body.iter().flat_map(|a| a.variables()).collect();
                if let Some(v) = free.iter().find(|v| !body_vars.contains(v)) {
                    return Err(at(ParseErrorKind::UnsafeHead(v.to_string())));
                }
                let cq = Cq::new(&head.predicate, free, body).map_err(|e| at(e.into()))?;
                push_query(&mut queries, head.predicate.to_string(), cq, line, col)?;
            }
            Tok::Dot => {
                // Re-parse in fact context so nulls are accepted.
                p.pos = head_start;
                let fact = p.atom(Ctx::Fact)?;
                p.expect(Tok::Dot)?;
                if let Some(v) = fact.args.iter().find(|t| t.is_var()) {
                    return Err(at(ParseErrorKind::NonGroundFact(v.to_string())));
                }
                facts.insert(fact);
            }
            Tok::Comma | Tok::Arrow => {
                let (a, al, ac) = first?;
                p.check_arity(&a.predicate, a.arity(), al, ac)?;
                let mut body = vec![a];
                while *p.peek() == Tok::Comma {
                    p.next();
                    body.push(p.atom(Ctx::Rule)?);
                }
                p.expect(Tok::Arrow)?;
                if matches!(p.peek(), Tok::Ident(_)) && *p.peek_at(1) == Tok::Eq {
                    let (l, ll, lc) = p.ident("a variable")?;
                    p.expect(Tok::Eq)?;
                    let (r, rl, rc) = p.ident("a variable")?;
                    p.expect(Tok::Dot)?;
                    let body_vars: BTreeSet<&str> =
                        body.iter().flat_map(|a| a.variables()).map(|v| &**v).collect();
                    for (side, sl, sc) in [(&l, ll, lc), (&r, rl, rc)] {
                        if !body_vars.contains(side.as_str()) {
                            return Err(ParseError {
                                line: sl,
                                col: sc,
                                kind: ParseErrorKind::EgdTerm(side.clone()),
                            });
                        }
                    }
                    if l == r {
                        return Err(at(ParseErrorKind::DegenerateEgd(l)));
                    }
                    egds.push(Egd::new(body, &l, &r).map_err(|e| at(e.into()))?);
                } else {
                    let mut declared = Vec::new();
                    if matches!(p.peek(), Tok::Ident(s) if s == "exists")
                        && matches!(p.peek_at(1), Tok::Ident(s) if s.starts_with(|c: char| c.is_ascii_uppercase()))
                    {
                        p.next();
                        loop {
                            declared.push(p.ident("a variable")?);
                            if *p.peek() == Tok::Comma {
                                p.next();
                            } else {
                                break;
                            }
                        }
                        p.expect(Tok::Dot)?;
                    }
                    let head = p.atom_list()?;
                    p.expect(Tok::Dot)?;
                    let body_vars: BTreeSet<&str> =
                        body.iter().flat_map(|a| a.variables()).map(|v| &**v).collect();
                    for (v, vl, vc) in &declared {
                        if body_vars.contains(v.as_str()) {
                            return Err(ParseError {
                                line: *vl,
                                col: *vc,
                                kind: ParseErrorKind::ExistsInBody(v.clone()),
                            });
                        }
                    }
                    tgds.push(Tgd::new(body, head).map_err(|e| at(e.into()))?);
                }
            }
            _ => {
                first?;
                return Err(p.err_here(ParseErrorKind::Expected {
                    expected: "`.`, `:-`, `,` or `->`".into(),
                    found: p.peek().to_string(),
                }));
            }
        }
    }

    let mut fd_decls = Vec::new();
    for fd in pending_fds {
        let at = |kind| ParseError { line: fd.line, col: fd.col, kind };
        let arity = p
            .arities
            .get(fd.predicate.as_str())
            .map(|e| e.0)
            .ok_or_else(|| at(ParseErrorKind::UnknownPredicate(fd.predicate.clone())))?;
        for &(pos, line, col) in fd.lhs.iter().chain(&fd.rhs) {
            if pos == 0 || pos > arity {
                return Err(ParseError {
                    line,
                    col,
                    kind: ParseErrorKind::Position {
                        pred: fd.predicate.clone(),
                        pos,
                        arity,
                    },
                });
            }
        }
        let lhs: BTreeSet<usize> = fd.lhs.iter().map(|e| e.0).collect();
        let rhs: BTreeSet<usize> = if fd.is_key {
            (1..=arity).filter(|i| !lhs.contains(i)).collect()
        } else {
            fd.rhs.iter().map(|e| e.0).filter(|i| !lhs.contains(i)).collect()
        };
        let mut produced = Vec::new();
        for &j in &rhs {
            produced.push(egds.len());
            egds.push(fd_egd(&fd.predicate, arity, &lhs, j));
        }
        fd_decls.push(FdDecl {
            predicate: name(&fd.predicate),
            lhs: lhs.into_iter().collect(),
            rhs: rhs.into_iter().collect(),
            is_key: fd.is_key,
            egds: produced,
        });
    }

    let queries = queries
        .into_iter()
        .map(|(n, disjuncts, line, col)| {
            Ucq::new(&n, disjuncts).map_err(|e| ParseError {
                line,
                col,
                kind: e.into(),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(Program {
        queries,
        deps: DependencySet::new(tgds, egds),
        facts,
        fd_decls,
        arities: p.arities.into_iter().map(|(k, v)| (k, v.0)).collect(),
    })
}

fn push_query(
    queries: &mut Vec<(String, Vec<Cq>, usize, usize)>,
    qname: String,
    cq: Cq,
    line: usize,
    col: usize,
) -> PResult<()> {
    match queries.iter_mut().find(|q| q.0 == qname) {
        Some(existing) => {
            if existing.1[0].free.len() != cq.free.len() {
                return Err(ParseError {
                    line,
                    col,
                    kind: ParseErrorKind::UcqHeads(qname),
                });
            }
            existing.1.push(cq);
        }
        None => queries.push((qname, vec![cq], line, col)),
    }
    Ok(())
}

/// The egd `R(X1..Xn), R(Y1..Yn) -> Xj = Yj` with `Xi = Yi` for `i ∈ lhs`.
pub fn fd_egd(pred: &str, arity: usize, lhs: &BTreeSet<usize>, rhs: usize) -> Egd {
    let first: Vec<Term> = (1..=arity).map(|i| Term::var(&format!("X{i}"))).collect();
    let second: Vec<Term> = (1..=arity)
        .map(|i| {
            if lhs.contains(&i) {
                Term::var(&format!("X{i}"))
            } else {
                Term::var(&format!("Y{i}"))
            }
        })
        .collect();
    Egd::new(
        vec![Atom::new(pred, first), Atom::new(pred, second)],
        &format!("X{rhs}"),
        &format!("Y{rhs}"),
    )
    .expect("generated fd egd is well formed")
}

fn write_atoms(out: &mut String, atoms: &[Atom]) {
    for (i, a) in atoms.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{a}");
    }
}

pub fn serialize_cq(q: &Cq) -> String {
    let mut out = String::new();
    let _ = write!(out, "{}(", q.name);
    for (i, v) in q.free.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(v);
    }
    out.push_str(") :- ");
    write_atoms(&mut out, q.atoms());
    out.push('.');
    out
}

pub fn serialize_ucq(q: &Ucq) -> String {
    q.disjuncts
        .iter()
        .map(|d| serialize_cq(&d.with_name(&q.name)))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn serialize_tgd(t: &Tgd) -> String {
    let mut out = String::new();
    write_atoms(&mut out, &t.body);
    out.push_str(" -> ");
    write_atoms(&mut out, &t.head);
    out.push('.');
    out
}

pub fn serialize_egd(e: &Egd) -> String {
    let mut out = String::new();
    write_atoms(&mut out, &e.body);
    let _ = write!(out, " -> {} = {}.", e.lhs, e.rhs);
    out
}

pub fn serialize_deps(deps: &DependencySet) -> String {
    let lines: Vec<String> = deps
        .tgds
        .iter()
        .map(serialize_tgd)
        .chain(deps.egds.iter().map(serialize_egd))
        .collect();
    lines.join("\n")
}

pub fn serialize_instance(inst: &Instance) -> String {
    inst.iter()
        .map(|a| format!("{a}."))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_shorthand_expands_to_egd() {
        let p = parse_program("R(a,b,c).\nfd R : 1 -> 3.").unwrap();
        assert_eq!(p.deps.egds.len(), 1);
        let e = &p.deps.egds[0];
        assert_eq!(serialize_egd(e), "R(X1,X2,X3), R(X1,Y2,Y3) -> X3 = Y3.");
        let fd = e.as_fd().unwrap();
        assert_eq!((fd.lhs.clone(), fd.rhs), (vec![1], 3));
    }

    #[test]
    fn key_expands_to_one_fd_per_position() {
        let p = parse_program("key R : 1,2.\nR(a,b,c,d).").unwrap();
        assert_eq!(p.deps.egds.len(), 2);
        assert!(p.fd_decls[0].is_key);
        assert_eq!(p.fd_decls[0].rhs, vec![3, 4]);
    }

    #[test]
    fn query_rule() {
        let p = parse_program("q(X) :- R(X,X).").unwrap();
        let q = p.cq("q").unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(q.free, vec![name("X")]);
    }

    #[test]
    fn tgd_with_existential() {
        let p = parse_program("R(X) -> S(X,Y).").unwrap();
        let t = &p.deps.tgds[0];
        assert_eq!(t.existentials(), BTreeSet::from([name("Y")]));
    }

    #[test]
    fn exists_sugar() {
        let p = parse_program("R(X) -> exists Y. S(X,Y).").unwrap();
        assert_eq!(p.deps.tgds[0].existentials(), BTreeSet::from([name("Y")]));
        let e = parse_program("R(X) -> exists X. S(X,X).").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::ExistsInBody(_)));
    }

    #[test]
    fn running_example_serializes_in_source_order() {
        let p = parse_program("Interest(X,Z), Class(Y,Z) -> Owns(X,Y).").unwrap();
        assert_eq!(
            serialize_deps(&p.deps),
            "Interest(X,Z), Class(Y,Z) -> Owns(X,Y)."
        );
    }

    #[test]
    fn boolean_heads() {
        let a = parse_program("q :- R(X,Y).").unwrap();
        let b = parse_program("q() :- R(X,Y).").unwrap();
        assert_eq!(a.cq("q"), b.cq("q"));
        assert_eq!(serialize_cq(&a.cq("q").unwrap()), "q() :- R(X,Y).");
    }

    #[test]
    fn union_of_rules() {
        let p = parse_program("q(X) :- R(X,Y).\nq(X) :- S(X).").unwrap();
        assert_eq!(p.query("q").unwrap().disjuncts.len(), 2);
        assert!(p.cq("q").is_none());
        let e = parse_program("q(X) :- R(X,Y).\nq(X,Y) :- R(X,Y).").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::UcqHeads(_)));
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse_program("R(a,b).\n  R(a).").unwrap_err();
        assert_eq!((e.line, e.col), (2, 3));
        assert!(matches!(e.kind, ParseErrorKind::Arity { expected: 2, found: 1, .. }));

        let e = parse_program("q(X,W) :- R(X,Y).").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnsafeHead("W".into()));

        let e = parse_program("R(X,Y) -> Y = W.").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::EgdTerm("W".into()));

        let e = parse_program("R(X,Y) -> Y = Y.").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::DegenerateEgd("Y".into()));

        let e = parse_program("R(a,#).").unwrap_err();
        assert_eq!((e.line, e.col, e.kind), (1, 5, ParseErrorKind::BadChar('#')));

        let e = parse_program("R(a,X).").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::NonGroundFact(_)));
    }

    #[test]
    fn comments_strings_and_nulls() {
        let p = parse_program("% a comment\nR(\"hello world\", _n3). % trailing\n").unwrap();
        let atom = p.facts.iter().next().unwrap();
        assert_eq!(atom.args[0], Term::Const(name("hello world")));
        assert_eq!(atom.args[1], Term::Null(3));
        assert_eq!(serialize_instance(&p.facts), "R(\"hello world\",_n3).");
        assert!(parse_program("q(X) :- R(X,_n1).").is_err());
    }

    #[test]
    fn fd_on_unknown_predicate() {
        let e = parse_program("fd R : 1 -> 2.").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::UnknownPredicate(_)));
        let e = parse_program("R(a,b).\nfd R : 1 -> 3.").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::Position { pos: 3, .. }));
    }

    #[test]
    fn query_head_is_not_a_relation() {
        let p = parse_program("q(X) :- R(X,Y).\nq(a,b,c).");
        // A fact over the query name is a relation of its own; no clash with
        // the head arity.
        assert!(p.is_ok());
    }

    #[test]
    fn round_trip() {
        let src = "R(X,Y), S(Y) -> T(X,Z), S(Z).\n\
                   R(X,Y), R(X,Z) -> Y = Z.\n\
                   q(X,Y) :- R(X,Z), S(Z), T(Z,Y).\n\
                   b() :- R(a,\"B c\").\n\
                   R(a,b).";
        let p = parse_program(src).unwrap();
        let mut text = serialize_deps(&p.deps);
        for q in &p.queries {
            text.push('\n');
            text.push_str(&serialize_ucq(q));
        }
        text.push('\n');
        text.push_str(&serialize_instance(&p.facts));
        let p2 = parse_program(&text).unwrap();
        assert_eq!(p.deps, p2.deps);
        assert_eq!(p.queries, p2.queries);
        assert_eq!(p.facts, p2.facts);
    }
}
