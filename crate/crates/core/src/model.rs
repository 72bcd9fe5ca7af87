//! Hypergraph model declarations and the line-oriented model file format.
//!
//! A model file looks like:
//!
//! ```text
//! # diamond with two return edges
//! model diamond-loop
//! initial s0
//! edge a s0 -> s1 s2 label "fork"
//! edge b s1 -> s0
//! edge c s2 -> s0
//! ```
//!
//! Vertices mentioned only by edges are added implicitly unless the parser
//! runs in strict mode. Files written after a transform carry a
//! `transformed` line, which unlocks the reserved `~` character in ids, plus
//! `vedge` lines for virtual edges and `interior` lines for compressed chains.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type VertexId = String;
pub type EdgeId = String;

/// Character reserved for ids minted by transforms.
pub const RESERVED: char = '~';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Real,
    Trivial,
    Virtual,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub head: VertexId,
    /// Sorted, duplicate-free.
    pub tail: Vec<VertexId>,
    pub kind: EdgeKind,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
    /// Vertices folded into this edge by chain compression, in path order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compressed_interior: Vec<VertexId>,
}

impl Edge {
    /// A real edge; the tail is sorted but duplicates are kept so that
    /// validation can report them.
    pub fn real<I, S>(id: &str, head: &str, tail: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with_kind(EdgeKind::Real, id, head, tail)
    }

    pub fn with_kind<I, S>(kind: EdgeKind, id: &str, head: &str, tail: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tail: Vec<String> = tail.into_iter().map(Into::into).collect();
        tail.sort();
        Edge {
            id: id.to_string(),
            head: head.to_string(),
            tail,
            kind,
            label: String::new(),
            compressed_interior: Vec::new(),
        }
    }

    pub fn has_self_loop(&self) -> bool {
        self.tail.binary_search(&self.head).is_ok()
    }

    /// Head plus tail entries.
    pub fn size(&self) -> usize {
        1 + self.tail.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDecl {
    pub name: Option<String>,
    pub vertices: BTreeSet<VertexId>,
    pub initial: VertexId,
    /// Kept sorted by id.
    pub edges: Vec<Edge>,
}

impl ModelDecl {
    pub fn new(initial: &str) -> Self {
        let mut vertices = BTreeSet::new();
        vertices.insert(initial.to_string());
        ModelDecl {
            name: None,
            vertices,
            initial: initial.to_string(),
            edges: Vec::new(),
        }
    }

    /// Adds an edge, declaring its endpoints implicitly.
    pub fn with_edge(mut self, edge: Edge) -> Self {
        self.vertices.insert(edge.head.clone());
        self.vertices.extend(edge.tail.iter().cloned());
        self.edges.push(edge);
        self.sort_edges();
        self
    }

    pub fn sort_edges(&mut self) {
        self.edges.sort_by(|a, b| a.id.cmp(&b.id));
    }

    pub fn edge(&self, id: &str) -> Option<&Edge> {
        self.edges
            .binary_search_by(|e| e.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.edges[i])
    }

    pub fn is_transformed(&self) -> bool {
        self.vertices.iter().any(|v| v.contains(RESERVED))
            || self.edges.iter().any(|e| {
                e.id.contains(RESERVED) || e.compressed_interior.iter().any(|v| v.contains(RESERVED))
            })
    }

    /// Vertices folded into compressed edges; they count toward coverage
    /// without being part of the vertex set.
    pub fn interior_vertices(&self) -> BTreeSet<VertexId> {
        self.edges
            .iter()
            .flat_map(|e| e.compressed_interior.iter().cloned())
            .collect()
    }
}

/// Vertices minted by transforms carry the reserved character.
pub fn is_virtual_vertex(id: &str) -> bool {
    id.contains(RESERVED)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Violation {
    UnknownVertex(VertexId),
    EmptyTail(EdgeId),
    DuplicateEdgeId(EdgeId),
    DuplicateTailVertex { edge: EdgeId, vertex: VertexId },
    TrivialEdgeInModel(EdgeId),
    InteriorIsVertex { edge: EdgeId, vertex: VertexId },
    BadId(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownVertex(v) => write!(f, "unknown vertex `{v}`"),
            Violation::EmptyTail(e) => write!(f, "edge `{e}` has an empty tail"),
            Violation::DuplicateEdgeId(e) => write!(f, "duplicate edge id `{e}`"),
            Violation::DuplicateTailVertex { edge, vertex } => {
                write!(f, "edge `{edge}` lists `{vertex}` more than once")
            }
            Violation::TrivialEdgeInModel(e) => {
                write!(f, "edge `{e}` is trivial; trivial edges are added by the engine")
            }
            Violation::InteriorIsVertex { edge, vertex } => {
                write!(f, "interior `{vertex}` of edge `{edge}` is also a vertex")
            }
            Violation::BadId(id) => write!(f, "malformed id `{id}`"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: duplicate edge id `{id}`")]
    DuplicateEdge { line: usize, id: String },
    #[error("line {line}: edge `{edge}` lists tail vertex `{vertex}` twice")]
    DuplicateTail { line: usize, edge: String, vertex: String },
    #[error("line {line}: edge `{edge}` has an empty tail")]
    EmptyTail { line: usize, edge: String },
    #[error("line {line}: `{id}` uses the reserved character `~`")]
    ReservedId { line: usize, id: String },
    #[error("line {line}: vertex `{vertex}` is not declared")]
    UndeclaredVertex { line: usize, vertex: String },
    #[error("missing `initial` line")]
    MissingInitial,
    #[error("invalid model: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Require every vertex to be declared with a `vertex` or `initial` line.
    pub strict_vertices: bool,
}

pub fn parse_model(text: &str) -> Result<ModelDecl, ModelError> {
    parse_model_with(text, ParseOptions::default())
}

fn valid_id(s: &str, allow_reserved: bool) -> bool {
    !s.is_empty()
        && s.chars().all(|c| {
            c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-') || (allow_reserved && c == RESERVED)
        })
}

/// Splits a line into tokens; a `"..."` token keeps its quotes stripped and
/// is returned as `Quoted`. `#` outside quotes ends the line.
#[derive(Debug, PartialEq)]
enum Token {
    Word(String),
    Quoted(String),
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Token>, ModelError> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '#' {
            break;
        } else if c == '"' {
            chars.next();
            let mut s = String::new();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some('\\') => match chars.next() {
                        Some(e) => s.push(e),
                        None => {
                            return Err(ModelError::Syntax {
                                line: lineno,
                                msg: "unterminated escape".into(),
                            })
                        }
                    },
                    Some(ch) => s.push(ch),
                    None => {
                        return Err(ModelError::Syntax {
                            line: lineno,
                            msg: "unterminated string".into(),
                        })
                    }
                }
            }
            out.push(Token::Quoted(s));
        } else {
            let mut s = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() || ch == '"' || ch == '#' {
                    break;
                }
                s.push(ch);
                chars.next();
            }
            out.push(Token::Word(s));
        }
    }
    Ok(out)
}

pub fn parse_model_with(text: &str, opts: ParseOptions) -> Result<ModelDecl, ModelError> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let toks = tokenize(raw, i + 1)?;
        if !toks.is_empty() {
            lines.push((i + 1, toks));
        }
    }
    let transformed = lines
        .iter()
        .any(|(_, t)| t.len() == 1 && t[0] == Token::Word("transformed".into()));

    let syntax = |line: usize, msg: &str| ModelError::Syntax {
        line,
        msg: msg.to_string(),
    };
    let check_id = |line: usize, s: &str| -> Result<String, ModelError> {
        if valid_id(s, transformed) {
            Ok(s.to_string())
        } else if valid_id(s, true) {
            Err(ModelError::ReservedId {
                line,
                id: s.to_string(),
            })
        } else {
            Err(syntax(line, &format!("malformed id `{s}`")))
        }
    };

    let mut name = None;
    let mut initial: Option<String> = None;
    let mut declared = BTreeSet::new();
    let mut edges: BTreeMap<String, (usize, Edge)> = BTreeMap::new();
    let mut interiors: Vec<(usize, String, Vec<String>)> = Vec::new();

    for (lineno, toks) in &lines {
        let lineno = *lineno;
        let words: Vec<&str> = toks
            .iter()
            .map(|t| match t {
                Token::Word(w) => w.as_str(),
                Token::Quoted(_) => "\"",
            })
            .collect();
        match words[0] {
            "transformed" if words.len() == 1 => {}
            "model" => {
                if words.len() != 2 {
                    return Err(syntax(lineno, "expected `model <name>`"));
                }
                if name.is_some() {
                    return Err(syntax(lineno, "duplicate `model` line"));
                }
                name = Some(check_id(lineno, words[1])?);
            }
            "initial" => {
                if words.len() != 2 {
                    return Err(syntax(lineno, "expected `initial <vertex>`"));
                }
                if initial.is_some() {
                    return Err(syntax(lineno, "duplicate `initial` line"));
                }
                let v = check_id(lineno, words[1])?;
                declared.insert(v.clone());
                initial = Some(v);
            }
            "vertex" => {
                if words.len() != 2 {
                    return Err(syntax(lineno, "expected `vertex <id>`"));
                }
                declared.insert(check_id(lineno, words[1])?);
            }
            "edge" | "vedge" => {
                let kind = if words[0] == "edge" {
                    EdgeKind::Real
                } else {
                    EdgeKind::Virtual
                };
                if words.len() < 4 || words[3] != "->" {
                    return Err(syntax(lineno, "expected `edge <id> <head> -> <tail...>`"));
                }
                let id = check_id(lineno, words[1])?;
                let head = check_id(lineno, words[2])?;
                let mut tail = Vec::new();
                let mut label = String::new();
                let mut i = 4;
                while i < toks.len() {
                    match (&toks[i], toks.get(i + 1)) {
                        (Token::Word(w), Some(Token::Quoted(text))) if w == "label" => {
                            if i + 2 != toks.len() {
                                return Err(syntax(lineno, "label must end the edge line"));
                            }
                            label = text.clone();
                            i += 2;
                        }
                        (Token::Word(w), _) => {
                            tail.push(check_id(lineno, w)?);
                            i += 1;
                        }
                        (Token::Quoted(_), _) => {
                            return Err(syntax(lineno, "unexpected string"));
                        }
                    }
                }
                if tail.is_empty() {
                    return Err(ModelError::EmptyTail { line: lineno, edge: id });
                }
                let mut seen = BTreeSet::new();
                for t in &tail {
                    if !seen.insert(t.clone()) {
                        return Err(ModelError::DuplicateTail {
                            line: lineno,
                            edge: id,
                            vertex: t.clone(),
                        });
                    }
                }
                if edges.contains_key(&id) {
                    return Err(ModelError::DuplicateEdge { line: lineno, id });
                }
                let mut edge = Edge::with_kind(kind, &id, &head, tail);
                edge.label = label;
                edges.insert(id, (lineno, edge));
            }
            "interior" => {
                if words.len() < 3 {
                    return Err(syntax(lineno, "expected `interior <edge> <vertex...>`"));
                }
                let id = check_id(lineno, words[1])?;
                let vs = words[2..]
                    .iter()
                    .map(|w| check_id(lineno, w))
                    .collect::<Result<Vec<_>, _>>()?;
                interiors.push((lineno, id, vs));
            }
            other => {
                return Err(syntax(lineno, &format!("unknown directive `{other}`")));
            }
        }
    }

    let initial = initial.ok_or(ModelError::MissingInitial)?;
    for (lineno, id, vs) in interiors {
        match edges.get_mut(&id) {
            Some((_, e)) if e.compressed_interior.is_empty() => e.compressed_interior = vs,
            Some(_) => return Err(syntax(lineno, &format!("duplicate interior for `{id}`"))),
            None => return Err(syntax(lineno, &format!("interior for unknown edge `{id}`"))),
        }
    }

    let mut vertices = declared.clone();
    for (lineno, e) in edges.values() {
        for v in std::iter::once(&e.head).chain(e.tail.iter()) {
            if !declared.contains(v) {
                if opts.strict_vertices {
                    return Err(ModelError::UndeclaredVertex {
                        line: *lineno,
                        vertex: v.clone(),
                    });
                }
                vertices.insert(v.clone());
            }
        }
    }

    Ok(ModelDecl {
        name,
        vertices,
        initial,
        edges: edges.into_values().map(|(_, e)| e).collect(),
    })
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// Writes the canonical file form: every vertex declared, lines in sorted-id
/// order.
pub fn serialize_model(decl: &ModelDecl) -> String {
    let mut out = String::new();
    if let Some(name) = &decl.name {
        let _ = writeln!(out, "model {name}");
    }
    if decl.is_transformed() {
        out.push_str("transformed\n");
    }
    let _ = writeln!(out, "initial {}", decl.initial);
    for v in &decl.vertices {
        if *v != decl.initial {
            let _ = writeln!(out, "vertex {v}");
        }
    }
    let mut edges: Vec<&Edge> = decl.edges.iter().collect();
    edges.sort_by(|a, b| a.id.cmp(&b.id));
    for e in &edges {
        let directive = if e.kind == EdgeKind::Virtual { "vedge" } else { "edge" };
        let _ = write!(out, "{directive} {} {} ->", e.id, e.head);
        for t in &e.tail {
            let _ = write!(out, " {t}");
        }
        if !e.label.is_empty() {
            let _ = write!(out, " label {}", quote(&e.label));
        }
        out.push('\n');
    }
    for e in &edges {
        if !e.compressed_interior.is_empty() {
            let _ = writeln!(out, "interior {} {}", e.id, e.compressed_interior.join(" "));
        }
    }
    out
}

/// Every invariant violation of `decl`; empty iff a game graph can be built.
pub fn validate(decl: &ModelDecl) -> Vec<Violation> {
    let mut out = Vec::new();
    let transformed = decl.is_transformed();
    let check = |id: &str, out: &mut Vec<Violation>| {
        if !valid_id(id, transformed) {
            out.push(Violation::BadId(id.to_string()));
        }
    };
    for v in &decl.vertices {
        check(v, &mut out);
    }
    if !decl.vertices.contains(&decl.initial) {
        out.push(Violation::UnknownVertex(decl.initial.clone()));
    }
    let mut seen_ids = BTreeSet::new();
    let mut unknown = BTreeSet::new();
    for e in &decl.edges {
        check(&e.id, &mut out);
        if !seen_ids.insert(e.id.as_str()) {
            out.push(Violation::DuplicateEdgeId(e.id.clone()));
        }
        if e.kind == EdgeKind::Trivial {
            out.push(Violation::TrivialEdgeInModel(e.id.clone()));
        } else if e.tail.is_empty() {
            out.push(Violation::EmptyTail(e.id.clone()));
        }
        for v in std::iter::once(&e.head).chain(e.tail.iter()) {
            if !decl.vertices.contains(v) && unknown.insert(v.clone()) {
                out.push(Violation::UnknownVertex(v.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        for t in &e.tail {
            if !seen.insert(t) {
                out.push(Violation::DuplicateTailVertex {
                    edge: e.id.clone(),
                    vertex: t.clone(),
                });
            }
        }
        for v in &e.compressed_interior {
            if decl.vertices.contains(v) {
                out.push(Violation::InteriorIsVertex {
                    edge: e.id.clone(),
                    vertex: v.clone(),
                });
            }
        }
    }
    out
}
