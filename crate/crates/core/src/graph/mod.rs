//! Statement-level program dependence graphs for Python, C and C++.
//!
//! Sources are parsed with tree-sitter. Every syntactic statement becomes a
//! node; compound headers (`if`, `elif`, `else`, `while`, `for`, `try`,
//! `except`, `def`, ...) are nodes of their own whose span covers only the
//! header. Control edges run from the innermost enclosing guard to each
//! statement in its body (syntactic nesting, no post-dominance). Data edges
//! come from an intra-procedural reaching-definitions pass, see [`defuse`].

mod calls;
mod clike;
mod defuse;
mod python;

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tree_sitter::{Node, Parser, Tree};

use crate::corpus::Language;

pub use calls::extract_api_calls;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Simple,
    BranchHead,
    LoopHead,
    DefHeader,
    Return,
    Other,
}

impl NodeKind {
    /// Guard kinds are the only valid sources of control edges.
    pub fn is_guard(self) -> bool {
        matches!(
            self,
            NodeKind::BranchHead | NodeKind::LoopHead | NodeKind::DefHeader
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Simple => "simple",
            NodeKind::BranchHead => "branch_head",
            NodeKind::LoopHead => "loop_head",
            NodeKind::DefHeader => "def_header",
            NodeKind::Return => "return",
            NodeKind::Other => "other",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Data,
    Control,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Data => "data",
            EdgeKind::Control => "control",
        }
    }
}

/// One statement of the source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementNode {
    pub node_id: NodeId,
    /// 1-based inclusive line range.
    pub span: (usize, usize),
    pub kind: NodeKind,
    pub defined_vars: BTreeSet<String>,
    pub used_vars: BTreeSet<String>,
    /// Innermost enclosing compound statement.
    pub parent: Option<NodeId>,
    /// Function or class scope the statement belongs to; `0` is the file scope.
    pub scope: usize,
    /// Lines that belong to the statement's syntax without being part of its
    /// header, such as closing braces.
    pub scaffold_lines: Vec<usize>,
    pub is_import: bool,
}

impl StatementNode {
    pub fn contains_line(&self, line: usize) -> bool {
        self.span.0 <= line && line <= self.span.1
    }

    pub fn lines(&self) -> impl Iterator<Item = usize> + '_ {
        (self.span.0..=self.span.1).chain(self.scaffold_lines.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DependenceEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramDependenceGraph {
    pub language: Language,
    pub nodes: Vec<StatementNode>,
    pub edges: Vec<DependenceEdge>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("source contains a NUL byte at line {line}")]
    NulByte { line: usize },
    #[error("the {language} parser produced no tree")]
    NoTree { language: Language },
}

impl ProgramDependenceGraph {
    pub fn empty(language: Language) -> Self {
        ProgramDependenceGraph {
            language,
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn node(&self, id: NodeId) -> Option<&StatementNode> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id < self.nodes.len()
    }

    /// Outgoing adjacency lists, indexed by node id.
    pub fn successors(&self) -> Vec<Vec<NodeId>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.src].push(e.dst);
        }
        adj
    }

    /// Incoming adjacency lists, indexed by node id.
    pub fn predecessors(&self) -> Vec<Vec<NodeId>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.dst].push(e.src);
        }
        adj
    }

    pub fn has_edge(&self, src: NodeId, dst: NodeId, kind: EdgeKind) -> bool {
        self.edges
            .binary_search(&DependenceEdge { src, dst, kind })
            .is_ok()
    }

    /// Nodes whose span contains `line`.
    pub fn nodes_at_line(&self, line: usize) -> impl Iterator<Item = &StatementNode> {
        self.nodes.iter().filter(move |n| n.contains_line(line))
    }

    /// Chain of enclosing compound statements, innermost first.
    pub fn ancestors(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut cur = self.nodes.get(id).and_then(|n| n.parent);
        while let Some(p) = cur {
            out.push(p);
            cur = self.nodes[p].parent;
        }
        out
    }

    /// Line-oriented debug dump: `NODE <id> <start>-<end> <kind>` lines followed
    /// by `EDGE <src> <dst> <kind>` lines.
    pub fn to_debug_text(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let _ = writeln!(
                out,
                "NODE {} {}-{} {}",
                n.node_id, n.span.0, n.span.1, n.kind
            );
        }
        for e in &self.edges {
            let _ = writeln!(out, "EDGE {} {} {}", e.src, e.dst, e.kind.as_str());
        }
        out
    }
}

/// Language-neutral statement tree produced by the per-language walkers.
#[derive(Debug, Clone, Default)]
pub(crate) struct Stmt {
    pub kind: Option<NodeKind>,
    pub start: usize,
    pub end: usize,
    pub scaffold: Vec<usize>,
    pub defs: BTreeSet<String>,
    pub uses: BTreeSet<String>,
    pub is_import: bool,
    /// Names bound inside a new scope opened by this statement (parameters).
    /// `Some` marks a scope-opening statement.
    pub scope_params: Option<BTreeSet<String>>,
    /// Child blocks. Statements in different arms never kill each other's
    /// definitions.
    pub arms: Vec<Vec<Stmt>>,
}

impl Stmt {
    pub fn new(kind: NodeKind, start: usize, end: usize) -> Self {
        Stmt {
            kind: Some(kind),
            start,
            end: end.max(start),
            ..Default::default()
        }
    }
}

pub(crate) fn start_line(node: Node) -> usize {
    node.start_position().row + 1
}

/// Last line of a node, not counting a trailing newline it may swallow.
pub(crate) fn end_line(node: Node) -> usize {
    let end = node.end_position();
    let start = node.start_position();
    if end.column == 0 && end.row > start.row {
        end.row
    } else {
        end.row + 1
    }
}

pub(crate) fn node_text<'a>(node: Node, src: &'a [u8]) -> &'a str {
    node.utf8_text(src).unwrap_or("")
}

pub(crate) fn named_children(node: Node) -> Vec<Node> {
    let mut cursor = node.walk();
    node.named_children(&mut cursor).collect()
}

pub(crate) fn children(node: Node) -> Vec<Node> {
    let mut cursor = node.walk();
    node.children(&mut cursor).collect()
}

pub(crate) fn parse_tree(source: &str, language: Language) -> Result<Tree, ParseError> {
    if let Some(pos) = source.find('\0') {
        let line = source[..pos].matches('\n').count() + 1;
        return Err(ParseError::NulByte { line });
    }
    let grammar: tree_sitter::Language = match language {
        Language::Python => tree_sitter_python::LANGUAGE.into(),
        Language::C => tree_sitter_c::LANGUAGE.into(),
        Language::Cpp => tree_sitter_cpp::LANGUAGE.into(),
    };
    let mut parser = Parser::new();
    parser
        .set_language(&grammar)
        .expect("bundled grammar is ABI compatible");
    parser
        .parse(source, None)
        .ok_or(ParseError::NoTree { language })
}

/// Builds the program dependence graph of `source`.
///
/// Empty input yields an empty graph. Regions the grammar cannot parse become
/// `other` nodes.
pub fn build_pdg(source: &str, language: Language) -> Result<ProgramDependenceGraph, ParseError> {
    if source.trim().is_empty() {
        return Ok(ProgramDependenceGraph::empty(language));
    }
    let tree = parse_tree(source, language)?;
    let src = source.as_bytes();
    let stmts = match language {
        Language::Python => python::module(tree.root_node(), src),
        Language::C | Language::Cpp => clike::translation_unit(tree.root_node(), src),
    };
    Ok(assemble(language, stmts))
}

/// Per-node facts the def-use pass needs beyond the public node.
#[derive(Debug, Clone)]
pub(crate) struct FlatInfo {
    /// `(parent, arm)` of the block the statement sits in.
    pub block: (Option<NodeId>, usize),
    /// Enclosing loop heads, including the node itself when it is one.
    pub loops: Vec<NodeId>,
    /// For scope-opening statements: the inner scope and its parameters.
    pub inner: Option<(usize, BTreeSet<String>)>,
}

struct Flattener {
    nodes: Vec<StatementNode>,
    info: Vec<FlatInfo>,
    scope_parents: Vec<Option<usize>>,
}

impl Flattener {
    fn push_block(
        &mut self,
        stmts: Vec<Stmt>,
        parent: Option<NodeId>,
        arm: usize,
        scope: usize,
        loops: &[NodeId],
    ) {
        for stmt in stmts {
            self.push(stmt, parent, arm, scope, loops);
        }
    }

    fn push(
        &mut self,
        stmt: Stmt,
        parent: Option<NodeId>,
        arm: usize,
        scope: usize,
        loops: &[NodeId],
    ) {
        let id = self.nodes.len();
        let kind = stmt.kind.unwrap_or(NodeKind::Simple);
        let mut own_loops = loops.to_vec();
        if kind == NodeKind::LoopHead {
            own_loops.push(id);
        }
        let inner = stmt.scope_params.map(|params| {
            let inner_scope = self.scope_parents.len();
            self.scope_parents.push(Some(scope));
            (inner_scope, params)
        });
        let mut scaffold: Vec<usize> = stmt
            .scaffold
            .into_iter()
            .filter(|l| *l < stmt.start || *l > stmt.end)
            .collect();
        scaffold.sort_unstable();
        scaffold.dedup();
        self.nodes.push(StatementNode {
            node_id: id,
            span: (stmt.start, stmt.end),
            kind,
            defined_vars: stmt.defs,
            used_vars: stmt.uses,
            parent,
            scope,
            scaffold_lines: scaffold,
            is_import: stmt.is_import,
        });
        let child_scope = inner.as_ref().map_or(scope, |(s, _)| *s);
        self.info.push(FlatInfo {
            block: (parent, arm),
            loops: own_loops.clone(),
            inner,
        });
        for (arm_index, arm_stmts) in stmt.arms.into_iter().enumerate() {
            self.push_block(arm_stmts, Some(id), arm_index, child_scope, &own_loops);
        }
    }
}

fn assemble(language: Language, stmts: Vec<Stmt>) -> ProgramDependenceGraph {
    let mut flat = Flattener {
        nodes: Vec::new(),
        info: Vec::new(),
        scope_parents: vec![None],
    };
    flat.push_block(stmts, None, 0, 0, &[]);

    let mut edges: BTreeSet<DependenceEdge> = BTreeSet::new();
    for node in &flat.nodes {
        let mut cur = node.parent;
        while let Some(p) = cur {
            if flat.nodes[p].kind.is_guard() {
                edges.insert(DependenceEdge {
                    src: p,
                    dst: node.node_id,
                    kind: EdgeKind::Control,
                });
                break;
            }
            cur = flat.nodes[p].parent;
        }
    }
    for (src, dst) in defuse::data_edges(&flat.nodes, &flat.info, &flat.scope_parents) {
        edges.insert(DependenceEdge {
            src,
            dst,
            kind: EdgeKind::Data,
        });
    }
    ProgramDependenceGraph {
        language,
        nodes: flat.nodes,
        edges: edges.into_iter().collect(),
    }
}
