//! Statement-level control-flow graphs with virtual start and end nodes.
//!
//! Node 0 is the virtual start; non-block statements follow in source
//! (pre-)order; the virtual end is last. `if`/`while`/`for` headers are
//! nodes of their own, block bodies are inlined, and a `for` loop runs
//! init → header → body → update → header.

use std::collections::BTreeSet;
use std::fmt::Write;

use serde::Serialize;
use thiserror::Error;

use crate::frontend::{Method, StmtId, StmtKind, StmtNode, Token};

pub type CfgNodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CfgNodeKind {
    Start,
    End,
    Stmt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CfgNode {
    pub id: CfgNodeId,
    pub kind: CfgNodeKind,
    pub stmt: Option<StmtId>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    pub nodes: Vec<CfgNode>,
    /// Sorted, without duplicates.
    pub edges: Vec<(CfgNodeId, CfgNodeId)>,
    pub entry: CfgNodeId,
    pub exit: CfgNodeId,
    succs: Vec<Vec<CfgNodeId>>,
    preds: Vec<Vec<CfgNodeId>>,
    stmt_nodes: Vec<Option<CfgNodeId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CfgError {
    #[error("`break` outside of a loop (statement {0})")]
    BreakOutsideLoop(StmtId),
    #[error("`continue` outside of a loop (statement {0})")]
    ContinueOutsideLoop(StmtId),
    #[error("statement {0} is unreachable from the method entry")]
    Unreachable(StmtId),
}

impl Cfg {
    pub fn successors(&self, n: CfgNodeId) -> &[CfgNodeId] {
        &self.succs[n]
    }

    pub fn predecessors(&self, n: CfgNodeId) -> &[CfgNodeId] {
        &self.preds[n]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// CFG node of a statement; `None` for block statements.
    pub fn node_of(&self, stmt: StmtId) -> Option<CfgNodeId> {
        self.stmt_nodes.get(stmt).copied().flatten()
    }

    pub fn statement_nodes(&self) -> impl Iterator<Item = &CfgNode> {
        self.nodes.iter().filter(|n| n.kind == CfgNodeKind::Stmt)
    }

    /// Graphviz rendering with nodes and edges in id order.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph cfg {\n");
        for n in &self.nodes {
            let label = match n.kind {
                CfgNodeKind::Start => "START".to_string(),
                CfgNodeKind::End => "END".to_string(),
                CfgNodeKind::Stmt => n.label.clone(),
            };
            let _ = writeln!(out, "  n{} [label=\"{}\"];", n.id, dot_escape(&label));
        }
        for (a, b) in &self.edges {
            let _ = writeln!(out, "  n{a} -> n{b};");
        }
        out.push_str("}\n");
        out
    }
}

pub(crate) fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn join_tokens(tokens: &[Token]) -> String {
    tokens
        .iter()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Short human-readable label of a statement, used for DOT output.
pub fn statement_label(method: &Method, id: StmtId) -> String {
    let stmt = method.statement(id);
    match &stmt.node {
        StmtNode::If { cond_span, .. } => {
            format!("if ( {} )", join_tokens(method.tokens_of(cond_span.clone())))
        }
        StmtNode::While { cond_span, .. } => {
            format!("while ( {} )", join_tokens(method.tokens_of(cond_span.clone())))
        }
        StmtNode::For { cond_span, .. } => {
            format!("for ( ; {} ; )", join_tokens(method.tokens_of(cond_span.clone())))
        }
        _ => join_tokens(method.tokens_of(stmt.span.clone())),
    }
}

#[derive(Clone, Copy)]
struct LoopTargets {
    break_to: CfgNodeId,
    continue_to: CfgNodeId,
}

struct Builder<'m> {
    method: &'m Method,
    stmt_nodes: Vec<Option<CfgNodeId>>,
    end: CfgNodeId,
    edges: BTreeSet<(CfgNodeId, CfgNodeId)>,
}

pub fn build_cfg(method: &Method) -> Result<Cfg, CfgError> {
    let mut nodes = vec![CfgNode {
        id: 0,
        kind: CfgNodeKind::Start,
        stmt: None,
        label: String::new(),
    }];
    let mut stmt_nodes = vec![None; method.statements.len()];
    for stmt in &method.statements {
        if stmt.kind != StmtKind::Block {
            let id = nodes.len();
            stmt_nodes[stmt.id] = Some(id);
            nodes.push(CfgNode {
                id,
                kind: CfgNodeKind::Stmt,
                stmt: Some(stmt.id),
                label: statement_label(method, stmt.id),
            });
        }
    }
    let end = nodes.len();
    nodes.push(CfgNode {
        id: end,
        kind: CfgNodeKind::End,
        stmt: None,
        label: String::new(),
    });

    let mut b = Builder {
        method,
        stmt_nodes,
        end,
        edges: BTreeSet::new(),
    };
    let first = b.sequence(&method.body, end, None)?;
    b.edges.insert((0, first));

    let n = nodes.len();
    let mut succs = vec![Vec::new(); n];
    let mut preds = vec![Vec::new(); n];
    for &(a, c) in &b.edges {
        succs[a].push(c);
        preds[c].push(a);
    }

    // Dead code (e.g. after `return`) has no path from the entry.
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &succs[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    if let Some(dead) = nodes.iter().find(|node| !seen[node.id]) {
        // The end node is always reachable through the header exits.
        return Err(CfgError::Unreachable(dead.stmt.unwrap_or(usize::MAX)));
    }

    Ok(Cfg {
        nodes,
        edges: b.edges.into_iter().collect(),
        entry: 0,
        exit: end,
        succs,
        preds,
        stmt_nodes: b.stmt_nodes,
    })
}

impl Builder<'_> {
    fn node(&self, stmt: StmtId) -> CfgNodeId {
        self.stmt_nodes[stmt].expect("non-block statement has a node")
    }

    /// Wires `stmts` so that control leaves to `next`; returns the entry node.
    fn sequence(
        &mut self,
        stmts: &[StmtId],
        next: CfgNodeId,
        loop_ctx: Option<LoopTargets>,
    ) -> Result<CfgNodeId, CfgError> {
        let mut succ = next;
        for &s in stmts.iter().rev() {
            succ = self.statement(s, succ, loop_ctx)?;
        }
        Ok(succ)
    }

    fn statement(
        &mut self,
        id: StmtId,
        next: CfgNodeId,
        loop_ctx: Option<LoopTargets>,
    ) -> Result<CfgNodeId, CfgError> {
        let method = self.method;
        match &method.statement(id).node {
            StmtNode::Decl { .. } | StmtNode::Assign { .. } | StmtNode::Expr(_) => {
                let n = self.node(id);
                self.edges.insert((n, next));
                Ok(n)
            }
            StmtNode::Return(_) => {
                let n = self.node(id);
                self.edges.insert((n, self.end));
                Ok(n)
            }
            StmtNode::Break => {
                let targets = loop_ctx.ok_or(CfgError::BreakOutsideLoop(id))?;
                let n = self.node(id);
                self.edges.insert((n, targets.break_to));
                Ok(n)
            }
            StmtNode::Continue => {
                let targets = loop_ctx.ok_or(CfgError::ContinueOutsideLoop(id))?;
                let n = self.node(id);
                self.edges.insert((n, targets.continue_to));
                Ok(n)
            }
            StmtNode::Block(body) => self.sequence(body, next, loop_ctx),
            StmtNode::If {
                then_branch,
                else_branch,
                ..
            } => {
                let n = self.node(id);
                let then_entry = self.sequence(then_branch, next, loop_ctx)?;
                let else_entry = match else_branch {
                    Some(e) => self.sequence(e, next, loop_ctx)?,
                    None => next,
                };
                self.edges.insert((n, then_entry));
                self.edges.insert((n, else_entry));
                Ok(n)
            }
            StmtNode::While { body, .. } => {
                let header = self.node(id);
                let targets = LoopTargets {
                    break_to: next,
                    continue_to: header,
                };
                let body_entry = self.sequence(body, header, Some(targets))?;
                self.edges.insert((header, body_entry));
                self.edges.insert((header, next));
                Ok(header)
            }
            StmtNode::For {
                init, update, body, ..
            } => {
                let header = self.node(id);
                let continue_to = match update {
                    Some(u) => {
                        let un = self.node(*u);
                        self.edges.insert((un, header));
                        un
                    }
                    None => header,
                };
                let targets = LoopTargets {
                    break_to: next,
                    continue_to,
                };
                let body_entry = self.sequence(body, continue_to, Some(targets))?;
                self.edges.insert((header, body_entry));
                self.edges.insert((header, next));
                match init {
                    Some(i) => {
                        let inode = self.node(*i);
                        self.edges.insert((inode, header));
                        Ok(inode)
                    }
                    None => Ok(header),
                }
            }
        }
    }
}
