//! Block-wise code splitting over the dominator tree.
//!
//! After dropping the virtual start/end nodes, a dominator-tree edge
//! `u → v` is cut when `u` has more than one child or `v` more than one
//! parent. Each remaining connected component is one block of statements.
//! Every block is materialized as a standalone method (the original
//! declaration plus the block's statements) and parsed into its own AST.

use serde_json::json;
use thiserror::Error;

use crate::cfg::{build_cfg, Cfg, CfgError, CfgNodeKind};
use crate::dominators::{compute_dominators, DomError, DomTree};
use crate::frontend::{
    build_ast, parse_method, Ast, Method, ParseError, StmtId, StmtKind, StmtNode, Token, TokenKind,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSplit {
    pub split_id: usize,
    /// Statement ids in source order. Block statements never appear.
    pub statements: Vec<StmtId>,
    pub includes_declaration: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitGraph {
    pub splits: Vec<CodeSplit>,
    /// Block adjacency lifted from the cut dominator-tree edges, sorted.
    pub successor_edges: Vec<(usize, usize)>,
}

impl SplitGraph {
    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.successor_edges.binary_search(&(from, to)).is_ok()
    }

    /// Kahn's algorithm; `None` when the successor relation has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.splits.len();
        let mut indeg = vec![0usize; n];
        for &(_, b) in &self.successor_edges {
            indeg[b] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).rev().collect();
        let mut order = Vec::with_capacity(n);
        while let Some(u) = ready.pop() {
            order.push(u);
            for &(a, b) in &self.successor_edges {
                if a == u {
                    indeg[b] -= 1;
                    if indeg[b] == 0 {
                        ready.push(b);
                    }
                }
            }
        }
        (order.len() == n).then_some(order)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAst {
    pub split_id: usize,
    pub ast: Ast,
}

pub fn partition_blocks(domtree: &DomTree, cfg: &Cfg) -> SplitGraph {
    let stmt_nodes: Vec<usize> = cfg.statement_nodes().map(|n| n.id).collect();
    if stmt_nodes.is_empty() {
        return SplitGraph {
            splits: vec![CodeSplit {
                split_id: 0,
                statements: Vec::new(),
                includes_declaration: true,
            }],
            successor_edges: Vec::new(),
        };
    }

    let is_stmt = |n: usize| cfg.nodes[n].kind == CfgNodeKind::Stmt;
    let tree_edges: Vec<(usize, usize)> = domtree
        .edges()
        .into_iter()
        .filter(|&(a, b)| is_stmt(a) && is_stmt(b))
        .collect();

    let n = cfg.len();
    let mut out_deg = vec![0usize; n];
    let mut in_deg = vec![0usize; n];
    for &(a, b) in &tree_edges {
        out_deg[a] += 1;
        in_deg[b] += 1;
    }

    let mut uf = UnionFind::new(n);
    let mut cut = Vec::new();
    for &(a, b) in &tree_edges {
        if out_deg[a] > 1 || in_deg[b] > 1 {
            cut.push((a, b));
        } else {
            uf.union(a, b);
        }
    }

    // Number blocks by their earliest statement.
    let mut block_of = vec![usize::MAX; n];
    let mut splits: Vec<CodeSplit> = Vec::new();
    let mut root_block = vec![usize::MAX; n];
    for &node in &stmt_nodes {
        let root = uf.find(node);
        if root_block[root] == usize::MAX {
            root_block[root] = splits.len();
            splits.push(CodeSplit {
                split_id: splits.len(),
                statements: Vec::new(),
                includes_declaration: true,
            });
        }
        block_of[node] = root_block[root];
        let stmt = cfg.nodes[node].stmt.expect("statement node");
        splits[block_of[node]].statements.push(stmt);
    }
    for s in &mut splits {
        s.statements.sort_unstable();
    }

    let mut successor_edges: Vec<(usize, usize)> = cut
        .into_iter()
        .map(|(a, b)| (block_of[a], block_of[b]))
        .collect();
    successor_edges.sort_unstable();
    successor_edges.dedup();

    SplitGraph {
        splits,
        successor_edges,
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller id as root for determinism
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Tokens of a split as a standalone method: the declaration, then the
/// block's statements in source order inside braces. Compound statements
/// whose header belongs to the split keep their braces, with bodies
/// reduced to the statements of the split (possibly empty).
pub fn make_split_code(split: &CodeSplit, method: &Method) -> Vec<Token> {
    let mut included = vec![false; method.statements.len()];
    for &s in &split.statements {
        included[s] = true;
    }
    let mut emitter = Emitter {
        method,
        included,
        owns_orphans: split.split_id == 0,
        out: method.declaration_tokens.clone(),
    };
    emitter.punct("{");
    emitter.list(&method.body, None);
    emitter.punct("}");
    emitter.out
}

struct Emitter<'m> {
    method: &'m Method,
    included: Vec<bool>,
    /// Whether statement-free top-level blocks belong to this split.
    owns_orphans: bool,
    out: Vec<Token>,
}

impl Emitter<'_> {
    fn punct(&mut self, p: &str) {
        self.out.push(Token::new(TokenKind::Punct, p));
    }

    fn tokens(&mut self, range: std::ops::Range<usize>) {
        self.out.extend_from_slice(&self.method.tokens[range]);
    }

    fn any_included(&self, id: StmtId) -> bool {
        let stmt = self.method.statement(id);
        (stmt.kind != StmtKind::Block && self.included[id])
            || stmt.children().into_iter().any(|c| self.any_included(c))
    }

    fn has_statements(&self, id: StmtId) -> bool {
        let stmt = self.method.statement(id);
        stmt.kind != StmtKind::Block || stmt.children().into_iter().any(|c| self.has_statements(c))
    }

    fn list(&mut self, stmts: &[StmtId], owner: Option<StmtId>) {
        for &s in stmts {
            self.statement(s, owner);
        }
    }

    fn body(&mut self, stmts: &[StmtId], owner: StmtId) {
        self.punct("{");
        self.list(stmts, Some(owner));
        self.punct("}");
    }

    /// A simple statement; for-clause statements get their `;` back.
    fn simple(&mut self, id: StmtId) {
        let span = self.method.statement(id).span.clone();
        let ends_with_semi = self.method.tokens[span.end - 1].is_punct(";");
        self.tokens(span);
        if !ends_with_semi {
            self.punct(";");
        }
    }

    fn statement(&mut self, id: StmtId, owner: Option<StmtId>) {
        let method = self.method;
        let stmt = method.statement(id);
        let inc = self.included[id];
        match &stmt.node {
            StmtNode::Decl { .. }
            | StmtNode::Assign { .. }
            | StmtNode::Expr(_)
            | StmtNode::Return(_)
            | StmtNode::Break
            | StmtNode::Continue => {
                if inc {
                    self.simple(id);
                }
            }
            StmtNode::Block(body) => {
                let owner_here = match owner {
                    Some(o) => self.included[o],
                    None => self.owns_orphans,
                };
                if self.any_included(id) || (!self.has_statements(id) && owner_here) {
                    self.punct("{");
                    self.list(body, owner);
                    self.punct("}");
                }
            }
            StmtNode::If {
                cond_span,
                then_branch,
                else_branch,
                ..
            } => {
                if inc {
                    self.out.push(Token::new(TokenKind::Keyword, "if"));
                    self.punct("(");
                    self.tokens(cond_span.clone());
                    self.punct(")");
                    self.body(then_branch, id);
                    if let Some(e) = else_branch {
                        self.out.push(Token::new(TokenKind::Keyword, "else"));
                        self.body(e, id);
                    }
                } else {
                    self.list(then_branch, owner);
                    if let Some(e) = else_branch {
                        self.list(e, owner);
                    }
                }
            }
            StmtNode::While {
                cond_span, body, ..
            } => {
                if inc {
                    self.out.push(Token::new(TokenKind::Keyword, "while"));
                    self.punct("(");
                    self.tokens(cond_span.clone());
                    self.punct(")");
                    self.body(body, id);
                } else {
                    self.list(body, owner);
                }
            }
            StmtNode::For {
                init,
                cond_span,
                update,
                body,
                ..
            } => {
                if inc {
                    self.out.push(Token::new(TokenKind::Keyword, "for"));
                    self.punct("(");
                    if let Some(i) = init.filter(|&i| self.included[i]) {
                        self.tokens(method.statement(i).span.clone());
                    }
                    self.punct(";");
                    self.tokens(cond_span.clone());
                    self.punct(";");
                    if let Some(u) = update.filter(|&u| self.included[u]) {
                        self.tokens(method.statement(u).span.clone());
                    }
                    self.punct(")");
                    self.body(body, id);
                } else {
                    for clause in init.iter().chain(update.iter()) {
                        if self.included[*clause] {
                            self.simple(*clause);
                        }
                    }
                    self.list(body, owner);
                }
            }
        }
    }
}

pub fn build_split_asts(graph: &SplitGraph, method: &Method) -> Result<Vec<SplitAst>, ParseError> {
    graph
        .splits
        .iter()
        .map(|split| {
            let tokens = make_split_code(split, method);
            let parsed = parse_method(&tokens)?;
            Ok(SplitAst {
                split_id: split.split_id,
                ast: build_ast(&parsed),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SplitError {
    #[error("control-flow graph: {0}")]
    Cfg(#[from] CfgError),
    #[error("dominator tree: {0}")]
    Dom(#[from] DomError),
    #[error("split code does not re-parse: {0}")]
    Parse(#[from] ParseError),
}

/// Everything code splitting produces for one method.
#[derive(Debug, Clone)]
pub struct MethodSplits {
    pub cfg: Cfg,
    pub domtree: DomTree,
    pub graph: SplitGraph,
    pub codes: Vec<Vec<Token>>,
    pub asts: Vec<SplitAst>,
}

impl MethodSplits {
    /// `{method, splits: [{id, code, ast}], edges: [[a, b], ...]}`
    pub fn to_json(&self, method: &Method) -> serde_json::Value {
        let splits: Vec<_> = self
            .graph
            .splits
            .iter()
            .map(|s| {
                let code: Vec<&str> = self.codes[s.split_id].iter().map(|t| t.text.as_str()).collect();
                json!({
                    "id": s.split_id,
                    "code": code.join(" "),
                    "ast": self.asts[s.split_id].ast.to_json(),
                })
            })
            .collect();
        let edges: Vec<[usize; 2]> = self.graph.successor_edges.iter().map(|&(a, b)| [a, b]).collect();
        json!({ "method": method.name, "splits": splits, "edges": edges })
    }
}

/// CFG → dominator tree → blocks → split code → split ASTs.
pub fn split_method(method: &Method) -> Result<MethodSplits, SplitError> {
    let cfg = build_cfg(method)?;
    let domtree = compute_dominators(&cfg)?;
    let graph = partition_blocks(&domtree, &cfg);
    let codes = graph
        .splits
        .iter()
        .map(|s| make_split_code(s, method))
        .collect();
    let asts = build_split_asts(&graph, method)?;
    Ok(MethodSplits {
        cfg,
        domtree,
        graph,
        codes,
        asts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    fn method(src: &str) -> Method {
        parse_source(src).unwrap().remove(0)
    }

    fn text(tokens: &[Token]) -> String {
        tokens.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn straight_line_is_one_split() {
        let m = method("void f() { a = 1; b = 2; c(); }");
        let s = split_method(&m).unwrap();
        assert_eq!(s.graph.len(), 1);
        assert!(s.graph.successor_edges.is_empty());
        assert_eq!(s.graph.splits[0].statements, vec![0, 1, 2]);
        assert_eq!(s.asts[0].ast, build_ast(&m));
    }

    #[test]
    fn diamond_gives_four_blocks() {
        let m = method("void f() { if (c) { a(); } else { b(); } d(); }");
        let s = split_method(&m).unwrap();
        let stmts: Vec<_> = s.graph.splits.iter().map(|x| x.statements.clone()).collect();
        assert_eq!(stmts, vec![vec![0], vec![1], vec![2], vec![3]]);
        assert_eq!(s.graph.successor_edges, vec![(0, 1), (0, 2), (0, 3)]);
        assert_eq!(s.asts.len(), 4);
        let fringes: std::collections::BTreeSet<_> = s.asts.iter().map(|a| a.ast.fringe()).collect();
        assert_eq!(fringes.len(), 4);
    }

    #[test]
    fn split_code_materialization() {
        let m = method("void f() { if (c) { a(); } else { b(); } d(); }");
        let s = split_method(&m).unwrap();
        assert_eq!(text(&s.codes[0]), "void f ( ) { if ( c ) { } else { } }");
        assert_eq!(text(&s.codes[1]), "void f ( ) { a ( ) ; }");
        assert_eq!(text(&s.codes[3]), "void f ( ) { d ( ) ; }");
    }

    #[test]
    fn empty_body_has_a_single_empty_split() {
        let m = method("void f() { }");
        let s = split_method(&m).unwrap();
        assert_eq!(s.graph.len(), 1);
        assert!(s.graph.splits[0].statements.is_empty());
        assert_eq!(text(&s.codes[0]), "void f ( ) { }");
    }

    #[test]
    fn for_update_in_its_own_block() {
        // header → body(if) ; the if dominates both its then-branch and the
        // update, so the update lands in a separate block and is emitted as
        // a standalone statement.
        let m = method("void f() { for (int i = 0; i < n; i++) { if (p(i)) { q(); } } }");
        let s = split_method(&m).unwrap();
        let update_block = s
            .graph
            .splits
            .iter()
            .find(|x| x.statements == vec![2])
            .expect("update alone");
        assert_eq!(
            text(&s.codes[update_block.split_id]),
            "void f ( ) { i ++ ; }"
        );
        assert_eq!(text(&s.codes[0]), "void f ( ) { for ( int i = <NUM> ; i < n ; ) { if ( p ( i ) ) { } } }");
    }

    #[test]
    fn nested_blocks_survive_single_split_identity() {
        let m = method("void f() { { a(); { } } b(); }");
        let s = split_method(&m).unwrap();
        assert_eq!(s.graph.len(), 1);
        assert_eq!(s.asts[0].ast, build_ast(&m));
    }

    #[test]
    fn break_inside_loop_splits_cleanly() {
        let m = method("void f() { while (a) { if (b) { break; } c(); } d(); }");
        let s = split_method(&m).unwrap();
        assert!(s.graph.topological_order().is_some());
        let covered: Vec<_> = s.graph.splits.iter().flat_map(|x| x.statements.clone()).collect();
        let mut sorted = covered.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn json_shape() {
        let m = method("void f() { if (c) { a(); } d(); }");
        let s = split_method(&m).unwrap();
        let j = s.to_json(&m);
        assert_eq!(j["method"], "f");
        assert_eq!(j["splits"].as_array().unwrap().len(), 3);
        assert_eq!(j["edges"], json!([[0, 1], [0, 2]]));
        assert_eq!(j["splits"][1]["code"], "void f ( ) { a ( ) ; }");
    }
}
