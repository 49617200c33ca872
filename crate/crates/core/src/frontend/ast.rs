//! Labelled syntax trees built from parsed methods.
//!
//! Node types form a closed set (see [`NODE_TYPES`]). Each node's label is
//! its `type_value`: the node type joined to its value with `_`, e.g.
//! `MemberReference_timeMillis`, or the bare type when there is no value.

use serde::{Deserialize, Serialize};

use super::parser::{Expr, Method, StmtId, StmtNode, TypeRef};

pub type NodeId = usize;

pub const NODE_TYPES: &[&str] = &[
    "MethodDeclaration",
    "Modifier",
    "BasicType",
    "ReferenceType",
    "FormalParameter",
    "LocalVariableDeclaration",
    "VariableDeclarator",
    "Assignment",
    "StatementExpression",
    "IfStatement",
    "WhileStatement",
    "ForStatement",
    "ForControl",
    "ReturnStatement",
    "BreakStatement",
    "ContinueStatement",
    "BlockStatement",
    "MethodInvocation",
    "MemberReference",
    "Literal",
    "This",
    "ClassCreator",
    "ArraySelector",
    "PrefixOperation",
    "PostfixOperation",
    "BinaryOperation",
    "TernaryExpression",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstNode {
    pub id: NodeId,
    #[serde(rename = "type")]
    pub node_type: String,
    pub value: Option<String>,
    pub children: Vec<NodeId>,
}

impl AstNode {
    pub fn type_value(&self) -> String {
        match &self.value {
            Some(v) => format!("{}_{}", self.node_type, v),
            None => self.node_type.clone(),
        }
    }
}

/// A tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ast {
    pub nodes: Vec<AstNode>,
}

impl Ast {
    pub const ROOT: NodeId = 0;

    pub fn root(&self) -> &AstNode {
        &self.nodes[Self::ROOT]
    }

    pub fn node(&self, id: NodeId) -> &AstNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node ids with every child before its parent.
    pub fn post_order(&self) -> Vec<NodeId> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(Self::ROOT, false)];
        while let Some((id, expanded)) = stack.pop() {
            if expanded {
                order.push(id);
            } else {
                stack.push((id, true));
                for &c in self.nodes[id].children.iter().rev() {
                    stack.push((c, false));
                }
            }
        }
        order
    }

    /// Labels of the leaves, left to right.
    pub fn fringe(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut stack = vec![Self::ROOT];
        while let Some(id) = stack.pop() {
            let n = &self.nodes[id];
            if n.children.is_empty() {
                out.push(n.type_value());
            }
            stack.extend(n.children.iter().rev());
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.nodes).expect("ast serializes")
    }

    /// Checks tree shape: ids match positions, every non-root node has one
    /// parent, and everything is reachable from the root.
    pub fn is_well_formed(&self) -> bool {
        let mut parents = vec![0usize; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i || n.type_value().is_empty() {
                return false;
            }
            for &c in &n.children {
                if c >= self.nodes.len() || c == Self::ROOT {
                    return false;
                }
                parents[c] += 1;
            }
        }
        parents.iter().skip(1).all(|&p| p == 1) && self.post_order().len() == self.nodes.len()
    }
}

pub fn build_ast(method: &Method) -> Ast {
    let mut b = Builder { nodes: Vec::new() };
    let root = b.node("MethodDeclaration", Some(&method.name));
    for m in &method.modifiers {
        let n = b.node("Modifier", Some(m));
        b.attach(root, n);
    }
    let ret = b.type_node(&method.return_type);
    b.attach(root, ret);
    for p in &method.params {
        let param = b.node("FormalParameter", Some(&p.name));
        let ty = b.type_node(&p.ty);
        b.attach(param, ty);
        b.attach(root, param);
    }
    for &s in &method.body {
        let n = b.statement(method, s);
        b.attach(root, n);
    }
    Ast { nodes: b.nodes }
}

struct Builder {
    nodes: Vec<AstNode>,
}

impl Builder {
    fn node(&mut self, node_type: &str, value: Option<&str>) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(AstNode {
            id,
            node_type: node_type.to_string(),
            value: value.map(str::to_string),
            children: Vec::new(),
        });
        id
    }

    fn attach(&mut self, parent: NodeId, child: NodeId) {
        self.nodes[parent].children.push(child);
    }

    fn type_node(&mut self, ty: &TypeRef) -> NodeId {
        let kind = if ty.primitive {
            "BasicType"
        } else {
            "ReferenceType"
        };
        self.node(kind, Some(&ty.display()))
    }

    fn block(&mut self, method: &Method, stmts: &[StmtId]) -> NodeId {
        let block = self.node("BlockStatement", None);
        for &s in stmts {
            let n = self.statement(method, s);
            self.attach(block, n);
        }
        block
    }

    fn statement(&mut self, method: &Method, id: StmtId) -> NodeId {
        match &method.statement(id).node {
            StmtNode::Decl { ty, name, init } => {
                let decl = self.node("LocalVariableDeclaration", None);
                let t = self.type_node(ty);
                self.attach(decl, t);
                let var = self.node("VariableDeclarator", Some(name));
                if let Some(e) = init {
                    let e = self.expr(e);
                    self.attach(var, e);
                }
                self.attach(decl, var);
                decl
            }
            StmtNode::Assign { target, op, value } => {
                let n = self.node("Assignment", Some(op));
                let t = self.expr(target);
                let v = self.expr(value);
                self.attach(n, t);
                self.attach(n, v);
                n
            }
            StmtNode::Expr(e) => {
                let n = self.node("StatementExpression", None);
                let e = self.expr(e);
                self.attach(n, e);
                n
            }
            StmtNode::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => {
                let n = self.node("IfStatement", None);
                let c = self.expr(cond);
                self.attach(n, c);
                let t = self.block(method, then_branch);
                self.attach(n, t);
                if let Some(e) = else_branch {
                    let e = self.block(method, e);
                    self.attach(n, e);
                }
                n
            }
            StmtNode::While { cond, body, .. } => {
                let n = self.node("WhileStatement", None);
                let c = self.expr(cond);
                self.attach(n, c);
                let b = self.block(method, body);
                self.attach(n, b);
                n
            }
            StmtNode::For {
                init,
                cond,
                update,
                body,
                ..
            } => {
                let n = self.node("ForStatement", None);
                let control = self.node("ForControl", None);
                if let Some(i) = init {
                    let i = self.statement(method, *i);
                    self.attach(control, i);
                }
                if let Some(c) = cond {
                    let c = self.expr(c);
                    self.attach(control, c);
                }
                if let Some(u) = update {
                    let u = self.statement(method, *u);
                    self.attach(control, u);
                }
                self.attach(n, control);
                let b = self.block(method, body);
                self.attach(n, b);
                n
            }
            StmtNode::Return(value) => {
                let n = self.node("ReturnStatement", None);
                if let Some(v) = value {
                    let v = self.expr(v);
                    self.attach(n, v);
                }
                n
            }
            StmtNode::Break => self.node("BreakStatement", None),
            StmtNode::Continue => self.node("ContinueStatement", None),
            StmtNode::Block(stmts) => self.block(method, stmts),
        }
    }

    fn expr(&mut self, e: &Expr) -> NodeId {
        match e {
            Expr::Name(n) => self.node("MemberReference", Some(n)),
            Expr::Literal(v) => self.node("Literal", Some(v)),
            Expr::This => self.node("This", None),
            Expr::Field { target, name } => {
                let n = self.node("MemberReference", Some(name));
                let t = self.expr(target);
                self.attach(n, t);
                n
            }
            Expr::Call { target, name, args } => {
                let n = self.node("MethodInvocation", Some(name));
                if let Some(t) = target {
                    let t = self.expr(t);
                    self.attach(n, t);
                }
                for a in args {
                    let a = self.expr(a);
                    self.attach(n, a);
                }
                n
            }
            Expr::New { ty, args } => {
                let n = self.node("ClassCreator", Some(ty));
                for a in args {
                    let a = self.expr(a);
                    self.attach(n, a);
                }
                n
            }
            Expr::Index { target, index } => {
                let n = self.node("ArraySelector", None);
                let t = self.expr(target);
                let i = self.expr(index);
                self.attach(n, t);
                self.attach(n, i);
                n
            }
            Expr::Unary {
                op,
                operand,
                postfix,
            } => {
                let kind = if *postfix {
                    "PostfixOperation"
                } else {
                    "PrefixOperation"
                };
                let n = self.node(kind, Some(op));
                let o = self.expr(operand);
                self.attach(n, o);
                n
            }
            Expr::Binary { op, lhs, rhs } => {
                let n = self.node("BinaryOperation", Some(op));
                let l = self.expr(lhs);
                let r = self.expr(rhs);
                self.attach(n, l);
                self.attach(n, r);
                n
            }
            Expr::Ternary {
                cond,
                then,
                otherwise,
            } => {
                let n = self.node("TernaryExpression", None);
                for part in [cond, then, otherwise] {
                    let p = self.expr(part);
                    self.attach(n, p);
                }
                n
            }
        }
    }
}
