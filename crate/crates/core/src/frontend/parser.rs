//! Recursive-descent parser for mini-language methods.
//!
//! Statements are stored in a per-method arena in pre-order, so a
//! statement's id is also its position in source order. The grammar is
//! documented in `docs/grammar.md`.

use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use super::lexer::{Token, TokenKind, MODIFIERS, PRIMITIVE_TYPES};

pub type StmtId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum StmtKind {
    Decl,
    Assign,
    ExprStmt,
    If,
    While,
    For,
    Return,
    Break,
    Continue,
    Block,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeRef {
    pub name: String,
    pub primitive: bool,
    pub array_dims: usize,
}

impl TypeRef {
    pub fn display(&self) -> String {
        format!("{}{}", self.name, "[]".repeat(self.array_dims))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub ty: TypeRef,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Name(String),
    Literal(String),
    This,
    Field {
        target: Box<Expr>,
        name: String,
    },
    Call {
        target: Option<Box<Expr>>,
        name: String,
        args: Vec<Expr>,
    },
    New {
        ty: String,
        args: Vec<Expr>,
    },
    Index {
        target: Box<Expr>,
        index: Box<Expr>,
    },
    Unary {
        op: String,
        operand: Box<Expr>,
        postfix: bool,
    },
    Binary {
        op: String,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Ternary {
        cond: Box<Expr>,
        then: Box<Expr>,
        otherwise: Box<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtNode {
    Decl {
        ty: TypeRef,
        name: String,
        init: Option<Expr>,
    },
    Assign {
        target: Expr,
        op: String,
        value: Expr,
    },
    Expr(Expr),
    If {
        cond: Expr,
        cond_span: Range<usize>,
        then_branch: Vec<StmtId>,
        else_branch: Option<Vec<StmtId>>,
    },
    While {
        cond: Expr,
        cond_span: Range<usize>,
        body: Vec<StmtId>,
    },
    For {
        init: Option<StmtId>,
        cond: Option<Expr>,
        cond_span: Range<usize>,
        update: Option<StmtId>,
        body: Vec<StmtId>,
    },
    Return(Option<Expr>),
    Break,
    Continue,
    Block(Vec<StmtId>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub id: StmtId,
    pub kind: StmtKind,
    /// Token range within [`Method::tokens`]. For-loop init/update clauses
    /// exclude their separating `;`.
    pub span: Range<usize>,
    pub node: StmtNode,
}

impl Statement {
    /// Directly nested statements in source order.
    pub fn children(&self) -> Vec<StmtId> {
        match &self.node {
            StmtNode::If {
                then_branch,
                else_branch,
                ..
            } => then_branch
                .iter()
                .chain(else_branch.iter().flatten())
                .copied()
                .collect(),
            StmtNode::While { body, .. } | StmtNode::Block(body) => body.clone(),
            StmtNode::For {
                init, update, body, ..
            } => init
                .iter()
                .chain(update.iter())
                .chain(body.iter())
                .copied()
                .collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Method {
    pub name: String,
    pub modifiers: Vec<String>,
    pub return_type: TypeRef,
    pub params: Vec<Param>,
    /// Modifiers through the closing `)` of the parameter list.
    pub declaration_tokens: Vec<Token>,
    /// Every token of the method, declaration and braced body included.
    pub tokens: Vec<Token>,
    /// Statement arena in pre-order; `statements[i].id == i`.
    pub statements: Vec<Statement>,
    pub body: Vec<StmtId>,
}

impl Method {
    pub fn statement(&self, id: StmtId) -> &Statement {
        &self.statements[id]
    }

    /// Tokens of the braced body, `{` and `}` included.
    pub fn body_tokens(&self) -> &[Token] {
        &self.tokens[self.declaration_tokens.len()..]
    }

    pub fn tokens_of(&self, range: Range<usize>) -> &[Token] {
        &self.tokens[range]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at token {index}: expected {}, found {}", expected.join(" | "), found.as_deref().unwrap_or("end of input"))]
pub struct ParseError {
    pub index: usize,
    pub expected: Vec<String>,
    pub found: Option<String>,
}

/// Parses exactly one method; trailing tokens are an error.
pub fn parse_method(tokens: &[Token]) -> Result<Method, ParseError> {
    let mut parser = Parser::new(tokens);
    let method = parser.method()?;
    if parser.pos < tokens.len() {
        return Err(parser.error(&["end of method"]));
    }
    Ok(method)
}

/// Parses a sequence of methods, as found in a source file.
pub fn parse_methods(tokens: &[Token]) -> Result<Vec<Method>, ParseError> {
    let mut methods = Vec::new();
    let mut start = 0;
    while start < tokens.len() {
        let mut parser = Parser::new(&tokens[start..]);
        let method = parser.method().map_err(|mut e| {
            e.index += start;
            e
        })?;
        start += parser.pos;
        methods.push(method);
    }
    Ok(methods)
}

const ASSIGN_OPS: &[&str] = &["=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="];

// Binary operators by precedence level, loosest first.
const BINARY_LEVELS: &[&[&str]] = &[
    &["||"],
    &["&&"],
    &["|"],
    &["^"],
    &["&"],
    &["==", "!="],
    &["<", ">", "<=", ">="],
    &["<<", ">>"],
    &["+", "-"],
    &["*", "/", "%"],
];

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    statements: Vec<Statement>,
}

impl<'a> Parser<'a> {
    fn new(tokens: &'a [Token]) -> Self {
        Parser {
            tokens,
            pos: 0,
            statements: Vec::new(),
        }
    }

    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, offset: usize) -> Option<&'a Token> {
        self.tokens.get(self.pos + offset)
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        ParseError {
            index: self.pos,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().map(|t| t.text.clone()),
        }
    }

    fn at_punct(&self, p: &str) -> bool {
        self.peek().is_some_and(|t| t.is_punct(p))
    }

    fn at_op(&self, op: &str) -> bool {
        self.peek().is_some_and(|t| t.is_op(op))
    }

    fn at_keyword(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| t.is_keyword(kw))
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), ParseError> {
        if self.at_punct(p) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&[p]))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.at_keyword(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&[kw]))
        }
    }

    fn identifier(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => {
                self.pos += 1;
                Ok(t.text.clone())
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn method(&mut self) -> Result<Method, ParseError> {
        let mut modifiers = Vec::new();
        while let Some(t) = self.peek() {
            if t.kind == TokenKind::Keyword && MODIFIERS.contains(&t.text.as_str()) {
                modifiers.push(t.text.clone());
                self.pos += 1;
            } else {
                break;
            }
        }
        let return_type = self.type_ref()?;
        let name = self.identifier()?;
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.at_punct(")") {
            loop {
                let ty = self.type_ref()?;
                let name = self.identifier()?;
                params.push(Param { ty, name });
                if self.at_punct(",") {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        let decl_end = self.pos;
        self.expect_punct("{")?;
        let body = self.statements_until_close()?;
        self.expect_punct("}")?;

        Ok(Method {
            name,
            modifiers,
            return_type,
            params,
            declaration_tokens: self.tokens[..decl_end].to_vec(),
            tokens: self.tokens[..self.pos].to_vec(),
            statements: std::mem::take(&mut self.statements),
            body,
        })
    }

    fn type_ref(&mut self) -> Result<TypeRef, ParseError> {
        let (name, primitive) = match self.peek() {
            Some(t) if t.kind == TokenKind::Keyword && PRIMITIVE_TYPES.contains(&t.text.as_str()) => {
                (t.text.clone(), true)
            }
            Some(t) if t.kind == TokenKind::Identifier => (t.text.clone(), false),
            _ => return Err(self.error(&["type"])),
        };
        self.pos += 1;
        let mut array_dims = 0;
        while self.at_punct("[") && self.peek_at(1).is_some_and(|t| t.is_punct("]")) {
            self.pos += 2;
            array_dims += 1;
        }
        Ok(TypeRef {
            name,
            primitive,
            array_dims,
        })
    }

    /// True when the upcoming tokens start a local variable declaration.
    fn at_declaration(&self) -> bool {
        let Some(first) = self.peek() else {
            return false;
        };
        if first.kind == TokenKind::Keyword {
            return PRIMITIVE_TYPES.contains(&first.text.as_str()) && first.text != "void";
        }
        if first.kind != TokenKind::Identifier {
            return false;
        }
        let mut i = 1;
        while self.peek_at(i).is_some_and(|t| t.is_punct("["))
            && self.peek_at(i + 1).is_some_and(|t| t.is_punct("]"))
        {
            i += 2;
        }
        self.peek_at(i)
            .is_some_and(|t| t.kind == TokenKind::Identifier)
    }

    fn statements_until_close(&mut self) -> Result<Vec<StmtId>, ParseError> {
        let mut out = Vec::new();
        while !self.at_punct("}") {
            if self.peek().is_none() {
                return Err(self.error(&["}"]));
            }
            out.push(self.statement()?);
        }
        Ok(out)
    }

    fn reserve(&mut self, kind: StmtKind) -> StmtId {
        let id = self.statements.len();
        self.statements.push(Statement {
            id,
            kind,
            span: self.pos..self.pos,
            node: StmtNode::Break,
        });
        id
    }

    fn finish(&mut self, id: StmtId, start: usize, node: StmtNode) -> StmtId {
        let stmt = &mut self.statements[id];
        stmt.span = start..self.pos;
        stmt.node = node;
        id
    }

    /// A braced block, or a single statement standing in for one.
    fn branch_body(&mut self) -> Result<Vec<StmtId>, ParseError> {
        if self.at_punct("{") {
            self.pos += 1;
            let body = self.statements_until_close()?;
            self.expect_punct("}")?;
            Ok(body)
        } else {
            Ok(vec![self.statement()?])
        }
    }

    fn paren_condition(&mut self) -> Result<(Expr, Range<usize>), ParseError> {
        self.expect_punct("(")?;
        let start = self.pos;
        let cond = self.expr()?;
        let span = start..self.pos;
        self.expect_punct(")")?;
        Ok((cond, span))
    }

    fn statement(&mut self) -> Result<StmtId, ParseError> {
        let start = self.pos;
        let Some(tok) = self.peek() else {
            return Err(self.error(&["statement"]));
        };

        if tok.is_punct("{") {
            let id = self.reserve(StmtKind::Block);
            self.pos += 1;
            let body = self.statements_until_close()?;
            self.expect_punct("}")?;
            return Ok(self.finish(id, start, StmtNode::Block(body)));
        }

        if tok.kind == TokenKind::Keyword {
            match tok.text.as_str() {
                "if" => {
                    let id = self.reserve(StmtKind::If);
                    self.pos += 1;
                    let (cond, cond_span) = self.paren_condition()?;
                    let then_branch = self.branch_body()?;
                    let else_branch = if self.at_keyword("else") {
                        self.pos += 1;
                        Some(self.branch_body()?)
                    } else {
                        None
                    };
                    return Ok(self.finish(
                        id,
                        start,
                        StmtNode::If {
                            cond,
                            cond_span,
                            then_branch,
                            else_branch,
                        },
                    ));
                }
                "while" => {
                    let id = self.reserve(StmtKind::While);
                    self.pos += 1;
                    let (cond, cond_span) = self.paren_condition()?;
                    let body = self.branch_body()?;
                    return Ok(self.finish(
                        id,
                        start,
                        StmtNode::While {
                            cond,
                            cond_span,
                            body,
                        },
                    ));
                }
                "for" => return self.for_statement(),
                "return" => {
                    let id = self.reserve(StmtKind::Return);
                    self.pos += 1;
                    let value = if self.at_punct(";") {
                        None
                    } else {
                        Some(self.expr()?)
                    };
                    self.expect_punct(";")?;
                    return Ok(self.finish(id, start, StmtNode::Return(value)));
                }
                "break" | "continue" => {
                    let is_break = tok.text == "break";
                    let kind = if is_break {
                        StmtKind::Break
                    } else {
                        StmtKind::Continue
                    };
                    let id = self.reserve(kind);
                    self.pos += 1;
                    self.expect_punct(";")?;
                    let node = if is_break {
                        StmtNode::Break
                    } else {
                        StmtNode::Continue
                    };
                    return Ok(self.finish(id, start, node));
                }
                _ => {}
            }
        }

        let id = self.simple_statement()?;
        self.expect_punct(";")?;
        self.statements[id].span.end = self.pos;
        Ok(id)
    }

    fn for_statement(&mut self) -> Result<StmtId, ParseError> {
        let start = self.pos;
        let id = self.reserve(StmtKind::For);
        self.expect_keyword("for")?;
        self.expect_punct("(")?;
        let init = if self.at_punct(";") {
            None
        } else {
            Some(self.simple_statement()?)
        };
        self.expect_punct(";")?;
        let cond_start = self.pos;
        let cond = if self.at_punct(";") {
            None
        } else {
            Some(self.expr()?)
        };
        let cond_span = cond_start..self.pos;
        self.expect_punct(";")?;
        let update = if self.at_punct(")") {
            None
        } else {
            Some(self.simple_statement()?)
        };
        self.expect_punct(")")?;
        let body = self.branch_body()?;
        Ok(self.finish(
            id,
            start,
            StmtNode::For {
                init,
                cond,
                cond_span,
                update,
                body,
            },
        ))
    }

    /// Declaration, assignment or expression statement, without the `;`.
    fn simple_statement(&mut self) -> Result<StmtId, ParseError> {
        let start = self.pos;
        if self.at_declaration() {
            let id = self.reserve(StmtKind::Decl);
            let ty = self.type_ref()?;
            let name = self.identifier()?;
            let init = if self.at_op("=") {
                self.pos += 1;
                Some(self.expr()?)
            } else {
                None
            };
            return Ok(self.finish(id, start, StmtNode::Decl { ty, name, init }));
        }

        let id = self.reserve(StmtKind::ExprStmt);
        let lhs = self.expr()?;
        if let Some(op) = self
            .peek()
            .filter(|t| t.kind == TokenKind::Operator && ASSIGN_OPS.contains(&t.text.as_str()))
        {
            self.pos += 1;
            let value = self.expr()?;
            self.statements[id].kind = StmtKind::Assign;
            return Ok(self.finish(
                id,
                start,
                StmtNode::Assign {
                    target: lhs,
                    op: op.text.clone(),
                    value,
                },
            ));
        }
        Ok(self.finish(id, start, StmtNode::Expr(lhs)))
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let cond = self.binary(0)?;
        if self.at_op("?") {
            self.pos += 1;
            let then = self.expr()?;
            if !self.at_op(":") {
                return Err(self.error(&[":"]));
            }
            self.pos += 1;
            let otherwise = self.expr()?;
            return Ok(Expr::Ternary {
                cond: Box::new(cond),
                then: Box::new(then),
                otherwise: Box::new(otherwise),
            });
        }
        Ok(cond)
    }

    fn binary(&mut self, level: usize) -> Result<Expr, ParseError> {
        if level == BINARY_LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        while let Some(op) = self
            .peek()
            .filter(|t| t.kind == TokenKind::Operator && BINARY_LEVELS[level].contains(&t.text.as_str()))
        {
            self.pos += 1;
            let rhs = self.binary(level + 1)?;
            lhs = Expr::Binary {
                op: op.text.clone(),
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some(op) = self
            .peek()
            .filter(|t| t.kind == TokenKind::Operator && ["!", "-", "+", "~", "++", "--"].contains(&t.text.as_str()))
        {
            self.pos += 1;
            let operand = self.unary()?;
            return Ok(Expr::Unary {
                op: op.text.clone(),
                operand: Box::new(operand),
                postfix: false,
            });
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut expr = self.primary()?;
        loop {
            if self.at_punct(".") {
                self.pos += 1;
                let name = self.identifier()?;
                if self.at_punct("(") {
                    let args = self.arguments()?;
                    expr = Expr::Call {
                        target: Some(Box::new(expr)),
                        name,
                        args,
                    };
                } else {
                    expr = Expr::Field {
                        target: Box::new(expr),
                        name,
                    };
                }
            } else if self.at_punct("[") {
                self.pos += 1;
                let index = self.expr()?;
                self.expect_punct("]")?;
                expr = Expr::Index {
                    target: Box::new(expr),
                    index: Box::new(index),
                };
            } else if self.at_op("++") || self.at_op("--") {
                let op = self.tokens[self.pos].text.clone();
                self.pos += 1;
                expr = Expr::Unary {
                    op,
                    operand: Box::new(expr),
                    postfix: true,
                };
            } else {
                return Ok(expr);
            }
        }
    }

    fn arguments(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.expect_punct("(")?;
        let mut args = Vec::new();
        if !self.at_punct(")") {
            loop {
                args.push(self.expr()?);
                if self.at_punct(",") {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        Ok(args)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        const EXPECTED: &[&str] = &["identifier", "literal", "(", "this", "new"];
        let Some(tok) = self.peek() else {
            return Err(self.error(EXPECTED));
        };
        match tok.kind {
            TokenKind::Identifier => {
                self.pos += 1;
                if self.at_punct("(") {
                    let args = self.arguments()?;
                    Ok(Expr::Call {
                        target: None,
                        name: tok.text.clone(),
                        args,
                    })
                } else {
                    Ok(Expr::Name(tok.text.clone()))
                }
            }
            k if k.is_literal() => {
                self.pos += 1;
                Ok(Expr::Literal(tok.text.clone()))
            }
            TokenKind::Keyword if tok.text == "null" => {
                self.pos += 1;
                Ok(Expr::Literal("null".into()))
            }
            TokenKind::Keyword if tok.text == "this" => {
                self.pos += 1;
                Ok(Expr::This)
            }
            TokenKind::Keyword if tok.text == "new" => {
                self.pos += 1;
                let ty = self.identifier()?;
                let args = self.arguments()?;
                Ok(Expr::New { ty, args })
            }
            TokenKind::Punct if tok.text == "(" => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect_punct(")")?;
                Ok(inner)
            }
            _ => Err(self.error(EXPECTED)),
        }
    }
}
