//! Mini-language frontend: lexing, literal abstraction, identifier
//! subtokens, parsing and AST construction.

mod ast;
mod lexer;
mod parser;
mod subtoken;

pub use ast::{build_ast, Ast, AstNode, NodeId, NODE_TYPES};
pub use lexer::{
    abstract_literals, tokenize, LexError, Token, TokenKind, BOOL_TOKEN, KEYWORDS, NUM_TOKEN,
    STR_TOKEN,
};
pub use parser::{
    parse_method, parse_methods, Expr, Method, Param, ParseError, Statement, StmtId, StmtKind,
    StmtNode, TypeRef,
};
pub use subtoken::{split_identifier, tokenize_comment};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Lexes, abstracts literals and parses every method in `source`.
pub fn parse_source(source: &str) -> Result<Vec<Method>, FrontendError> {
    let tokens = abstract_literals(&tokenize(source)?);
    Ok(parse_methods(&tokens)?)
}

/// Code tokens as the summarizer sees them: identifiers become lowercase
/// subtokens, everything else is kept verbatim.
pub fn code_subtokens(tokens: &[Token]) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    for t in tokens {
        if t.kind == TokenKind::Identifier {
            out.extend(split_identifier(&t.text));
        } else {
            out.push(t.text.clone());
        }
    }
    out
}

/// Rebuilds the method's token sequence by walking statement spans in order,
/// descending into nested statements. Equals `method.tokens` for any parsed
/// method.
pub fn reconstruct_tokens(method: &Method) -> Vec<Token> {
    let mut out = method.declaration_tokens.clone();
    let body = method.body_tokens();
    // opening brace
    out.push(body[0].clone());
    for &s in &method.body {
        walk(method, s, &mut out);
    }
    out.push(body[body.len() - 1].clone());
    out
}

fn walk(method: &Method, id: StmtId, out: &mut Vec<Token>) {
    let stmt = method.statement(id);
    let children = stmt.children();
    let mut pos = stmt.span.start;
    for c in children {
        let span = &method.statement(c).span;
        out.extend_from_slice(&method.tokens[pos..span.start]);
        walk(method, c, out);
        pos = span.end;
    }
    out.extend_from_slice(&method.tokens[pos..stmt.span.end]);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subtokens_of_code() {
        let toks = abstract_literals(&tokenize("conn.closeIdle(42);").unwrap());
        assert_eq!(
            code_subtokens(&toks),
            vec!["conn", ".", "close", "idle", "(", "<NUM>", ")", ";"]
        );
    }

    #[test]
    fn span_walk_round_trips() {
        let src = "void f(int n) { int s = 0; for (int i = 0; i < n; i++) { if (i % 2 == 0) s += i; else { s -= 1; } } { s = s * 2; } return; }";
        let m = &parse_source(src).unwrap()[0];
        assert_eq!(reconstruct_tokens(m), m.tokens);
    }
}
