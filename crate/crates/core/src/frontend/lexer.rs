//! Lexer for the Java-like mini-language.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Identifier,
    Keyword,
    NumberLit,
    StringLit,
    BoolLit,
    Operator,
    Punct,
}

impl TokenKind {
    pub fn is_literal(self) -> bool {
        matches!(
            self,
            TokenKind::NumberLit | TokenKind::StringLit | TokenKind::BoolLit
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
}

impl Token {
    pub fn new(kind: TokenKind, text: impl Into<String>) -> Self {
        let text = text.into();
        debug_assert!(!text.is_empty());
        Token { text, kind }
    }

    pub fn is(&self, kind: TokenKind, text: &str) -> bool {
        self.kind == kind && self.text == text
    }

    pub fn is_punct(&self, text: &str) -> bool {
        self.is(TokenKind::Punct, text)
    }

    pub fn is_op(&self, text: &str) -> bool {
        self.is(TokenKind::Operator, text)
    }

    pub fn is_keyword(&self, text: &str) -> bool {
        self.is(TokenKind::Keyword, text)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexError {
    #[error("unrecognized character {ch:?} at byte {offset}")]
    UnexpectedChar { ch: char, offset: usize },
    #[error("unterminated literal starting at byte {offset}")]
    Unterminated { offset: usize },
}

pub const KEYWORDS: &[&str] = &[
    "if",
    "else",
    "while",
    "for",
    "return",
    "break",
    "continue",
    "new",
    "this",
    "null",
    "void",
    "int",
    "long",
    "short",
    "byte",
    "char",
    "float",
    "double",
    "boolean",
    "public",
    "private",
    "protected",
    "static",
    "final",
    "synchronized",
];

/// Primitive type keywords, including `void` for return types.
pub const PRIMITIVE_TYPES: &[&str] = &[
    "void", "int", "long", "short", "byte", "char", "float", "double", "boolean",
];

pub const MODIFIERS: &[&str] = &[
    "public",
    "private",
    "protected",
    "static",
    "final",
    "synchronized",
];

// Longest match first.
const OPERATORS: &[&str] = &[
    ">>=", "<<=", "==", "!=", "<=", ">=", "&&", "||", "++", "--", "+=", "-=", "*=", "/=", "%=",
    "&=", "|=", "^=", "<<", ">>", "+", "-", "*", "/", "%", "<", ">", "!", "=", "&", "|", "^", "~",
    "?", ":",
];

const PUNCT: &[char] = &['(', ')', '{', '}', '[', ']', ';', ',', '.'];

pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut pos = 0;

    while pos < bytes.len() {
        let rest = &source[pos..];
        let ch = rest.chars().next().expect("non-empty remainder");

        if ch.is_whitespace() {
            pos += ch.len_utf8();
            continue;
        }
        if rest.starts_with("//") {
            pos += rest.find('\n').unwrap_or(rest.len());
            continue;
        }
        if let Some(comment) = rest.strip_prefix("/*") {
            match comment.find("*/") {
                Some(end) => pos += end + 4,
                None => return Err(LexError::Unterminated { offset: pos }),
            }
            continue;
        }

        if ch.is_ascii_alphabetic() || ch == '_' || ch == '$' {
            let len = rest
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '$'))
                .unwrap_or(rest.len());
            let word = &rest[..len];
            let kind = match word {
                "true" | "false" => TokenKind::BoolLit,
                w if KEYWORDS.contains(&w) => TokenKind::Keyword,
                _ => TokenKind::Identifier,
            };
            tokens.push(Token::new(kind, word));
            pos += len;
            continue;
        }

        if ch.is_ascii_digit() {
            let len = number_len(rest);
            tokens.push(Token::new(TokenKind::NumberLit, &rest[..len]));
            pos += len;
            continue;
        }

        if ch == '"' || ch == '\'' {
            let len = quoted_len(rest, ch).ok_or(LexError::Unterminated { offset: pos })?;
            tokens.push(Token::new(TokenKind::StringLit, &rest[..len]));
            pos += len;
            continue;
        }

        if PUNCT.contains(&ch) {
            tokens.push(Token::new(TokenKind::Punct, ch.to_string()));
            pos += 1;
            continue;
        }

        if let Some(op) = OPERATORS.iter().find(|op| rest.starts_with(**op)) {
            tokens.push(Token::new(TokenKind::Operator, *op));
            pos += op.len();
            continue;
        }

        return Err(LexError::UnexpectedChar { ch, offset: pos });
    }

    Ok(tokens)
}

fn number_len(s: &str) -> usize {
    let b = s.as_bytes();
    let mut i = 0;
    if b.len() > 1 && b[0] == b'0' && (b[1] == b'x' || b[1] == b'X') {
        i = 2;
        while i < b.len() && (b[i].is_ascii_hexdigit() || b[i] == b'_') {
            i += 1;
        }
    } else {
        while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'_') {
            i += 1;
        }
        if i + 1 < b.len() && b[i] == b'.' && b[i + 1].is_ascii_digit() {
            i += 1;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
        }
        if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
            let mut j = i + 1;
            if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                j += 1;
            }
            if j < b.len() && b[j].is_ascii_digit() {
                i = j;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
            }
        }
    }
    if i < b.len() && matches!(b[i], b'L' | b'l' | b'f' | b'F' | b'd' | b'D') {
        i += 1;
    }
    i
}

fn quoted_len(s: &str, quote: char) -> Option<usize> {
    let mut escaped = false;
    for (i, c) in s.char_indices().skip(1) {
        match c {
            '\n' => return None,
            '\\' if !escaped => escaped = true,
            c if c == quote && !escaped => return Some(i + 1),
            _ => escaped = false,
        }
    }
    None
}

/// Replaces number, string and boolean literals with `<NUM>`, `<STR>` and
/// `<BOOL>`. Token kinds are kept so the parser still sees literals.
pub fn abstract_literals(tokens: &[Token]) -> Vec<Token> {
    tokens
        .iter()
        .map(|t| match t.kind {
            TokenKind::NumberLit => Token::new(t.kind, NUM_TOKEN),
            TokenKind::StringLit => Token::new(t.kind, STR_TOKEN),
            TokenKind::BoolLit => Token::new(t.kind, BOOL_TOKEN),
            _ => t.clone(),
        })
        .collect()
}

pub const NUM_TOKEN: &str = "<NUM>";
pub const STR_TOKEN: &str = "<STR>";
pub const BOOL_TOKEN: &str = "<BOOL>";

#[cfg(test)]
mod tests {
    use super::*;
    use TokenKind::*;

    fn kinds(src: &str) -> Vec<(TokenKind, String)> {
        tokenize(src)
            .unwrap()
            .into_iter()
            .map(|t| (t.kind, t.text))
            .collect()
    }

    #[test]
    fn simple_assignment() {
        assert_eq!(
            kinds("x = 42;"),
            vec![
                (Identifier, "x".into()),
                (Operator, "=".into()),
                (NumberLit, "42".into()),
                (Punct, ";".into()),
            ]
        );
    }

    #[test]
    fn empty_source() {
        assert!(tokenize("").unwrap().is_empty());
        assert!(tokenize("  \n\t // only a comment").unwrap().is_empty());
    }

    #[test]
    fn if_statement_has_nine_tokens() {
        let toks = tokenize("if (flag) { return true; }").unwrap();
        assert_eq!(toks.len(), 9);
        assert_eq!(toks[6], Token::new(BoolLit, "true"));
        assert_eq!(toks[0].kind, Keyword);
        assert_eq!(toks[2].kind, Identifier);
    }

    #[test]
    fn literal_forms() {
        let toks = kinds(r#"a = "he said \"hi\"" + 'c' + 0x1F + 3.5e-2f + 10L;"#);
        let lits: Vec<_> = toks.iter().filter(|(k, _)| k.is_literal()).collect();
        assert_eq!(lits.len(), 5);
        assert_eq!(lits[0].1, r#""he said \"hi\"""#);
        assert_eq!(lits[2].1, "0x1F");
        assert_eq!(lits[3].1, "3.5e-2f");
        assert_eq!(lits[4].1, "10L");
    }

    #[test]
    fn member_access_is_not_a_number() {
        let toks = kinds("a.b(1).c");
        assert_eq!(toks[1], (Punct, ".".into()));
        assert_eq!(toks[4], (NumberLit, "1".into()));
    }

    #[test]
    fn longest_operator_wins() {
        let toks = kinds("i++ <= j-- && k != 0");
        let ops: Vec<_> = toks
            .iter()
            .filter(|(k, _)| *k == Operator)
            .map(|(_, t)| t.as_str())
            .collect();
        assert_eq!(ops, vec!["++", "<=", "--", "&&", "!="]);
    }

    #[test]
    fn unknown_character_reports_offset() {
        assert_eq!(
            tokenize("x = #;"),
            Err(LexError::UnexpectedChar { ch: '#', offset: 4 })
        );
        assert_eq!(
            tokenize("s = \"open"),
            Err(LexError::Unterminated { offset: 4 })
        );
    }

    #[test]
    fn abstraction_examples() {
        let toks = vec![Token::new(NumberLit, "42")];
        assert_eq!(abstract_literals(&toks), vec![Token::new(NumberLit, "<NUM>")]);

        let x = vec![Token::new(Identifier, "x")];
        assert_eq!(abstract_literals(&x), x);

        let toks = vec![Token::new(StringLit, "\"hi\""), Token::new(BoolLit, "true")];
        let out: Vec<_> = abstract_literals(&toks).into_iter().map(|t| t.text).collect();
        assert_eq!(out, vec!["<STR>", "<BOOL>"]);
    }
}
