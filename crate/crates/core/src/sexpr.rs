//! Canonical text form of expressions.
//!
//! ```text
//! expr    := "(" "const" literal ")"
//!          | "(" "read" handle string ")"
//!          | "(" op expr+ ")"
//! op      := add | sub | concat | ge | gt | le | lt | eq | and | or | not
//! literal := int | string | "true" | "false"
//! handle  := "h" digits
//! string  := '"' ( char | '\"' | '\\' )* '"'
//! ```
//!
//! Tokens are separated by ASCII whitespace; the printer emits single spaces.
//! `(sub (read h1 "stock") (const 10))` is the stock decrement write function.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::expr::{Expr, FutureHandle, Node, OpKind};
use crate::Value;

pub(crate) fn write_quoted(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            c => fmt::Write::write_char(f, c)?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(v) => write!(f, "(const {v})"),
            Node::Read(h) => {
                write!(f, "(read h{} ", h.id)?;
                write_quoted(f, &h.key)?;
                f.write_str(")")
            }
            Node::Op { kind, children } => {
                write!(f, "({}", kind.name())?;
                for c in children {
                    write!(f, " {c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at byte {}: {}", self.offset, self.message)
    }
}

#[derive(Debug, PartialEq)]
enum Token {
    Open,
    Close,
    Atom(String),
    Quoted(String),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>, ParseError> {
    let mut out = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b'(' => {
                out.push((i, Token::Open));
                i += 1;
            }
            b')' => {
                out.push((i, Token::Close));
                i += 1;
            }
            c if c.is_ascii_whitespace() => i += 1,
            b'"' => {
                let start = i;
                let mut s = String::new();
                let mut chars = src[i + 1..].char_indices();
                loop {
                    match chars.next() {
                        None => return Err(ParseError { offset: start, message: "unterminated string".into() }),
                        Some((_, '\\')) => match chars.next() {
                            Some((_, e @ ('"' | '\\'))) => s.push(e),
                            _ => return Err(ParseError { offset: start, message: "bad escape".into() }),
                        },
                        Some((j, '"')) => {
                            i = i + 1 + j + 1;
                            break;
                        }
                        Some((_, ch)) => s.push(ch),
                    }
                }
                out.push((start, Token::Quoted(s)));
            }
            _ => {
                let start = i;
                while i < bytes.len() && !bytes[i].is_ascii_whitespace() && !matches!(bytes[i], b'(' | b')' | b'"') {
                    i += 1;
                }
                out.push((start, Token::Atom(src[start..i].into())));
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let offset = self.tokens.get(self.pos).map(|t| t.0).unwrap_or(self.end);
        Err(ParseError { offset, message: message.into() })
    }

    fn next(&mut self) -> Option<&Token> {
        let t = self.tokens.get(self.pos).map(|t| &t.1);
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|t| &t.1)
    }

    fn expect_close(&mut self) -> Result<(), ParseError> {
        match self.next() {
            Some(Token::Close) => Ok(()),
            _ => {
                self.pos -= 1;
                self.err("expected ')'")
            }
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        match self.next() {
            Some(Token::Open) => {}
            _ => {
                self.pos -= 1;
                return self.err("expected '('");
            }
        }
        let head = match self.next() {
            Some(Token::Atom(a)) => a.clone(),
            _ => {
                self.pos -= 1;
                return self.err("expected operator name");
            }
        };
        match head.as_str() {
            "const" => {
                let v = match self.next() {
                    Some(Token::Quoted(s)) => Value::Str(s.clone()),
                    Some(Token::Atom(a)) if a == "true" => Value::Bool(true),
                    Some(Token::Atom(a)) if a == "false" => Value::Bool(false),
                    Some(Token::Atom(a)) => match a.parse::<i64>() {
                        Ok(i) => Value::Int(i),
                        Err(_) => {
                            self.pos -= 1;
                            return self.err("bad literal");
                        }
                    },
                    _ => {
                        self.pos -= 1;
                        return self.err("expected literal");
                    }
                };
                self.expect_close()?;
                Ok(Expr::constant(v))
            }
            "read" => {
                let id = match self.next() {
                    Some(Token::Atom(a)) if a.starts_with('h') => a[1..].parse::<u32>().ok(),
                    _ => None,
                };
                let Some(id) = id else {
                    self.pos -= 1;
                    return self.err("expected handle like h1");
                };
                let key = match self.next() {
                    Some(Token::Quoted(s)) => s.clone(),
                    _ => {
                        self.pos -= 1;
                        return self.err("expected quoted key");
                    }
                };
                self.expect_close()?;
                Ok(Expr::read(FutureHandle::new(id, key)))
            }
            name => {
                let Some(kind) = OpKind::from_name(name) else {
                    self.pos -= 1;
                    return self.err(alloc::format!("unknown operator {name}"));
                };
                let mut children = Vec::new();
                while matches!(self.peek(), Some(Token::Open)) {
                    children.push(self.expr()?);
                }
                self.expect_close()?;
                Expr::compose(kind, children).or_else(|e| self.err(alloc::format!("{e}")))
            }
        }
    }
}

/// Parses the canonical text form.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0, end: src.len() };
    let e = p.expr()?;
    if p.pos < p.tokens.len() {
        return p.err("trailing input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn prints_running_example() {
        let h = FutureHandle::new(1, "stock");
        let e = Expr::read(h).sub(&Expr::constant(10));
        assert_eq!(e.to_string(), r#"(sub (read h1 "stock") (const 10))"#);
    }

    #[test]
    fn parses_with_loose_whitespace() {
        let e = parse("( ge\n (read h3 \"a b\")   (const -4) )").unwrap();
        assert_eq!(e, Expr::read(FutureHandle::new(3, "a b")).ge(&Expr::constant(-4)));
    }

    #[test]
    fn escapes_round_trip() {
        let e = Expr::constant("say \"hi\" \\o/").concat(&Expr::constant(true));
        assert_eq!(parse(&e.to_string()).unwrap(), e);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse("(const)").is_err());
        assert!(parse("(frob (const 1))").is_err());
        assert!(parse("(not (const true) (const false))").is_err());
        assert!(parse("(read x \"k\")").is_err());
        assert!(parse("(const 1) (const 2)").is_err());
        assert!(parse("(const \"open").is_err());
    }
}
