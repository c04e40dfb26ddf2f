//! Text form of expressions.
//!
//! Grammar (documented in `docs/dsl.md`):
//!
//! ```text
//! expr   := term  (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' exponent)?            -- exponent is an integer literal
//! atom   := number | symbol | func '(' expr ')' | '(' expr ')'
//! func   := 'sin' | 'cos' | 'tan'
//! number := digits ('.' digits)? (('e'|'E') ('+'|'-')? digits)?
//! ```
//!
//! Numeric literals parse to exact rationals (including decimal and
//! e-notation forms), so `0.1 + 0.2` is exactly `3/10` until evaluation.

use super::{DagInner, Expr, ExprDag, NodeId};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::Pow;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedEnd,
    UnexpectedToken(String),
    UnknownSymbol(String),
    IntegerExponentExpected,
    ExponentOutOfRange,
}

/// Syntax or symbol error with the byte position where it occurred.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub pos: usize,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::UnexpectedChar(c) => {
                write!(f, "unexpected character `{c}` at byte {}", self.pos)
            }
            ParseErrorKind::UnexpectedEnd => write!(f, "unexpected end of input"),
            ParseErrorKind::UnexpectedToken(t) => {
                write!(f, "unexpected `{t}` at byte {}", self.pos)
            }
            ParseErrorKind::UnknownSymbol(s) => {
                write!(f, "unknown symbol `{s}` at byte {}", self.pos)
            }
            ParseErrorKind::IntegerExponentExpected => {
                write!(f, "integer exponent expected at byte {}", self.pos)
            }
            ParseErrorKind::ExponentOutOfRange => {
                write!(f, "exponent out of range at byte {}", self.pos)
            }
        }
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigRational),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Next token and its starting byte, or None at end of input.
    fn next(&mut self) -> Result<Option<(Tok, usize)>, ParseError> {
        self.skip_ws();
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = self.src[self.pos] as char;
        let tok = match c {
            '+' => {
                self.pos += 1;
                Tok::Plus
            }
            '-' => {
                self.pos += 1;
                Tok::Minus
            }
            '*' => {
                self.pos += 1;
                Tok::Star
            }
            '/' => {
                self.pos += 1;
                Tok::Slash
            }
            '^' => {
                self.pos += 1;
                Tok::Caret
            }
            '(' => {
                self.pos += 1;
                Tok::LParen
            }
            ')' => {
                self.pos += 1;
                Tok::RParen
            }
            '0'..='9' | '.' => self.lex_number(start)?,
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut end = self.pos;
                while end < self.src.len()
                    && ((self.src[end] as char).is_ascii_alphanumeric() || self.src[end] == b'_')
                {
                    end += 1;
                }
                let name = std::str::from_utf8(&self.src[self.pos..end])
                    .unwrap()
                    .to_string();
                self.pos = end;
                Tok::Ident(name)
            }
            other => {
                return Err(ParseError {
                    kind: ParseErrorKind::UnexpectedChar(other),
                    pos: start,
                })
            }
        };
        Ok(Some((tok, start)))
    }

    fn lex_number(&mut self, start: usize) -> Result<Tok, ParseError> {
        let mut end = self.pos;
        let digits = |src: &[u8], mut i: usize| {
            while i < src.len() && src[i].is_ascii_digit() {
                i += 1;
            }
            i
        };
        end = digits(self.src, end);
        let int_end = end;
        let mut frac: &[u8] = b"";
        if end < self.src.len() && self.src[end] == b'.' {
            let fs = end + 1;
            end = digits(self.src, fs);
            frac = &self.src[fs..end];
        }
        if int_end == self.pos && frac.is_empty() {
            return Err(ParseError {
                kind: ParseErrorKind::UnexpectedChar('.'),
                pos: start,
            });
        }
        let mut exp: i64 = 0;
        if end < self.src.len() && (self.src[end] == b'e' || self.src[end] == b'E') {
            let mut es = end + 1;
            let mut sign = 1i64;
            if es < self.src.len() && (self.src[es] == b'+' || self.src[es] == b'-') {
                if self.src[es] == b'-' {
                    sign = -1;
                }
                es += 1;
            }
            let ee = digits(self.src, es);
            if ee > es {
                let txt = std::str::from_utf8(&self.src[es..ee]).unwrap();
                exp = sign
                    * txt.parse::<i64>().map_err(|_| ParseError {
                        kind: ParseErrorKind::ExponentOutOfRange,
                        pos: start,
                    })?;
                end = ee;
            }
            // a bare `e` with no digits after a number is rejected outright
            if ee == es {
                return Err(ParseError {
                    kind: ParseErrorKind::UnexpectedToken("e".into()),
                    pos: end,
                });
            }
        }
        let int_part = std::str::from_utf8(&self.src[self.pos..int_end]).unwrap();
        let mantissa_txt = format!(
            "{}{}",
            if int_part.is_empty() { "0" } else { int_part },
            std::str::from_utf8(frac).unwrap()
        );
        let mantissa: BigInt = mantissa_txt.parse().unwrap();
        let scale = frac.len() as i64;
        let ten = BigInt::from(10);
        let net = exp - scale;
        if net.unsigned_abs() > 100_000 {
            return Err(ParseError {
                kind: ParseErrorKind::ExponentOutOfRange,
                pos: start,
            });
        }
        let value = if net >= 0 {
            BigRational::from(mantissa * Pow::pow(ten, net as u64))
        } else {
            BigRational::new(mantissa, Pow::pow(ten, (-net) as u64))
        };
        self.pos = end;
        Ok(Tok::Num(value))
    }
}

/// Which symbols an expression is allowed to mention.
pub(crate) enum SymbolPolicy<'a> {
    /// Any identifier becomes a symbol.
    Open,
    /// Only the listed names are allowed; anything else is `UnknownSymbol`.
    Closed(&'a [String]),
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    at: usize,
    end_pos: usize,
    policy: SymbolPolicy<'a>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks
            .get(self.at)
            .map(|&(_, p)| p)
            .unwrap_or(self.end_pos)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|(t, _)| t.clone());
        if t.is_some() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, t: &Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(t) {
            self.at += 1;
            Ok(())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn unexpected(&self, _expected: &str) -> ParseError {
        match self.peek() {
            None => ParseError {
                kind: ParseErrorKind::UnexpectedEnd,
                pos: self.end_pos,
            },
            Some(t) => ParseError {
                kind: ParseErrorKind::UnexpectedToken(tok_text(t)),
                pos: self.pos(),
            },
        }
    }

    fn expr(&mut self, dag: &mut DagInner) -> Result<NodeId, ParseError> {
        let mut terms = vec![self.term(dag)?];
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.at += 1;
                    let t = self.term(dag)?;
                    terms.push(t);
                }
                Some(Tok::Minus) => {
                    self.at += 1;
                    let t = self.term(dag)?;
                    terms.push(dag.ineg(t));
                }
                _ => break,
            }
        }
        Ok(dag.iadd(&terms))
    }

    fn term(&mut self, dag: &mut DagInner) -> Result<NodeId, ParseError> {
        let mut acc = self.unary(dag)?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.at += 1;
                    let u = self.unary(dag)?;
                    acc = dag.iprod(&[acc, u]);
                }
                Some(Tok::Slash) => {
                    self.at += 1;
                    let u = self.unary(dag)?;
                    acc = dag.iquot(acc, u);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn unary(&mut self, dag: &mut DagInner) -> Result<NodeId, ParseError> {
        if self.peek() == Some(&Tok::Minus) {
            self.at += 1;
            let u = self.unary(dag)?;
            return Ok(dag.ineg(u));
        }
        self.power(dag)
    }

    fn power(&mut self, dag: &mut DagInner) -> Result<NodeId, ParseError> {
        let base = self.atom(dag)?;
        if self.peek() == Some(&Tok::Caret) {
            self.at += 1;
            let k = self.exponent()?;
            return Ok(dag.ipow(base, k));
        }
        Ok(base)
    }

    /// Integer literal, optionally negative, optionally parenthesized.
    fn exponent(&mut self) -> Result<i32, ParseError> {
        let pos = self.pos();
        let parens = if self.peek() == Some(&Tok::LParen) {
            self.at += 1;
            true
        } else {
            false
        };
        let neg = if self.peek() == Some(&Tok::Minus) {
            self.at += 1;
            true
        } else {
            false
        };
        let k = match self.bump() {
            Some(Tok::Num(r)) if r.is_integer() => {
                use num::traits::ToPrimitive;
                r.to_integer().to_i32().ok_or(ParseError {
                    kind: ParseErrorKind::ExponentOutOfRange,
                    pos,
                })?
            }
            _ => {
                return Err(ParseError {
                    kind: ParseErrorKind::IntegerExponentExpected,
                    pos,
                })
            }
        };
        if parens {
            self.expect(&Tok::RParen, ")")?;
        }
        Ok(if neg { -k } else { k })
    }

    fn atom(&mut self, dag: &mut DagInner) -> Result<NodeId, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Num(r)) => Ok(dag.irat(r)),
            Some(Tok::Ident(name)) => match name.as_str() {
                "sin" | "cos" | "tan" => {
                    self.expect(&Tok::LParen, "(")?;
                    let arg = self.expr(dag)?;
                    self.expect(&Tok::RParen, ")")?;
                    Ok(match name.as_str() {
                        "sin" => dag.isin(arg),
                        "cos" => dag.icos(arg),
                        _ => dag.itan(arg),
                    })
                }
                _ => {
                    if let SymbolPolicy::Closed(allowed) = &self.policy {
                        if !allowed.iter().any(|a| a == &name) {
                            return Err(ParseError {
                                kind: ParseErrorKind::UnknownSymbol(name),
                                pos,
                            });
                        }
                    }
                    Ok(dag.isym(&name))
                }
            },
            Some(Tok::LParen) => {
                let e = self.expr(dag)?;
                self.expect(&Tok::RParen, ")")?;
                Ok(e)
            }
            Some(t) => Err(ParseError {
                kind: ParseErrorKind::UnexpectedToken(tok_text(&t)),
                pos,
            }),
            None => Err(ParseError {
                kind: ParseErrorKind::UnexpectedEnd,
                pos: self.end_pos,
            }),
        }
    }
}

fn tok_text(t: &Tok) -> String {
    match t {
        Tok::Num(r) => r.to_string(),
        Tok::Ident(s) => s.clone(),
        Tok::Plus => "+".into(),
        Tok::Minus => "-".into(),
        Tok::Star => "*".into(),
        Tok::Slash => "/".into(),
        Tok::Caret => "^".into(),
        Tok::LParen => "(".into(),
        Tok::RParen => ")".into(),
    }
}

impl ExprDag {
    /// Parse an expression; any identifier is accepted as a symbol.
    pub fn parse(&self, src: &str) -> Result<Expr, ParseError> {
        self.parse_with(src, SymbolPolicy::Open)
    }

    /// Parse an expression; identifiers outside `allowed` are rejected.
    pub fn parse_closed(&self, src: &str, allowed: &[String]) -> Result<Expr, ParseError> {
        self.parse_with(src, SymbolPolicy::Closed(allowed))
    }

    fn parse_with(&self, src: &str, policy: SymbolPolicy<'_>) -> Result<Expr, ParseError> {
        let mut lexer = Lexer::new(src);
        let mut toks = Vec::new();
        while let Some(t) = lexer.next()? {
            toks.push(t);
        }
        let mut p = Parser {
            toks,
            at: 0,
            end_pos: src.len(),
            policy,
        };
        let mut inner = self.lock();
        let id = p.expr(&mut inner)?;
        if p.at != p.toks.len() {
            return Err(p.unexpected("end of input"));
        }
        drop(inner);
        Ok(Expr {
            dag: self.clone(),
            id,
        })
    }
}
