//! Recursive-descent parser for the concrete formula syntax.
//!
//! Precedence, loosest first: `&` (left-associative, collected into one n-ary
//! conjunction per parenthesis level), `U[a,b]` (left-associative), then the
//! prefix operators `G[a,b]`, `F[a,b]` and `!`.

use super::{Formula, Interval, IntervalError, PredicateTable};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown predicate `{name}` at byte {offset}")]
    UnknownPredicate { name: String, offset: usize },
    #[error("bad interval at byte {offset}: {source}")]
    BadInterval {
        offset: usize,
        #[source]
        source: IntervalError,
    },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownPredicate { offset, .. }
            | ParseError::BadInterval { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Bang,
    Amp,
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
}

fn describe(tok: Option<&Tok>) -> String {
    match tok {
        None => "end of input".into(),
        Some(Tok::Ident(s)) => format!("`{s}`"),
        Some(Tok::Num(v)) => format!("number {v}"),
        Some(Tok::Bang) => "`!`".into(),
        Some(Tok::Amp) => "`&`".into(),
        Some(Tok::LParen) => "`(`".into(),
        Some(Tok::RParen) => "`)`".into(),
        Some(Tok::LBrack) => "`[`".into(),
        Some(Tok::RBrack) => "`]`".into(),
        Some(Tok::Comma) => "`,`".into(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'!' => out.push((Tok::Bang, start)),
            b'&' => out.push((Tok::Amp, start)),
            b'(' => out.push((Tok::LParen, start)),
            b')' => out.push((Tok::RParen, start)),
            b'[' => out.push((Tok::LBrack, start)),
            b']' => out.push((Tok::RBrack, start)),
            b',' => out.push((Tok::Comma, start)),
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            b'0'..=b'9' | b'-' | b'+' => {
                i = scan_number(bytes, i).ok_or_else(|| ParseError::Syntax {
                    offset: start,
                    message: "malformed number".into(),
                })?;
                let value = text[start..i].parse::<f64>().map_err(|_| ParseError::Syntax {
                    offset: start,
                    message: "malformed number".into(),
                })?;
                out.push((Tok::Num(value), start));
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        }
        i += 1;
    }
    Ok(out)
}

/// End of a `[+-]digits[.digits][(e|E)[+-]digits]` literal starting at `i`.
fn scan_number(bytes: &[u8], mut i: usize) -> Option<usize> {
    let digits = |mut j: usize| {
        let s = j;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        (j > s).then_some(j)
    };
    if matches!(bytes.get(i), Some(b'-' | b'+')) {
        i += 1;
    }
    i = digits(i)?;
    if bytes.get(i) == Some(&b'.') {
        i = digits(i + 1)?;
    }
    if matches!(bytes.get(i), Some(b'e' | b'E')) {
        let mut j = i + 1;
        if matches!(bytes.get(j), Some(b'-' | b'+')) {
            j += 1;
        }
        i = digits(j)?;
    }
    Some(i)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
    table: &'a PredicateTable,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(_, o)| *o)
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        ParseError::Syntax {
            offset: self.offset(),
            message: format!("expected {expected}, found {}", describe(self.peek())),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn is_keyword_with_interval(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == word)
            && self.peek_at(1) == Some(&Tok::LBrack)
    }

    fn conjunction(&mut self) -> Result<Formula, ParseError> {
        let mut parts = vec![self.until()?];
        while self.peek() == Some(&Tok::Amp) {
            self.pos += 1;
            parts.push(self.until()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Formula::And(parts) })
    }

    fn until(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.unary()?;
        while self.is_keyword_with_interval("U") {
            self.pos += 1;
            let interval = self.interval()?;
            let rhs = self.unary()?;
            lhs = Formula::until(interval, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        let offset = self.offset();
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.conjunction()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some(Tok::Bang) => {
                self.pos += 1;
                let name = self.predicate_name()?;
                Ok(Formula::NotPred(name))
            }
            Some(Tok::Ident(word)) if (word == "G" || word == "F") && self.peek_at(1) == Some(&Tok::LBrack) => {
                self.pos += 1;
                let interval = self.interval()?;
                let body = self.unary()?;
                Ok(if word == "G" {
                    Formula::always(interval, body)
                } else {
                    Formula::eventually(interval, body)
                })
            }
            Some(Tok::Ident(word)) if word == "T" => {
                self.pos += 1;
                Ok(Formula::True)
            }
            Some(Tok::Ident(_)) => self.predicate_name().map(Formula::Pred),
            _ => Err(ParseError::Syntax {
                offset,
                message: format!("expected a formula, found {}", describe(self.peek())),
            }),
        }
    }

    fn predicate_name(&mut self) -> Result<String, ParseError> {
        let offset = self.offset();
        match self.peek().cloned() {
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if !self.table.contains(&name) {
                    return Err(ParseError::UnknownPredicate { name, offset });
                }
                Ok(name)
            }
            _ => Err(self.unexpected("a predicate name")),
        }
    }

    fn interval(&mut self) -> Result<Interval, ParseError> {
        let offset = self.offset();
        self.expect(Tok::LBrack, "`[`")?;
        let a = self.number()?;
        self.expect(Tok::Comma, "`,`")?;
        let b = self.number()?;
        self.expect(Tok::RBrack, "`]`")?;
        Interval::new(a, b).map_err(|source| ParseError::BadInterval { offset, source })
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        match self.peek() {
            Some(Tok::Num(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.unexpected("a number")),
        }
    }
}

/// Parses formula text, resolving every predicate name against `predicates`.
pub fn parse_formula(text: &str, predicates: &PredicateTable) -> Result<Formula, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, end: text.len(), table: predicates };
    let f = p.conjunction()?;
    if p.pos != p.toks.len() {
        return Err(p.unexpected("`&`, `U[..]` or end of input"));
    }
    Ok(f)
}
