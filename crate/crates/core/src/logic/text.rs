//! Prefix text format for formulas.
//!
//! ```text
//! formula := "(" "y" INDEX ")"
//!          | "(" "yhat" INDEX ")"
//!          | "(" "lit" REAL ")"
//!          | "(" "not" formula ")"
//!          | "(" ("and" | "or" | "lin-and" | "lin-or" | "implies") formula formula ")"
//!          | "(" ("big-and" | "big-or") formula+ ")"
//! ```
//!
//! `and`/`or` are the soft connectives. Reals use Rust's shortest
//! round-trip float syntax, including `inf` and `-inf`.

use std::fmt;

use crate::error::{Error, Result};
use crate::logic::formula::Formula;

/// Default nesting cap for [`parse_formula`].
pub const DEFAULT_MAX_DEPTH: usize = 64;

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bin = |f: &mut fmt::Formatter<'_>, tag: &str, a: &Formula, b: &Formula| {
            write!(f, "({tag} {a} {b})")
        };
        match self {
            Formula::OutputVar(i) => write!(f, "(y {i})"),
            Formula::LabelVar(i) => write!(f, "(yhat {i})"),
            Formula::Literal(r) => write!(f, "(lit {r:?})"),
            Formula::Not(a) => write!(f, "(not {a})"),
            Formula::SoftAnd(a, b) => bin(f, "and", a, b),
            Formula::SoftOr(a, b) => bin(f, "or", a, b),
            Formula::LinAnd(a, b) => bin(f, "lin-and", a, b),
            Formula::LinOr(a, b) => bin(f, "lin-or", a, b),
            Formula::Implies(a, b) => bin(f, "implies", a, b),
            Formula::BigSoftAnd(xs) | Formula::BigSoftOr(xs) => {
                let tag = if matches!(self, Formula::BigSoftAnd(_)) { "big-and" } else { "big-or" };
                write!(f, "({tag}")?;
                for x in xs {
                    write!(f, " {x}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(s: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in s.char_indices() {
        if c == '(' || c == ')' || c.is_whitespace() {
            if let Some(st) = start.take() {
                out.push(Token::Atom(&s[st..i]));
            }
            match c {
                '(' => out.push(Token::Open),
                ')' => out.push(Token::Close),
                _ => {}
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(st) = start {
        out.push(Token::Atom(&s[st..]));
    }
    out
}

struct Parser<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    max_depth: usize,
}

impl<'a> Parser<'a> {
    fn next(&mut self) -> Result<Token<'a>> {
        let t = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::Parse("unexpected end of input".into()))?;
        self.pos += 1;
        Ok(t)
    }

    fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.pos)
    }

    fn atom(&mut self) -> Result<&'a str> {
        match self.next()? {
            Token::Atom(a) => Ok(a),
            t => Err(Error::Parse(format!("expected atom, found {t:?}"))),
        }
    }

    fn close(&mut self) -> Result<()> {
        match self.next()? {
            Token::Close => Ok(()),
            t => Err(Error::Parse(format!("expected ')', found {t:?}"))),
        }
    }

    fn formula(&mut self, depth: usize) -> Result<Formula> {
        if depth > self.max_depth {
            return Err(Error::Parse(format!("nesting exceeds depth {}", self.max_depth)));
        }
        match self.next()? {
            Token::Open => {}
            t => return Err(Error::Parse(format!("expected '(', found {t:?}"))),
        }
        let head = self.atom()?;
        let f = match head {
            "y" | "yhat" => {
                let s = self.atom()?;
                let i: usize =
                    s.parse().map_err(|_| Error::Parse(format!("bad index {s:?}")))?;
                if head == "y" {
                    Formula::OutputVar(i)
                } else {
                    Formula::LabelVar(i)
                }
            }
            "lit" => {
                let s = self.atom()?;
                let r: f64 = s.parse().map_err(|_| Error::Parse(format!("bad real {s:?}")))?;
                if r.is_nan() {
                    return Err(Error::Parse("literal is NaN".into()));
                }
                Formula::Literal(r)
            }
            "not" => Formula::not(self.formula(depth + 1)?),
            "and" | "or" | "lin-and" | "lin-or" | "implies" => {
                let a = self.formula(depth + 1)?;
                let b = self.formula(depth + 1)?;
                match head {
                    "and" => Formula::soft_and(a, b),
                    "or" => Formula::soft_or(a, b),
                    "lin-and" => Formula::lin_and(a, b),
                    "lin-or" => Formula::lin_or(a, b),
                    _ => Formula::implies(a, b),
                }
            }
            "big-and" | "big-or" => {
                let mut xs = Vec::new();
                while matches!(self.peek(), Some(Token::Open)) {
                    xs.push(self.formula(depth + 1)?);
                }
                if xs.is_empty() {
                    return Err(Error::Parse(format!("{head} needs at least one operand")));
                }
                if head == "big-and" {
                    Formula::BigSoftAnd(xs)
                } else {
                    Formula::BigSoftOr(xs)
                }
            }
            other => return Err(Error::Parse(format!("unknown connective {other:?}"))),
        };
        self.close()?;
        Ok(f)
    }
}

/// Parses one formula, rejecting nesting deeper than `max_depth`.
pub fn parse_formula_with_depth(s: &str, max_depth: usize) -> Result<Formula> {
    let mut p = Parser { tokens: tokenize(s), pos: 0, max_depth };
    let f = p.formula(0)?;
    if p.pos != p.tokens.len() {
        return Err(Error::Parse("trailing input after formula".into()));
    }
    Ok(f)
}

/// Parses one formula with [`DEFAULT_MAX_DEPTH`].
pub fn parse_formula(s: &str) -> Result<Formula> {
    parse_formula_with_depth(s, DEFAULT_MAX_DEPTH)
}

impl std::str::FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_formula(s)
    }
}
