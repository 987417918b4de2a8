//! Recursive-descent parser.
//!
//! ```text
//! formula    := conj ("||" conj)*
//! conj       := term ("&&" term)*
//! term       := "!" term | atom
//! atom       := primary ("U" "[" num "," num "]" primary)?
//! primary    := "true" | ("G"|"F") "[" num "," num "]" atom
//!             | comparison | "(" formula ")"
//! comparison := expr ("<=" | ">=" | "<" | ">") expr
//! ```
//!
//! `&&` binds tighter than `||`. Strict comparisons are read as non-strict.
//! A parenthesis opening a comparison (`(x1 + 1) <= 2`) is told apart from a
//! parenthesized formula by backtracking.

use std::fmt;

use thiserror::Error;

use super::{Formula, Interval};
use crate::expr::{BinOp, Expr, Func, RobotId};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{line}:{column}: {kind}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Syntax(String),
    Interval { a: f64, b: f64 },
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            ParseErrorKind::Interval { a, b } => {
                write!(f, "invalid interval [{a},{b}]: bounds must satisfy 0 <= a < b")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Le,
    Ge,
    Lt,
    Gt,
    AndAnd,
    OrOr,
    Bang,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Num(v) => return write!(f, "number {v}"),
            Tok::Ident(s) => return write!(f, "`{s}`"),
            Tok::LParen => "`(`",
            Tok::RParen => "`)`",
            Tok::LBracket => "`[`",
            Tok::RBracket => "`]`",
            Tok::Comma => "`,`",
            Tok::Plus => "`+`",
            Tok::Minus => "`-`",
            Tok::Star => "`*`",
            Tok::Slash => "`/`",
            Tok::Le => "`<=`",
            Tok::Ge => "`>=`",
            Tok::Lt => "`<`",
            Tok::Gt => "`>`",
            Tok::AndAnd => "`&&`",
            Tok::OrOr => "`||`",
            Tok::Bang => "`!`",
            Tok::Eof => "end of input",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let err = |msg: String, line, column| ParseError {
        kind: ParseErrorKind::Syntax(msg),
        line,
        column,
    };
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let two: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let (tok, width) = match two.as_str() {
            "<=" => (Tok::Le, 2),
            ">=" => (Tok::Ge, 2),
            "&&" => (Tok::AndAnd, 2),
            "||" => (Tok::OrOr, 2),
            _ => match c {
                '(' => (Tok::LParen, 1),
                ')' => (Tok::RParen, 1),
                '[' => (Tok::LBracket, 1),
                ']' => (Tok::RBracket, 1),
                ',' => (Tok::Comma, 1),
                '+' => (Tok::Plus, 1),
                '-' => (Tok::Minus, 1),
                '*' => (Tok::Star, 1),
                '/' => (Tok::Slash, 1),
                '<' => (Tok::Lt, 1),
                '>' => (Tok::Gt, 1),
                '!' => (Tok::Bang, 1),
                d if d.is_ascii_digit() || d == '.' => {
                    let mut j = i;
                    while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                        j += 1;
                    }
                    if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                        let mut k = j + 1;
                        if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                            k += 1;
                        }
                        if k < chars.len() && chars[k].is_ascii_digit() {
                            while k < chars.len() && chars[k].is_ascii_digit() {
                                k += 1;
                            }
                            j = k;
                        }
                    }
                    let s: String = chars[i..j].iter().collect();
                    let v: f64 = s.parse().map_err(|_| err(format!("malformed number `{s}`"), l0, c0))?;
                    (Tok::Num(v), j - i)
                }
                a if a.is_ascii_alphabetic() || a == '_' => {
                    let mut j = i;
                    while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                        j += 1;
                    }
                    (Tok::Ident(chars[i..j].iter().collect()), j - i)
                }
                other => return Err(err(format!("unexpected character `{other}`"), l0, c0)),
            },
        };
        out.push(Token { tok, line: l0, column: c0 });
        i += width;
        col += width;
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, msg: impl Into<String>) -> ParseError {
        let t = &self.toks[self.pos];
        ParseError {
            kind: ParseErrorKind::Syntax(msg.into()),
            line: t.line,
            column: t.column,
        }
    }

    fn expect(&mut self, tok: Tok) -> PResult<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error_here(format!("expected {tok}, found {}", self.peek())))
        }
    }

    fn formula(&mut self) -> PResult<Formula> {
        let mut items = vec![self.conj()?];
        while *self.peek() == Tok::OrOr {
            self.bump();
            items.push(self.conj()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Formula::Or(items)
        })
    }

    fn conj(&mut self) -> PResult<Formula> {
        let mut items = vec![self.term()?];
        while *self.peek() == Tok::AndAnd {
            self.bump();
            items.push(self.term()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Formula::And(items)
        })
    }

    fn term(&mut self) -> PResult<Formula> {
        if *self.peek() == Tok::Bang {
            self.bump();
            return Ok(Formula::not(self.term()?));
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<Formula> {
        let left = self.primary()?;
        if matches!(self.peek(), Tok::Ident(s) if s == "U") {
            self.bump();
            let i = self.interval()?;
            let right = self.primary()?;
            return Ok(Formula::until(i, left, right));
        }
        Ok(left)
    }

    fn primary(&mut self) -> PResult<Formula> {
        match self.peek().clone() {
            Tok::Ident(s) if s == "true" => {
                self.bump();
                Ok(Formula::True)
            }
            Tok::Ident(s) if (s == "G" || s == "F") && *self.peek_at(1) == Tok::LBracket => {
                self.bump();
                let i = self.interval()?;
                let child = self.atom()?;
                Ok(if s == "G" {
                    Formula::always(i, child)
                } else {
                    Formula::eventually(i, child)
                })
            }
            Tok::LParen => {
                let save = self.pos;
                match self.comparison() {
                    Ok(f) => Ok(f),
                    Err(cmp_err) => {
                        self.pos = save;
                        self.bump();
                        let inner = self.formula();
                        match inner {
                            Ok(f) => {
                                self.expect(Tok::RParen)?;
                                Ok(f)
                            }
                            // Report whichever reading got further.
                            Err(e) => Err(if position(&e) >= position(&cmp_err) { e } else { cmp_err }),
                        }
                    }
                }
            }
            _ => self.comparison(),
        }
    }

    fn interval(&mut self) -> PResult<Interval> {
        let start = self.toks[self.pos].clone();
        self.expect(Tok::LBracket)?;
        let a = self.signed_number()?;
        self.expect(Tok::Comma)?;
        let b = self.signed_number()?;
        self.expect(Tok::RBracket)?;
        Interval::new(a, b).map_err(|_| ParseError {
            kind: ParseErrorKind::Interval { a, b },
            line: start.line,
            column: start.column,
        })
    }

    fn signed_number(&mut self) -> PResult<f64> {
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match self.bump() {
            Tok::Num(v) => Ok(if neg { -v } else { v }),
            other => {
                self.pos -= 1;
                Err(self.error_here(format!("expected a number, found {other}")))
            }
        }
    }

    fn comparison(&mut self) -> PResult<Formula> {
        let lhs = self.expr()?;
        let op = self.bump();
        let le = match op {
            Tok::Le | Tok::Lt => true,
            Tok::Ge | Tok::Gt => false,
            other => {
                self.pos -= 1;
                return Err(self.error_here(format!("expected a comparison operator, found {other}")));
            }
        };
        let rhs = self.expr()?;
        let zero = |e: &Expr| matches!(e, Expr::Const(c) if *c == 0.0);
        // Stored as h <= 0.
        let h = match (le, zero(&lhs), zero(&rhs)) {
            (true, _, true) => lhs,
            (true, true, false) => Expr::neg(rhs),
            (true, false, false) => Expr::binary(BinOp::Sub, lhs, rhs),
            (false, true, _) => rhs,
            (false, false, true) => Expr::neg(lhs),
            (false, false, false) => Expr::binary(BinOp::Sub, rhs, lhs),
        };
        Ok(Formula::pred(h))
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut e = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(e),
            };
            self.bump();
            e = Expr::binary(op, e, self.product()?);
        }
    }

    fn product(&mut self) -> PResult<Expr> {
        let mut e = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(e),
            };
            self.bump();
            e = Expr::binary(op, e, self.unary()?);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expr::neg(self.unary()?));
        }
        self.operand()
    }

    fn operand(&mut self) -> PResult<Expr> {
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(s) if s == "t" => Ok(Expr::Time),
            Tok::Ident(s) => {
                if let Some(func) = Func::from_name(&s) {
                    self.expect(Tok::LParen)?;
                    let e = self.expr()?;
                    self.expect(Tok::RParen)?;
                    return Ok(Expr::call(func, e));
                }
                let robot = s
                    .strip_prefix('x')
                    .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
                    .and_then(|d| d.parse::<usize>().ok())
                    .filter(|&i| i >= 1);
                let Some(i) = robot else {
                    self.pos -= 1;
                    return Err(self.error_here(format!("unknown identifier `{s}`")));
                };
                if *self.peek() == Tok::LBracket {
                    self.bump();
                    let k = match self.bump() {
                        Tok::Num(v) if v >= 0.0 && v.fract() == 0.0 => v as usize,
                        other => {
                            self.pos -= 1;
                            return Err(self.error_here(format!("expected a component index, found {other}")));
                        }
                    };
                    self.expect(Tok::RBracket)?;
                    return Ok(Expr::Component(RobotId(i), k));
                }
                Ok(Expr::State(RobotId(i)))
            }
            other => {
                self.pos -= 1;
                Err(self.error_here(format!("expected an expression, found {other}")))
            }
        }
    }
}

fn position(e: &ParseError) -> (usize, usize) {
    (e.line, e.column)
}

pub fn parse(text: &str) -> Result<Formula, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    let f = p.formula()?;
    if *p.peek() != Tok::Eof {
        return Err(p.error_here(format!("unexpected {} after formula", p.peek())));
    }
    Ok(f)
}
