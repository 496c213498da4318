//! Small arithmetic expressions over `p`, `q` and constants.
//!
//! Grammar (right-associative `^`, unary minus binds looser than `^`):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := ('+' | '-') unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'p' | 'q' | 'pi' | func '(' expr ')' | '(' expr ')'
//! func   := 'exp' | 'log' | 'ln' | 'sqrt'
//! ```

use std::fmt;

use thiserror::Error;

use crate::jet::Dual2;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    P,
    Q,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
    Sqrt(Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("unexpected character '{ch}' at offset {at}")]
    UnexpectedChar { ch: char, at: usize },
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("unexpected token '{found}' at offset {at}")]
    UnexpectedToken { found: String, at: usize },
    #[error("unknown identifier '{0}'")]
    UnknownIdent(String),
    #[error("invalid number '{0}'")]
    BadNumber(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == '.') {
                i += 1;
            }
            // exponent part: 1e-3, 2.5E+4
            if i < bytes.len() && (bytes[i] == 'e' || bytes[i] == 'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == '+' || bytes[j] == '-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = bytes[start..i].iter().collect();
            let v = s.parse::<f64>().map_err(|_| ParseError::BadNumber(s.clone()))?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(bytes[start..i].iter().collect()), start));
        } else if "+-*/^()".contains(c) {
            out.push((Tok::Op(c), i));
            i += 1;
        } else {
            return Err(ParseError::UnexpectedChar { ch: c, at: i });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek_op(&self) -> Option<char> {
        match self.peek() {
            Some(Tok::Op(c)) => Some(*c),
            _ => None,
        }
    }

    fn unexpected(&self) -> ParseError {
        match self.toks.get(self.pos) {
            None => ParseError::UnexpectedEnd,
            Some((t, at)) => ParseError::UnexpectedToken {
                found: match t {
                    Tok::Num(v) => v.to_string(),
                    Tok::Ident(s) => s.clone(),
                    Tok::Op(c) => c.to_string(),
                },
                at: *at,
            },
        }
    }

    fn expect_op(&mut self, c: char) -> Result<(), ParseError> {
        if self.peek_op() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if c == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let Some((tok, _)) = self.toks.get(self.pos).cloned() else {
            return Err(ParseError::UnexpectedEnd);
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Tok::Op('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_op(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                match name.as_str() {
                    "p" => Ok(Expr::P),
                    "q" => Ok(Expr::Q),
                    "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                    "exp" | "log" | "ln" | "sqrt" => {
                        self.expect_op('(')?;
                        let arg = Box::new(self.expr()?);
                        self.expect_op(')')?;
                        Ok(match name.as_str() {
                            "exp" => Expr::Exp(arg),
                            "sqrt" => Expr::Sqrt(arg),
                            _ => Expr::Log(arg),
                        })
                    }
                    _ => Err(ParseError::UnknownIdent(name)),
                }
            }
            Tok::Op(_) => Err(self.unexpected()),
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let toks = tokenize(src)?;
        let mut parser = Parser { toks, pos: 0 };
        let e = parser.expr()?;
        if parser.pos != parser.toks.len() {
            return Err(parser.unexpected());
        }
        Ok(e)
    }

    /// Evaluates the expression as a second-order jet at `(p, q)`.
    pub fn eval_jet(&self, p: f64, q: f64) -> Dual2 {
        self.eval_with(Dual2::var_p(p), Dual2::var_q(q))
    }

    fn eval_with(&self, p: Dual2, q: Dual2) -> Dual2 {
        match self {
            Expr::Const(c) => Dual2::constant(*c),
            Expr::P => p,
            Expr::Q => q,
            Expr::Neg(a) => -a.eval_with(p, q),
            Expr::Add(a, b) => a.eval_with(p, q) + b.eval_with(p, q),
            Expr::Sub(a, b) => a.eval_with(p, q) - b.eval_with(p, q),
            Expr::Mul(a, b) => a.eval_with(p, q) * b.eval_with(p, q),
            Expr::Div(a, b) => a.eval_with(p, q) / b.eval_with(p, q),
            Expr::Pow(a, b) => a.eval_with(p, q).pow(b.eval_with(p, q)),
            Expr::Exp(a) => a.eval_with(p, q).exp(),
            Expr::Log(a) => a.eval_with(p, q).ln(),
            Expr::Sqrt(a) => a.eval_with(p, q).sqrt(),
        }
    }

    /// Plain value at `(p, q)`.
    pub fn eval(&self, p: f64, q: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::P => p,
            Expr::Q => q,
            Expr::Neg(a) => -a.eval(p, q),
            Expr::Add(a, b) => a.eval(p, q) + b.eval(p, q),
            Expr::Sub(a, b) => a.eval(p, q) - b.eval(p, q),
            Expr::Mul(a, b) => a.eval(p, q) * b.eval(p, q),
            Expr::Div(a, b) => a.eval(p, q) / b.eval(p, q),
            Expr::Pow(a, b) => {
                let e = b.eval(p, q);
                let base = a.eval(p, q);
                if e.fract() == 0.0 && e.abs() < i32::MAX as f64 {
                    base.powi(e as i32)
                } else {
                    base.powf(e)
                }
            }
            Expr::Exp(a) => a.eval(p, q).exp(),
            Expr::Log(a) => a.eval(p, q).ln(),
            Expr::Sqrt(a) => a.eval(p, q).sqrt(),
        }
    }

    pub fn depends_on_q(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::P => false,
            Expr::Q => true,
            Expr::Neg(a) | Expr::Exp(a) | Expr::Log(a) | Expr::Sqrt(a) => a.depends_on_q(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.depends_on_q() || b.depends_on_q()
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::P => write!(f, "p"),
            Expr::Q => write!(f, "q"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Log(a) => write!(f, "log({a})"),
            Expr::Sqrt(a) => write!(f, "sqrt({a})"),
        }
    }
}
