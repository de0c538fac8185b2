//! A small arithmetic expression language for user-defined vector fields.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | primary
//! primary := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Functions: `sin cos exp sqrt abs`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Result, SmioError};
use crate::field::VectorField;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Index into the declared variable list, with its name.
    Var(usize, String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, vars: &[f64]) -> Result<f64> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var(i, name) => *vars
                .get(*i)
                .ok_or_else(|| SmioError::Eval(format!("unbound variable {name}")))?,
            Expr::Neg(e) => -e.eval(vars)?,
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(vars)?, b.eval(vars)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(SmioError::Eval("division by zero".into()));
                        }
                        a / b
                    }
                }
            }
            Expr::Call(f, e) => {
                let v = e.eval(vars)?;
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Abs => v.abs(),
                    Func::Sqrt => {
                        if v < 0.0 {
                            return Err(SmioError::Eval("square root of a negative number".into()));
                        }
                        v.sqrt()
                    }
                }
            }
        })
    }

    /// Evaluate with named bindings.
    pub fn eval_named(&self, declared: &[&str], bindings: &[(&str, f64)]) -> Result<f64> {
        let mut vals = vec![f64::NAN; declared.len()];
        for (name, v) in bindings {
            if let Some(i) = declared.iter().position(|d| d == name) {
                vals[i] = *v;
            }
        }
        self.eval(&vals)
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesized form; re-parses to the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(_, name) => write!(f, "{name}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src,
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek_char()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    /// Next token with its starting (line, column).
    fn next(&mut self) -> Result<(Tok, usize, usize)> {
        while self.peek_char().is_some_and(char::is_whitespace) {
            self.bump();
        }
        let (line, col) = (self.line, self.col);
        let Some(c) = self.peek_char() else {
            return Ok((Tok::End, line, col));
        };
        if c.is_ascii_digit() || c == '.' {
            let start = self.pos;
            while self.peek_char().is_some_and(|c| c.is_ascii_digit() || c == '.') {
                self.bump();
            }
            if self.peek_char().is_some_and(|c| c == 'e' || c == 'E') {
                let save = (self.pos, self.line, self.col);
                self.bump();
                if self.peek_char().is_some_and(|c| c == '+' || c == '-') {
                    self.bump();
                }
                if self.peek_char().is_some_and(|c| c.is_ascii_digit()) {
                    while self.peek_char().is_some_and(|c| c.is_ascii_digit()) {
                        self.bump();
                    }
                } else {
                    (self.pos, self.line, self.col) = save;
                }
            }
            let text = &self.src[start..self.pos];
            let v: f64 = text.parse().map_err(|_| SmioError::Parse {
                line,
                column: col,
                message: format!("malformed number '{text}'"),
            })?;
            if !v.is_finite() {
                return Err(SmioError::Parse {
                    line,
                    column: col,
                    message: format!("number '{text}' is out of range"),
                });
            }
            return Ok((Tok::Num(v), line, col));
        }
        if c.is_alphabetic() || c == '_' {
            let start = self.pos;
            while self.peek_char().is_some_and(|c| c.is_alphanumeric() || c == '_') {
                self.bump();
            }
            return Ok((Tok::Ident(self.src[start..self.pos].to_string()), line, col));
        }
        if "+-*/()".contains(c) {
            self.bump();
            return Ok((Tok::Sym(c), line, col));
        }
        Err(SmioError::Parse {
            line,
            column: col,
            message: format!("unexpected character '{c}'"),
        })
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    tok: Tok,
    line: usize,
    col: usize,
    vars: &'a [&'a str],
    depth: usize,
}

const MAX_DEPTH: usize = 256;

impl<'a> Parser<'a> {
    fn advance(&mut self) -> Result<()> {
        let (t, l, c) = self.lex.next()?;
        self.tok = t;
        self.line = l;
        self.col = c;
        Ok(())
    }

    fn err(&self, msg: impl Into<String>) -> SmioError {
        SmioError::Parse {
            line: self.line,
            column: self.col,
            message: msg.into(),
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.tok == Tok::Sym(c) {
            self.advance()
        } else {
            Err(self.err(format!("expected '{c}'")))
        }
    }

    fn enter(&mut self) -> Result<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.err("expression nested too deeply"));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => break,
            };
            self.advance()?;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.tok {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => break,
            };
            self.advance()?;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.tok == Tok::Sym('-') {
            self.enter()?;
            self.advance()?;
            let e = self.unary()?;
            self.depth -= 1;
            return Ok(Expr::Neg(Box::new(e)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.advance()?;
                Ok(Expr::Num(v))
            }
            Tok::Ident(name) => {
                let (line, col) = (self.line, self.col);
                self.advance()?;
                if self.tok == Tok::Sym('(') {
                    let func = Func::from_name(&name).ok_or(SmioError::Parse {
                        line,
                        column: col,
                        message: format!("unknown function '{name}'"),
                    })?;
                    self.advance()?;
                    let arg = self.expr()?;
                    if self.tok != Tok::Sym(')') {
                        return Err(self.err(format!("'{name}' takes exactly one argument")));
                    }
                    self.advance()?;
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                match self.vars.iter().position(|v| *v == name) {
                    Some(i) => Ok(Expr::Var(i, name)),
                    None => Err(SmioError::Parse {
                        line,
                        column: col,
                        message: format!("unknown identifier '{name}'"),
                    }),
                }
            }
            Tok::Sym('(') => {
                self.advance()?;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::End => Err(self.err("unexpected end of input")),
            Tok::Sym(c) => Err(self.err(format!("unexpected '{c}'"))),
        }
    }
}

/// Parse `source` against the declared variable names.
pub fn parse(source: &str, declared: &[&str]) -> Result<Expr> {
    let mut p = Parser {
        lex: Lexer::new(source),
        tok: Tok::End,
        line: 1,
        col: 1,
        vars: declared,
        depth: 0,
    };
    p.advance()?;
    let e = p.expr()?;
    if p.tok != Tok::End {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

/// A vector field whose components are expressions over a shared variable
/// list. Evaluation failures yield NaN, which downstream consumers reject.
#[derive(Debug, Clone)]
pub struct ExprField {
    exprs: Vec<Expr>,
    dim_in: usize,
}

impl ExprField {
    pub fn new(exprs: Vec<Expr>, dim_in: usize) -> Self {
        Self { exprs, dim_in }
    }

    pub fn parse_all(sources: &[String], declared: &[&str]) -> Result<Self> {
        let exprs = sources
            .iter()
            .map(|s| parse(s, declared))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(exprs, declared.len()))
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    pub fn into_field(self) -> crate::field::FieldRef {
        Arc::new(self)
    }
}

impl VectorField for ExprField {
    fn dim_in(&self) -> usize {
        self.dim_in
    }

    fn dim_out(&self) -> usize {
        self.exprs.len()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.exprs) {
            *o = e.eval(x).unwrap_or(f64::NAN);
        }
    }
}
