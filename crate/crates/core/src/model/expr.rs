//! A small arithmetic grammar for scalar coefficient maps.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?
//! primary := number | 'x' | 'y' | 'z' | 'pi' | func '(' expr (',' expr)* ')' | '(' expr ')'
//! func    := pow | sin | cos | arctan | atan | exp | abs
//! ```
//!
//! The Unicode operators `−`, `×`, `·` and `÷` are accepted as aliases.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("expression error at byte {pos}: {msg}")]
pub struct ExprError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Pow,
    Sin,
    Cos,
    Arctan,
    Exp,
    Abs,
}

impl Func {
    fn arity(self) -> usize {
        match self {
            Func::Pow => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0, len: src.len() };
        let e = p.expr()?;
        if let Some((pos, t)) = p.tokens.get(p.pos) {
            return Err(ExprError { pos: *pos, msg: format!("unexpected token {t:?}") });
        }
        Ok(e)
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64, z: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::Y) => y,
            Expr::Var(Var::Z) => z,
            Expr::Neg(a) => -a.eval(x, y, z),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x, y, z), b.eval(x, y, z));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => pow(a, b),
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(x, y, z);
                match f {
                    Func::Pow => pow(a, args[1].eval(x, y, z)),
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Arctan => a.atan(),
                    Func::Exp => a.exp(),
                    Func::Abs => a.abs(),
                }
            }
        }
    }

    pub fn references(&self, v: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(w) => *w == v,
            Expr::Neg(a) => a.references(v),
            Expr::Bin(_, a, b) => a.references(v) || b.references(v),
            Expr::Call(_, args) => args.iter().any(|a| a.references(v)),
        }
    }

    /// Polynomial degree in the mark `z`, or `None` if `z` enters
    /// non-polynomially.
    pub fn z_degree(&self) -> Option<u32> {
        match self {
            Expr::Num(_) => Some(0),
            Expr::Var(v) => Some(u32::from(*v == Var::Z)),
            Expr::Neg(a) => a.z_degree(),
            Expr::Bin(BinOp::Add | BinOp::Sub, a, b) => Some(a.z_degree()?.max(b.z_degree()?)),
            Expr::Bin(BinOp::Mul, a, b) => Some(a.z_degree()? + b.z_degree()?),
            Expr::Bin(BinOp::Div, a, b) => match b.z_degree()? {
                0 => a.z_degree(),
                _ => None,
            },
            Expr::Bin(BinOp::Pow, a, b) => power_degree(a, b),
            Expr::Call(Func::Pow, args) => power_degree(&args[0], &args[1]),
            Expr::Call(_, args) => {
                if args.iter().any(|a| a.references(Var::Z)) {
                    None
                } else {
                    Some(0)
                }
            }
        }
    }

    /// True when the expression is affine in the mark `z`.
    pub fn is_mark_affine(&self) -> bool {
        matches!(self.z_degree(), Some(0 | 1))
    }
}

fn power_degree(base: &Expr, exp: &Expr) -> Option<u32> {
    if exp.references(Var::Z) {
        return None;
    }
    let d = base.z_degree()?;
    if d == 0 {
        return Some(0);
    }
    let k = constant_value(exp)?;
    if k >= 0.0 && k.fract() == 0.0 && k <= 64.0 {
        Some(d * k as u32)
    } else {
        None
    }
}

fn constant_value(e: &Expr) -> Option<f64> {
    if e.references(Var::X) || e.references(Var::Y) || e.references(Var::Z) {
        None
    } else {
        Some(e.eval(0.0, 0.0, 0.0))
    }
}

#[inline]
fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= 64.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(Var::X) => write!(f, "x"),
            Expr::Var(Var::Y) => write!(f, "y"),
            Expr::Var(Var::Z) => write!(f, "z"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a}{s}{b})")
            }
            Expr::Call(func, args) => {
                let name = match func {
                    Func::Pow => "pow",
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                    Func::Arctan => "arctan",
                    Func::Exp => "exp",
                    Func::Abs => "abs",
                };
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let mut out = Vec::new();
    let mut it = src.char_indices().peekable();
    while let Some(&(pos, c)) = it.peek() {
        match c {
            c if c.is_whitespace() => {
                it.next();
            }
            '0'..='9' | '.' => {
                let start = pos;
                let mut end = pos;
                let mut prev = ' ';
                while let Some(&(p, d)) = it.peek() {
                    let exp_sign = (d == '+' || d == '-') && (prev == 'e' || prev == 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        end = p + d.len_utf8();
                        prev = d;
                        it.next();
                    } else {
                        break;
                    }
                }
                let text = &src[start..end];
                let v: f64 = text
                    .parse()
                    .map_err(|_| ExprError { pos: start, msg: format!("bad number '{text}'") })?;
                out.push((start, Tok::Num(v)));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = pos;
                let mut end = pos;
                while let Some(&(p, d)) = it.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        end = p + 1;
                        it.next();
                    } else {
                        break;
                    }
                }
                out.push((start, Tok::Ident(src[start..end].to_ascii_lowercase())));
            }
            '+' | '-' | '*' | '/' | '^' => {
                out.push((pos, Tok::Op(c)));
                it.next();
            }
            '\u{2212}' => {
                out.push((pos, Tok::Op('-')));
                it.next();
            }
            '\u{00d7}' | '\u{00b7}' => {
                out.push((pos, Tok::Op('*')));
                it.next();
            }
            '\u{00f7}' => {
                out.push((pos, Tok::Op('/')));
                it.next();
            }
            '(' => {
                out.push((pos, Tok::LParen));
                it.next();
            }
            ')' => {
                out.push((pos, Tok::RParen));
                it.next();
            }
            ',' => {
                out.push((pos, Tok::Comma));
                it.next();
            }
            other => {
                return Err(ExprError { pos, msg: format!("unexpected character '{other}'") });
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.1)
    }

    fn here(&self) -> usize {
        self.tokens.get(self.pos).map(|t| t.0).unwrap_or(self.len)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError { pos: self.here(), msg: msg.into() })
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                let func = match name.as_str() {
                    "x" => return Ok(Expr::Var(Var::X)),
                    "y" => return Ok(Expr::Var(Var::Y)),
                    "z" => return Ok(Expr::Var(Var::Z)),
                    "pi" => return Ok(Expr::Num(std::f64::consts::PI)),
                    "pow" => Func::Pow,
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "arctan" | "atan" => Func::Arctan,
                    "exp" => Func::Exp,
                    "abs" => Func::Abs,
                    other => {
                        self.pos -= 1;
                        return self.err(format!("unknown identifier '{other}'"));
                    }
                };
                self.expect(Tok::LParen)?;
                let mut args = vec![self.expr()?];
                while self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                    args.push(self.expr()?);
                }
                self.expect(Tok::RParen)?;
                if args.len() != func.arity() {
                    return self.err(format!(
                        "{name} takes {} argument(s), got {}",
                        func.arity(),
                        args.len()
                    ));
                }
                Ok(Expr::Call(func, args))
            }
            Some(t) => self.err(format!("unexpected token {t:?}")),
            None => self.err("unexpected end of expression"),
        }
    }

    fn expect(&mut self, t: Tok) -> Result<(), ExprError> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {t:?}"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: f64, y: f64, z: f64) -> f64 {
        Expr::parse(s).unwrap().eval(x, y, z)
    }

    #[test]
    fn precedence_and_unary_minus() {
        assert_eq!(ev("1 + 2 * 3", 0.0, 0.0, 0.0), 7.0);
        assert_eq!(ev("-x^2", 3.0, 0.0, 0.0), -9.0);
        assert_eq!(ev("2^3^2", 0.0, 0.0, 0.0), 512.0);
        assert_eq!(ev("(1 - 2) - 3", 0.0, 0.0, 0.0), -4.0);
        assert_eq!(ev("8 / 2 / 2", 0.0, 0.0, 0.0), 2.0);
    }

    #[test]
    fn unicode_operators() {
        let v = ev("\u{2212}pow(x,3)+x+pow(y,3)", 1.0, 1.0, 0.0);
        assert_eq!(v, 1.0);
        assert_eq!(ev("6 \u{00f7} 3 \u{00d7} 2", 0.0, 0.0, 0.0), 4.0);
    }

    #[test]
    fn functions() {
        assert!((ev("sin(x) + cos(y)", 0.5, 0.25, 0.0) - (0.5f64.sin() + 0.25f64.cos())).abs() < 1e-15);
        assert_eq!(ev("arctan(x)", 1.0, 0.0, 0.0), 1f64.atan());
        assert_eq!(ev("abs(x) * exp(0)", -2.0, 0.0, 0.0), 2.0);
        assert_eq!(ev("1.5e-1 * 2", 0.0, 0.0, 0.0), 0.3);
    }

    #[test]
    fn errors_carry_positions() {
        let e = Expr::parse("x + * y").unwrap_err();
        assert_eq!(e.pos, 4);
        assert!(Expr::parse("foo(x)").is_err());
        assert!(Expr::parse("pow(x)").is_err());
        assert!(Expr::parse("(x").is_err());
        assert!(Expr::parse("x $ y").is_err());
        assert!(Expr::parse("").is_err());
    }

    #[test]
    fn mark_affinity() {
        assert!(Expr::parse("z").unwrap().is_mark_affine());
        assert!(Expr::parse("sin(x) * z + y").unwrap().is_mark_affine());
        assert!(Expr::parse("z / (1 + x^2)").unwrap().is_mark_affine());
        assert!(!Expr::parse("z^2").unwrap().is_mark_affine());
        assert!(!Expr::parse("sin(z)").unwrap().is_mark_affine());
        assert!(!Expr::parse("x / z").unwrap().is_mark_affine());
        assert!(!Expr::parse("z * z").unwrap().is_mark_affine());
    }

    #[test]
    fn display_reparses_to_same_values() {
        let e = Expr::parse("-pow(x,3) + x*y - 2/(1+abs(z))").unwrap();
        let again = Expr::parse(&e.to_string()).unwrap();
        for &(x, y, z) in &[(0.3, -1.2, 0.5), (2.0, 0.1, -0.7)] {
            assert_eq!(e.eval(x, y, z), again.eval(x, y, z));
        }
    }
}
