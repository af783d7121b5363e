//! Mechanism expressions.
//!
//! A small arithmetic language used by declarative SCM descriptions:
//!
//! ```text
//! expr    := or
//! or      := and ( "||" and )*
//! and     := cmp ( "&&" cmp )*
//! cmp     := sum ( ("<" | "<=" | ">" | ">=" | "==" | "!=") sum )?
//! sum     := product ( ("+" | "-") product )*
//! product := unary ( ("*" | "/") unary )*
//! unary   := "-" unary | "!" unary | power
//! power   := atom ( "^" unary )?
//! atom    := number | name | name "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! Comparisons and logical operators yield `0` or `1`. Functions: `exp`,
//! `log`, `sqrt`, `abs`, `tanh`, `sigmoid`, `softplus`, `ind(x)` (1 when
//! `x > 0`), `if(c, a, b)` (`a` when `c != 0`), `min`, `max`.

use std::fmt;

use crate::error::{Error, Result};

/// Where a name in an expression points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    Endo(usize),
    Exo(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
    Exp,
    Log,
    Sqrt,
    Abs,
    Tanh,
    Sigmoid,
    Softplus,
    Ind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
    Min,
    Max,
}

/// A compiled expression with names resolved to variable slots.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Slot),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
}

/// Numerically stable `log(1 + exp(x))`.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn bool_f(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

impl Expr {
    /// Evaluates against the current endogenous values `v` and unit `u`.
    pub fn eval(&self, v: &[f64], u: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(Slot::Endo(i)) => v[*i],
            Expr::Var(Slot::Exo(j)) => u[*j],
            Expr::Unary(op, a) => {
                let x = a.eval(v, u);
                match op {
                    UnaryOp::Neg => -x,
                    UnaryOp::Not => bool_f(x == 0.0),
                    UnaryOp::Exp => x.exp(),
                    UnaryOp::Log => x.ln(),
                    UnaryOp::Sqrt => x.sqrt(),
                    UnaryOp::Abs => x.abs(),
                    UnaryOp::Tanh => x.tanh(),
                    UnaryOp::Sigmoid => 1.0 / (1.0 + (-x).exp()),
                    UnaryOp::Softplus => softplus(x),
                    UnaryOp::Ind => bool_f(x > 0.0),
                }
            }
            Expr::Binary(op, a, b) => {
                let x = a.eval(v, u);
                let y = b.eval(v, u);
                match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                    BinaryOp::Div => x / y,
                    BinaryOp::Pow => x.powf(y),
                    BinaryOp::Lt => bool_f(x < y),
                    BinaryOp::Le => bool_f(x <= y),
                    BinaryOp::Gt => bool_f(x > y),
                    BinaryOp::Ge => bool_f(x >= y),
                    BinaryOp::Eq => bool_f(x == y),
                    BinaryOp::Ne => bool_f(x != y),
                    BinaryOp::And => bool_f(x != 0.0 && y != 0.0),
                    BinaryOp::Or => bool_f(x != 0.0 || y != 0.0),
                    BinaryOp::Min => x.min(y),
                    BinaryOp::Max => x.max(y),
                }
            }
            Expr::If(c, a, b) => {
                if c.eval(v, u) != 0.0 {
                    a.eval(v, u)
                } else {
                    b.eval(v, u)
                }
            }
        }
    }

    /// All variable slots referenced, sorted and deduplicated.
    pub fn slots(&self) -> Vec<Slot> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect(&self, out: &mut Vec<Slot>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(s) => out.push(*s),
            Expr::Unary(_, a) => a.collect(out),
            Expr::Binary(_, a, b) => {
                a.collect(out);
                b.collect(out);
            }
            Expr::If(c, a, b) => {
                c.collect(out);
                a.collect(out);
                b.collect(out);
            }
        }
    }
}

/// Parses `src`, resolving every name through `resolve`.
pub fn parse<F>(src: &str, resolve: F) -> Result<Expr>
where
    F: Fn(&str) -> Option<Slot>,
{
    let tokens = lex(src)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        resolve: &resolve,
    };
    let e = p.or()?;
    if let Some((pos, tok)) = p.tokens.get(p.pos) {
        return Err(Error::Parse {
            pos: *pos,
            msg: format!("unexpected token {tok}"),
        });
    }
    Ok(e)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(x) => write!(f, "{x}"),
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Op(o) => write!(f, "`{o}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
        }
    }
}

const OPS: [&str; 17] = [
    "<=", ">=", "==", "!=", "&&", "||", "+", "-", "*", "/", "^", "<", ">", "!", "×", "÷", "−",
];

fn lex(src: &str) -> Result<Vec<(usize, Tok)>> {
    let mut out = Vec::new();
    let mut i = 0;
    let bytes = src.as_bytes();
    while i < src.len() {
        let c = src[i..].chars().next().unwrap();
        if c.is_whitespace() {
            i += c.len_utf8();
        } else if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            while i < src.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < src.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < src.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < src.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < src.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let x = text.parse::<f64>().map_err(|_| Error::Parse {
                pos: start,
                msg: format!("bad number `{text}`"),
            })?;
            out.push((start, Tok::Num(x)));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < src.len() {
                let d = src[i..].chars().next().unwrap();
                if d.is_alphanumeric() || d == '_' {
                    i += d.len_utf8();
                } else {
                    break;
                }
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if c == '(' {
            out.push((i, Tok::LParen));
            i += 1;
        } else if c == ')' {
            out.push((i, Tok::RParen));
            i += 1;
        } else if c == ',' {
            out.push((i, Tok::Comma));
            i += 1;
        } else if let Some(op) = OPS.iter().find(|op| src[i..].starts_with(**op)) {
            let canon = match *op {
                "×" => "*",
                "÷" => "/",
                "−" => "-",
                o => o,
            };
            out.push((i, Tok::Op(canon)));
            i += op.len();
        } else {
            return Err(Error::Parse {
                pos: i,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a, F> {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
    resolve: &'a F,
}

impl<F> Parser<'_, F>
where
    F: Fn(&str) -> Option<Slot>,
{
    fn peek_op(&self) -> Option<&'static str> {
        match self.tokens.get(self.pos) {
            Some((_, Tok::Op(o))) => Some(o),
            _ => None,
        }
    }

    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|t| t.0)
            .unwrap_or_else(|| self.tokens.last().map(|t| t.0 + 1).unwrap_or(0))
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            pos: self.here(),
            msg: msg.into(),
        })
    }

    fn binary_chain(
        &mut self,
        ops: &[(&'static str, BinaryOp)],
        next: fn(&mut Self) -> Result<Expr>,
    ) -> Result<Expr> {
        let mut lhs = next(self)?;
        while let Some(op) = self.peek_op() {
            let Some((_, bop)) = ops.iter().find(|(s, _)| *s == op) else {
                break;
            };
            self.pos += 1;
            let rhs = next(self)?;
            lhs = Expr::Binary(*bop, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Expr> {
        self.binary_chain(&[("||", BinaryOp::Or)], Self::and)
    }

    fn and(&mut self) -> Result<Expr> {
        self.binary_chain(&[("&&", BinaryOp::And)], Self::cmp)
    }

    fn cmp(&mut self) -> Result<Expr> {
        let lhs = self.sum()?;
        let op = match self.peek_op() {
            Some("<") => BinaryOp::Lt,
            Some("<=") => BinaryOp::Le,
            Some(">") => BinaryOp::Gt,
            Some(">=") => BinaryOp::Ge,
            Some("==") => BinaryOp::Eq,
            Some("!=") => BinaryOp::Ne,
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.sum()?;
        Ok(Expr::Binary(op, Box::new(lhs), Box::new(rhs)))
    }

    fn sum(&mut self) -> Result<Expr> {
        self.binary_chain(&[("+", BinaryOp::Add), ("-", BinaryOp::Sub)], Self::product)
    }

    fn product(&mut self) -> Result<Expr> {
        self.binary_chain(&[("*", BinaryOp::Mul), ("/", BinaryOp::Div)], Self::unary)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek_op() {
            Some("-") => {
                self.pos += 1;
                Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.unary()?)))
            }
            Some("!") => {
                self.pos += 1;
                Ok(Expr::Unary(UnaryOp::Not, Box::new(self.unary()?)))
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek_op() == Some("^") {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Binary(BinaryOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn expect(&mut self, tok: Tok) -> Result<()> {
        match self.tokens.get(self.pos) {
            Some((_, t)) if *t == tok => {
                self.pos += 1;
                Ok(())
            }
            _ => self.err(format!("expected {tok}")),
        }
    }

    fn args(&mut self) -> Result<Vec<Expr>> {
        self.expect(Tok::LParen)?;
        let mut args = vec![self.or()?];
        while matches!(self.tokens.get(self.pos), Some((_, Tok::Comma))) {
            self.pos += 1;
            args.push(self.or()?);
        }
        self.expect(Tok::RParen)?;
        Ok(args)
    }

    fn atom(&mut self) -> Result<Expr> {
        let Some((_, tok)) = self.tokens.get(self.pos).cloned() else {
            return self.err("unexpected end of expression");
        };
        match tok {
            Tok::Num(x) => {
                self.pos += 1;
                Ok(Expr::Const(x))
            }
            Tok::LParen => {
                self.pos += 1;
                let e = self.or()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let at = self.here();
                self.pos += 1;
                if matches!(self.tokens.get(self.pos), Some((_, Tok::LParen))) {
                    let mut args = self.args()?;
                    let arity = |n: usize| -> Result<()> {
                        if args.len() == n {
                            Ok(())
                        } else {
                            Err(Error::Parse {
                                pos: at,
                                msg: format!("`{name}` takes {n} argument(s), got {}", args.len()),
                            })
                        }
                    };
                    let unary = match name.as_str() {
                        "exp" => Some(UnaryOp::Exp),
                        "log" | "ln" => Some(UnaryOp::Log),
                        "sqrt" => Some(UnaryOp::Sqrt),
                        "abs" => Some(UnaryOp::Abs),
                        "tanh" => Some(UnaryOp::Tanh),
                        "sigmoid" => Some(UnaryOp::Sigmoid),
                        "softplus" => Some(UnaryOp::Softplus),
                        "ind" | "indicator" => Some(UnaryOp::Ind),
                        _ => None,
                    };
                    if let Some(op) = unary {
                        arity(1)?;
                        return Ok(Expr::Unary(op, Box::new(args.remove(0))));
                    }
                    match name.as_str() {
                        "min" | "max" => {
                            arity(2)?;
                            let b = args.pop().unwrap();
                            let a = args.pop().unwrap();
                            let op = if name == "min" { BinaryOp::Min } else { BinaryOp::Max };
                            Ok(Expr::Binary(op, Box::new(a), Box::new(b)))
                        }
                        "if" => {
                            arity(3)?;
                            let b = args.pop().unwrap();
                            let a = args.pop().unwrap();
                            let c = args.pop().unwrap();
                            Ok(Expr::If(Box::new(c), Box::new(a), Box::new(b)))
                        }
                        _ => Err(Error::Parse {
                            pos: at,
                            msg: format!("unknown function `{name}`"),
                        }),
                    }
                } else {
                    match (self.resolve)(&name) {
                        Some(slot) => Ok(Expr::Var(slot)),
                        None => Err(Error::UnknownVariable(name)),
                    }
                }
            }
            other => self.err(format!("unexpected token {other}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolver(name: &str) -> Option<Slot> {
        match name {
            "V1" => Some(Slot::Endo(0)),
            "V2" => Some(Slot::Endo(1)),
            "U1" => Some(Slot::Exo(0)),
            _ => None,
        }
    }

    fn eval(src: &str) -> f64 {
        parse(src, resolver).unwrap().eval(&[2.0, -1.0], &[0.5])
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 + 2 * 3"), 7.0);
        assert_eq!(eval("(1 + 2) * 3"), 9.0);
        assert_eq!(eval("8 - 2 - 1"), 5.0);
        assert_eq!(eval("2 ^ 3 ^ 2"), 512.0);
        assert_eq!(eval("-2 ^ 2"), -4.0);
        assert_eq!(eval("V1 * U1 + V2"), 0.0);
        assert_eq!(eval("1.5e1 / 3"), 5.0);
    }

    #[test]
    fn functions_and_logic() {
        assert_eq!(eval("if(V1 > 1, 10, 20)"), 10.0);
        assert_eq!(eval("ind(V2)"), 0.0);
        assert_eq!(eval("indicator(V1)"), 1.0);
        assert_eq!(eval("V1 == 2 && V2 != 0"), 1.0);
        assert_eq!(eval("!(V1 < 0) || 0"), 1.0);
        assert_eq!(eval("max(V1, 3) + min(V2, 0)"), 2.0);
        assert!((eval("softplus(0)") - 2f64.ln()).abs() < 1e-15);
        assert!((eval("log(exp(U1))") - 0.5).abs() < 1e-15);
        assert_eq!(eval("2 × 3 − 1 ÷ 1"), 5.0);
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((softplus(1.0) - (1.0f64.exp()).ln_1p()).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse("V9 + 1", resolver), Err(Error::UnknownVariable(n)) if n == "V9"));
        assert!(matches!(parse("1 +", resolver), Err(Error::Parse { .. })));
        assert!(matches!(parse("foo(1)", resolver), Err(Error::Parse { .. })));
        assert!(matches!(parse("exp(1, 2)", resolver), Err(Error::Parse { .. })));
        assert!(matches!(parse("1 $ 2", resolver), Err(Error::Parse { pos: 2, .. })));
        assert!(matches!(parse("(1 + 2", resolver), Err(Error::Parse { .. })));
    }

    #[test]
    fn slots_are_collected() {
        let e = parse("V2 + if(U1 > 0, V2, V1)", resolver).unwrap();
        assert_eq!(e.slots(), vec![Slot::Endo(0), Slot::Endo(1), Slot::Exo(0)]);
    }
}
