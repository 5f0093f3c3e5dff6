//! Expression language for user-defined plane maps, inverse components,
//! gasket profile functions and ODE right-hand sides.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := "-" factor | power
//! power  := atom ("^" factor)?
//! atom   := number | ident | ident "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x^2`
//! is `-(x^2)` and `a^b^c` is `a^(b^c)`.

use std::fmt;

use thiserror::Error;

/// Syntax or name-resolution failure, located by byte offset into the source.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("variable `{name}` is not bound (offset {offset})")]
    Unbound { name: &'static str, offset: usize },
    #[error("{function} is undefined at {value} (offset {offset})")]
    Domain {
        function: &'static str,
        value: String,
        offset: usize,
    },
    #[error("division by zero (offset {offset})")]
    DivisionByZero { offset: usize },
    #[error("non-finite result (offset {offset})")]
    NonFinite { offset: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    Y,
    T,
    Pi,
}

impl Var {
    fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::T => "t",
            Var::Pi => "pi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Asin,
    Acos,
    Atan,
    Sqrt,
    Cbrt,
    Abs,
    Exp,
    Log,
    Mod,
}

impl Func {
    const ALL: [Func; 12] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Asin,
        Func::Acos,
        Func::Atan,
        Func::Sqrt,
        Func::Cbrt,
        Func::Abs,
        Func::Exp,
        Func::Log,
        Func::Mod,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Asin => "asin",
            Func::Acos => "acos",
            Func::Atan => "atan",
            Func::Sqrt => "sqrt",
            Func::Cbrt => "cbrt",
            Func::Abs => "abs",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Mod => "mod",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Mod => 2,
            _ => 1,
        }
    }

    fn lookup(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Applies a unary function; `Mod` is handled by the caller.
    fn apply_unary(self, v: f64, offset: usize) -> Result<f64, EvalError> {
        let domain = |function| EvalError::Domain {
            function,
            value: v.to_string(),
            offset,
        };
        Ok(match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Asin if v.abs() > 1.0 => return Err(domain("asin")),
            Func::Asin => v.asin(),
            Func::Acos if v.abs() > 1.0 => return Err(domain("acos")),
            Func::Acos => v.acos(),
            Func::Atan => v.atan(),
            Func::Sqrt if v < 0.0 => return Err(domain("sqrt")),
            Func::Sqrt => v.sqrt(),
            Func::Cbrt => v.cbrt(),
            Func::Abs => v.abs(),
            Func::Exp => v.exp(),
            Func::Log if v <= 0.0 => return Err(domain("log")),
            Func::Log => v.ln(),
            Func::Mod => unreachable!("mod is binary"),
        })
    }
}

#[derive(Debug, Clone)]
pub enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Parsed expression. `offset` is the byte position of the node in its
/// source text and does not take part in equality.
#[derive(Debug, Clone)]
pub struct Expr {
    pub node: Node,
    pub offset: usize,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        match (&self.node, &other.node) {
            (Node::Num(a), Node::Num(b)) => a.to_bits() == b.to_bits(),
            (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Neg(a), Node::Neg(b)) => a == b,
            (Node::Binary(op, l, r), Node::Binary(op2, l2, r2)) => op == op2 && l == l2 && r == r2,
            (Node::Call(f, args), Node::Call(g, args2)) => f == g && args == args2,
            _ => false,
        }
    }
}

/// Variable bindings for evaluation; `pi` is always bound.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Env {
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub t: Option<f64>,
}

impl Env {
    pub fn x(x: f64) -> Self {
        Env {
            x: Some(x),
            ..Env::default()
        }
    }

    pub fn xy(x: f64, y: f64) -> Self {
        Env {
            x: Some(x),
            y: Some(y),
            t: None,
        }
    }

    pub fn txy(t: f64, x: f64, y: f64) -> Self {
        Env {
            x: Some(x),
            y: Some(y),
            t: Some(t),
        }
    }
}

impl Expr {
    fn new(node: Node, offset: usize) -> Self {
        Expr { node, offset }
    }

    pub fn eval(&self, env: &Env) -> Result<f64, EvalError> {
        let offset = self.offset;
        let value = match &self.node {
            Node::Num(v) => *v,
            Node::Var(var) => {
                let bound = match var {
                    Var::X => env.x,
                    Var::Y => env.y,
                    Var::T => env.t,
                    Var::Pi => Some(std::f64::consts::PI),
                };
                bound.ok_or(EvalError::Unbound {
                    name: var.name(),
                    offset,
                })?
            }
            Node::Neg(inner) => -inner.eval(env)?,
            Node::Binary(op, lhs, rhs) => {
                let a = lhs.eval(env)?;
                let b = rhs.eval(env)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div if b == 0.0 => return Err(EvalError::DivisionByZero { offset }),
                    BinOp::Div => a / b,
                    BinOp::Pow => power(a, b, offset)?,
                }
            }
            Node::Call(Func::Mod, args) => {
                let a = args[0].eval(env)?;
                let b = args[1].eval(env)?;
                if b == 0.0 {
                    return Err(EvalError::DivisionByZero { offset });
                }
                a - b * (a / b).floor()
            }
            Node::Call(f, args) => f.apply_unary(args[0].eval(env)?, offset)?,
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(EvalError::NonFinite { offset })
        }
    }

    /// Visits every variable referenced by the tree.
    pub fn variables(&self) -> Vec<(Var, usize)> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<(Var, usize)>) {
        match &self.node {
            Node::Num(_) => {}
            Node::Var(v) => out.push((*v, self.offset)),
            Node::Neg(e) => e.collect_vars(out),
            Node::Binary(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Node::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    /// Rejects variables outside `allowed` (`pi` is always allowed).
    pub fn check_variables(&self, allowed: &[Var]) -> Result<(), ParseError> {
        match self
            .variables()
            .into_iter()
            .find(|(v, _)| *v != Var::Pi && !allowed.contains(v))
        {
            Some((v, offset)) => Err(ParseError {
                offset,
                message: format!("variable `{}` is not allowed here", v.name()),
            }),
            None => Ok(()),
        }
    }
}

fn power(base: f64, exponent: f64, offset: usize) -> Result<f64, EvalError> {
    if base < 0.0 && exponent.fract() != 0.0 {
        return Err(EvalError::Domain {
            function: "^",
            value: format!("{base}^{exponent}"),
            offset,
        });
    }
    if base == 0.0 && exponent < 0.0 {
        return Err(EvalError::DivisionByZero { offset });
    }
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        Ok(base.powi(exponent as i32))
    } else {
        Ok(base.powf(exponent))
    }
}

/// Canonical form: binary operations fully parenthesised, negation as `(-e)`.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Node::Num(v) => write!(f, "{v:?}"),
            Node::Var(v) => f.write_str(v.name()),
            Node::Neg(e) => write!(f, "(-{e})"),
            Node::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Node::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Pipe,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Pipe => "`|`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let single = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            b'|' => Some(Tok::Pipe),
            _ => None,
        };
        if let Some(tok) = single {
            toks.push((tok, start));
            i += 1;
        } else if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                if !(i < bytes.len() && bytes[i].is_ascii_digit()) {
                    return Err(ParseError {
                        offset: i,
                        message: "expected digit after decimal point".into(),
                    });
                }
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut k = i + 1;
                if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                    k += 1;
                }
                if k < bytes.len() && bytes[k].is_ascii_digit() {
                    i = k;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    return Err(ParseError {
                        offset: k,
                        message: "expected digit in exponent".into(),
                    });
                }
            }
            let value: f64 = src[start..i].parse().map_err(|_| ParseError {
                offset: start,
                message: format!("malformed number `{}`", &src[start..i]),
            })?;
            toks.push((Tok::Num(value), start));
        } else if c.is_ascii_lowercase() {
            while i < bytes.len()
                && (bytes[i].is_ascii_lowercase() || bytes[i].is_ascii_digit() || bytes[i] == b'_')
            {
                i += 1;
            }
            toks.push((Tok::Ident(src[start..i].to_string()), start));
        } else {
            let ch = src[start..].chars().next().unwrap_or('?');
            return Err(ParseError {
                offset: start,
                message: format!("unexpected character `{ch}`"),
            });
        }
    }
    toks.push((Tok::End, src.len()));
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        ParseError {
            offset: self.offset(),
            message: format!("expected {expected}, found {}", self.peek().describe()),
        }
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let (_, at) = self.bump();
            let rhs = self.term()?;
            lhs = Expr::new(Node::Binary(op, Box::new(lhs), Box::new(rhs)), at);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            let (_, at) = self.bump();
            let rhs = self.factor()?;
            lhs = Expr::new(Node::Binary(op, Box::new(lhs), Box::new(rhs)), at);
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            let (_, at) = self.bump();
            let inner = self.factor()?;
            return Ok(Expr::new(Node::Neg(Box::new(inner)), at));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            let (_, at) = self.bump();
            let exponent = self.factor()?;
            return Ok(Expr::new(
                Node::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)),
                at,
            ));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::new(Node::Num(v), at))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    let func = Func::lookup(&name).ok_or_else(|| ParseError {
                        offset: at,
                        message: format!("unknown function `{name}`"),
                    })?;
                    self.bump();
                    let mut args = vec![self.expr()?];
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen, "`,` or `)`")?;
                    if args.len() != func.arity() {
                        return Err(ParseError {
                            offset: at,
                            message: format!(
                                "`{name}` takes {} argument(s), got {}",
                                func.arity(),
                                args.len()
                            ),
                        });
                    }
                    return Ok(Expr::new(Node::Call(func, args), at));
                }
                let var = match name.as_str() {
                    "x" => Var::X,
                    "y" => Var::Y,
                    "t" => Var::T,
                    "pi" => Var::Pi,
                    _ if Func::lookup(&name).is_some() => {
                        return Err(ParseError {
                            offset: at,
                            message: format!("function `{name}` needs an argument list"),
                        })
                    }
                    _ => {
                        return Err(ParseError {
                            offset: at,
                            message: format!("unknown identifier `{name}`"),
                        })
                    }
                };
                Ok(Expr::new(Node::Var(var), at))
            }
            _ => Err(self.unexpected("a number, identifier or `(`")),
        }
    }
}

/// Parses a sequence of comma-separated expressions, optionally split into two
/// groups by `|`. Returns the groups in order.
fn parse_groups(text: &str) -> Result<Vec<Vec<Expr>>, ParseError> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };
    let mut groups = vec![vec![p.expr()?]];
    loop {
        match p.peek() {
            Tok::Comma => {
                p.bump();
                groups.last_mut().unwrap().push(p.expr()?);
            }
            Tok::Pipe if groups.len() == 1 => {
                p.bump();
                groups.push(vec![p.expr()?]);
            }
            Tok::End => return Ok(groups),
            _ => return Err(p.unexpected("an operator, `,` or end of input")),
        }
    }
}

pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected("an operator or end of input"));
    }
    Ok(e)
}

pub fn eval_expr(expr: &Expr, env: &Env) -> Result<f64, EvalError> {
    expr.eval(env)
}

/// A plane map given by component expressions in `x`, `y`. The inverse
/// components use `x`, `y` for the image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MapDef {
    pub name: String,
    pub forward: [Expr; 2],
    pub inverse: Option<[Expr; 2]>,
}

/// Parses `"f1, f2"` or `"f1, f2 | g1, g2"`.
pub fn parse_map(text: &str) -> Result<MapDef, ParseError> {
    let groups = parse_groups(text)?;
    let pair = |group: Vec<Expr>, what: &str| -> Result<[Expr; 2], ParseError> {
        let n = group.len();
        let arr: [Expr; 2] = group.try_into().map_err(|_| ParseError {
            offset: 0,
            message: format!("{what} needs 2 components, got {n}"),
        })?;
        for e in &arr {
            e.check_variables(&[Var::X, Var::Y])?;
        }
        Ok(arr)
    };
    let mut groups = groups.into_iter();
    let forward = pair(groups.next().expect("at least one group"), "forward map")?;
    let inverse = groups.next().map(|g| pair(g, "inverse map")).transpose()?;
    Ok(MapDef {
        name: text.trim().to_string(),
        forward,
        inverse,
    })
}

/// A real function of one variable `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct FuncDef {
    pub body: Expr,
}

impl FuncDef {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let body = parse_expr(text)?;
        body.check_variables(&[Var::X])?;
        Ok(FuncDef { body })
    }

    pub fn eval(&self, x: f64) -> Result<f64, EvalError> {
        self.body.eval(&Env::x(x))
    }
}

impl fmt::Display for FuncDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.body.fmt(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_xy(text: &str, x: f64, y: f64) -> f64 {
        parse_expr(text).unwrap().eval(&Env::xy(x, y)).unwrap()
    }

    #[test]
    fn parse_examples() {
        assert!((eval_xy("x^2+y^2", 0.8, 0.6) - 1.0).abs() < 1e-15);
        assert_eq!(eval_xy("-x^2", 2.0, 0.0), -4.0);
        assert_eq!(eval_xy("sin(pi/2)", 0.0, 0.0), 1.0);
        let err = parse_expr("x + * y").unwrap_err();
        assert_eq!(err.offset, 4);
    }

    #[test]
    fn eval_examples() {
        assert_eq!(eval_xy("3*(1 - x^2)*x", 0.5, 0.0), 1.125);
        assert_eq!(eval_xy("mod(1.5, 1)", 0.0, 0.0), 0.5);
        let err = parse_expr("asin(2)")
            .unwrap()
            .eval(&Env::default())
            .unwrap_err();
        assert!(matches!(
            err,
            EvalError::Domain {
                function: "asin",
                ..
            }
        ));
    }

    #[test]
    fn mod_follows_floor_convention() {
        assert_eq!(eval_xy("mod(-0.5, 1)", 0.0, 0.0), 0.5);
        assert_eq!(eval_xy("mod(7, -3)", 0.0, 0.0), -2.0);
    }

    #[test]
    fn power_domain() {
        assert_eq!(eval_xy("x^3", -2.0, 0.0), -8.0);
        let e = parse_expr("x^(2/3)").unwrap();
        assert!(e.eval(&Env::x(-1.0)).is_err());
        assert_eq!(e.eval(&Env::x(8.0)).unwrap().round(), 4.0);
        assert!((eval_xy("cbrt(x^2)", -8.0, 0.0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn unbound_variable() {
        let e = parse_expr("x + t").unwrap();
        assert!(matches!(
            e.eval(&Env::xy(1.0, 2.0)),
            Err(EvalError::Unbound {
                name: "t",
                offset: 4
            })
        ));
    }

    #[test]
    fn map_parsing() {
        let m = parse_map("x^2+y^2, x-y").unwrap();
        assert!(m.inverse.is_none());
        let m = parse_map("x/2, y/2 | 2*x, 2*y").unwrap();
        assert!(m.inverse.is_some());
        assert!(parse_map("x, y, x").is_err());
        assert!(parse_map("x, t").is_err());
        assert!(parse_map("x, y | x").is_err());
    }

    #[test]
    fn func_def_only_accepts_x() {
        assert!(FuncDef::parse("sin(x)").is_ok());
        assert!(FuncDef::parse("sin(y)").is_err());
        assert_eq!(
            FuncDef::parse("cos(pi*x)").unwrap().eval(1.0).unwrap(),
            -1.0
        );
    }

    #[test]
    fn canonical_print_reparses() {
        let e = parse_expr("-x^2 - 3*sin(y/2)^-1 + mod(x, 2)").unwrap();
        let printed = e.to_string();
        assert_eq!(parse_expr(&printed).unwrap(), e, "{printed}");
    }
}
