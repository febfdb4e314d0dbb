//! Small arithmetic expression language for JSON-defined models.
//!
//! Grammar: `+ - * / ^`, parentheses, `sin`, `cos`, `exp`, numeric
//! literals and variables. `^` binds tighter than unary minus and is
//! right-associative, so `-x^2^3` is `-(x^(2^3))`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{label}: {message} at line {line}, column {column} (token '{token}')")]
pub struct ParseError {
    /// Which expression failed, e.g. `f[0]` or `delays[1]`.
    pub label: String,
    pub line: usize,
    pub column: usize,
    pub token: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Func {
    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Exponents are constant.
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, vars: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => vars[*i],
            Expr::Neg(a) => -a.eval(vars),
            Expr::Add(a, b) => a.eval(vars) + b.eval(vars),
            Expr::Sub(a, b) => a.eval(vars) - b.eval(vars),
            Expr::Mul(a, b) => a.eval(vars) * b.eval(vars),
            Expr::Div(a, b) => a.eval(vars) / b.eval(vars),
            Expr::Pow(a, k) => pow(a.eval(vars), *k),
            Expr::Call(f, a) => f.apply(a.eval(vars)),
        }
    }

    pub fn depends_on(&self, var: usize) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(i) => *i == var,
            Expr::Neg(a) | Expr::Call(_, a) | Expr::Pow(a, _) => a.depends_on(var),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on(var) || b.depends_on(var)
            }
        }
    }

    fn constant(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    /// Symbolic partial derivative with light constant folding.
    pub fn diff(&self, var: usize) -> Expr {
        if !self.depends_on(var) {
            return Expr::Num(0.0);
        }
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(i) => Expr::Num(if *i == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.diff(var)),
            Expr::Add(a, b) => add(a.diff(var), b.diff(var)),
            Expr::Sub(a, b) => sub(a.diff(var), b.diff(var)),
            Expr::Mul(a, b) => add(
                mul(a.diff(var), (**b).clone()),
                mul((**a).clone(), b.diff(var)),
            ),
            Expr::Div(a, b) => {
                // (a' b - a b') / b^2
                let num = sub(
                    mul(a.diff(var), (**b).clone()),
                    mul((**a).clone(), b.diff(var)),
                );
                div(num, mul((**b).clone(), (**b).clone()))
            }
            Expr::Pow(a, k) => mul(
                mul(Expr::Num(*k), powe((**a).clone(), k - 1.0)),
                a.diff(var),
            ),
            Expr::Call(f, a) => {
                let outer = match f {
                    Func::Sin => Expr::Call(Func::Cos, a.clone()),
                    Func::Cos => neg(Expr::Call(Func::Sin, a.clone())),
                    Func::Exp => self.clone(),
                };
                mul(outer, a.diff(var))
            }
        }
    }
}

fn pow(base: f64, k: f64) -> f64 {
    if k.fract() == 0.0 && k.abs() <= i32::MAX as f64 {
        base.powi(k as i32)
    } else {
        base.powf(k)
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a.constant(), b.constant()) {
        (Some(x), Some(y)) => Expr::Num(x + y),
        (Some(0.0), _) => b,
        (_, Some(0.0)) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a.constant(), b.constant()) {
        (Some(x), Some(y)) => Expr::Num(x - y),
        (Some(0.0), _) => neg(b),
        (_, Some(0.0)) => a,
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a.constant(), b.constant()) {
        (Some(x), Some(y)) => Expr::Num(x * y),
        (Some(0.0), _) | (_, Some(0.0)) => Expr::Num(0.0),
        (Some(1.0), _) => b,
        (_, Some(1.0)) => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a.constant(), b.constant()) {
        (Some(0.0), _) => Expr::Num(0.0),
        (_, Some(1.0)) => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn powe(a: Expr, k: f64) -> Expr {
    if k == 0.0 {
        Expr::Num(1.0)
    } else if k == 1.0 {
        a
    } else {
        Expr::Pow(Box::new(a), k)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(i) => write!(f, "v{i}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, k) => write!(f, "({a} ^ {k})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    text: String,
    line: usize,
    column: usize,
}

struct Parser<'a, R> {
    label: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    resolve: R,
}

fn lex(label: &str, src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (1usize, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_digit() || c == '.' {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse::<f64>().map_err(|_| ParseError {
                label: label.to_string(),
                line: start_line,
                column: start_col,
                token: text.clone(),
                message: "malformed number".into(),
            })?;
            Tok::Num(v)
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else if "+-*/^()".contains(c) {
            i += 1;
            Tok::Op(c)
        } else {
            return Err(ParseError {
                label: label.to_string(),
                line: start_line,
                column: start_col,
                token: c.to_string(),
                message: "unexpected character".into(),
            });
        };
        col += i - start;
        out.push(Token {
            tok,
            text: chars[start..i].iter().collect(),
            line: start_line,
            column: start_col,
        });
    }
    out.push(Token {
        tok: Tok::End,
        text: "<end>".into(),
        line,
        column: col,
    });
    Ok(out)
}

/// Parses `src`, resolving identifiers through `resolve`.
pub fn parse<R>(label: &str, src: &str, resolve: R) -> Result<Expr, ParseError>
where
    R: Fn(&str) -> Option<usize>,
{
    let tokens = lex(label, src)?;
    let mut p = Parser {
        label,
        tokens,
        pos: 0,
        resolve,
    };
    let e = p.expr()?;
    if p.peek().tok != Tok::End {
        return Err(p.error("unexpected token after expression"));
    }
    Ok(e)
}

impl<R: Fn(&str) -> Option<usize>> Parser<'_, R> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.tok != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: &str) -> ParseError {
        let t = self.peek();
        ParseError {
            label: self.label.to_string(),
            line: t.line,
            column: t.column,
            token: t.text.clone(),
            message: message.to_string(),
        }
    }

    fn expect(&mut self, op: char) -> Result<(), ParseError> {
        if self.peek().tok == Tok::Op(op) {
            self.next();
            Ok(())
        } else {
            Err(self.error(&format!("expected '{op}'")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().tok {
                Tok::Op('+') => {
                    self.next();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Op('-') => {
                    self.next();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek().tok {
                Tok::Op('*') => {
                    self.next();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Op('/') => {
                    self.next();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().tok {
            Tok::Op('-') => {
                self.next();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Op('+') => {
                self.next();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.peek().tok == Tok::Op('^') {
            self.next();
            let exponent = self.unary()?;
            if exponent.depends_on_any() {
                return Err(ParseError {
                    message: "exponent must be a constant expression".into(),
                    ..self.error("")
                });
            }
            return Ok(Expr::Pow(Box::new(base), exponent.eval(&[])));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Num(v) => {
                self.next();
                Ok(Expr::Num(*v))
            }
            Tok::Op('(') => {
                self.next();
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let func = match name.as_str() {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "exp" => Some(Func::Exp),
                    _ => None,
                };
                if let Some(func) = func {
                    self.next();
                    self.expect('(')?;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                match (self.resolve)(name) {
                    Some(idx) => {
                        self.next();
                        Ok(Expr::Var(idx))
                    }
                    None => Err(self.error("unknown symbol")),
                }
            }
            Tok::End => Err(self.error("unexpected end of expression")),
            Tok::Op(_) => Err(self.error("unexpected operator")),
        }
    }
}

impl Expr {
    fn depends_on_any(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(_) => true,
            Expr::Neg(a) | Expr::Call(_, a) | Expr::Pow(a, _) => a.depends_on_any(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on_any() || b.depends_on_any()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(name: &str) -> Option<usize> {
        match name {
            "x" => Some(0),
            "y" => Some(1),
            _ => None,
        }
    }

    fn p(src: &str) -> Expr {
        parse("t", src, vars).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(p("1 + 2 * 3").eval(&[]), 7.0);
        assert_eq!(p("(1 + 2) * 3").eval(&[]), 9.0);
        assert_eq!(p("2 ^ 3 ^ 2").eval(&[]), 512.0);
        assert_eq!(p("-2 ^ 2").eval(&[]), -4.0);
        assert_eq!(p("8 / 4 / 2").eval(&[]), 1.0);
        assert_eq!(p("1 - 2 - 3").eval(&[]), -4.0);
        assert_eq!(p("2.5e-1 * 4").eval(&[]), 1.0);
    }

    #[test]
    fn functions_and_variables() {
        let e = p("sin(x) * cos(y) + exp(x - y)");
        let (x, y): (f64, f64) = (0.3, -1.2);
        let want = x.sin() * y.cos() + (x - y).exp();
        assert!((e.eval(&[x, y]) - want).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_hand_results() {
        let e = p("x^3 * sin(y) - x / y + exp(2*x)");
        let (x, y): (f64, f64) = (0.7, 1.3);
        let dx = 3.0 * x * x * y.sin() - 1.0 / y + 2.0 * (2.0 * x).exp();
        let dy = x.powi(3) * y.cos() + x / (y * y);
        assert!((e.diff(0).eval(&[x, y]) - dx).abs() < 1e-13);
        assert!((e.diff(1).eval(&[x, y]) - dy).abs() < 1e-13);
        let dxy = 3.0 * x * x * y.cos() + 1.0 / (y * y);
        assert!((e.diff(0).diff(1).eval(&[x, y]) - dxy).abs() < 1e-13);
    }

    #[test]
    fn errors_carry_position_and_token() {
        let err = parse("f[0]", "x + * y", vars).unwrap_err();
        assert_eq!((err.line, err.column, err.token.as_str()), (1, 5, "*"));

        let err = parse("f[0]", "x +\n  zz", vars).unwrap_err();
        assert_eq!((err.line, err.column, err.token.as_str()), (2, 3, "zz"));
        assert!(err.message.contains("unknown symbol"));

        let err = parse("f[0]", "sin(x", vars).unwrap_err();
        assert_eq!(err.token, "<end>");

        let err = parse("f[0]", "x $ y", vars).unwrap_err();
        assert_eq!((err.column, err.token.as_str()), (3, "$"));

        assert!(parse("f[0]", "x ^ y", vars).is_err());
        assert!(parse("f[0]", "(x))", vars).is_err());
    }
}
