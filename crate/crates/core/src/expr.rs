//! Scalar expressions over (x1, x2, x3) with exact symbolic differentiation.
//!
//! Grammar, loosest to tightest binding: `+ -`, `* /`, unary `-`, `^` with an
//! integer exponent. Functions: `exp`, `sin`, `cos`, `sqrt`. The constant `pi`
//! is also recognised.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Exp => v.exp(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Sqrt => v.sqrt(),
        }
    }
}

/// Expression tree. Variables are indexed 0, 1, 2 for x1, x2, x3.
#[derive(Clone, Debug, PartialEq)]
pub enum Expression {
    Const(f64),
    Var(usize),
    Neg(Box<Expression>),
    Add(Box<Expression>, Box<Expression>),
    Sub(Box<Expression>, Box<Expression>),
    Mul(Box<Expression>, Box<Expression>),
    Div(Box<Expression>, Box<Expression>),
    Pow(Box<Expression>, i32),
    Call(Func, Box<Expression>),
}

use Expression as E;

impl Expression {
    pub fn constant(c: f64) -> Self {
        E::Const(c)
    }

    /// Variable `x{axis+1}`; `axis` is 0-based.
    pub fn var(axis: usize) -> Self {
        assert!(axis < 3, "axis must be 0, 1 or 2");
        E::Var(axis)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            E::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn evaluate(&self, x: [f64; 3]) -> f64 {
        match self {
            E::Const(c) => *c,
            E::Var(i) => x[*i],
            E::Neg(a) => -a.evaluate(x),
            E::Add(a, b) => a.evaluate(x) + b.evaluate(x),
            E::Sub(a, b) => a.evaluate(x) - b.evaluate(x),
            E::Mul(a, b) => a.evaluate(x) * b.evaluate(x),
            E::Div(a, b) => a.evaluate(x) / b.evaluate(x),
            E::Pow(a, n) => a.evaluate(x).powi(*n),
            E::Call(f, a) => f.apply(a.evaluate(x)),
        }
    }

    /// Exact derivative with respect to the 0-based `axis`, constant-folded.
    pub fn differentiate(&self, axis: usize) -> Expression {
        match self {
            E::Const(_) => E::Const(0.0),
            E::Var(i) => E::Const(if *i == axis { 1.0 } else { 0.0 }),
            E::Neg(a) => neg(a.differentiate(axis)),
            E::Add(a, b) => add(a.differentiate(axis), b.differentiate(axis)),
            E::Sub(a, b) => sub(a.differentiate(axis), b.differentiate(axis)),
            E::Mul(a, b) => add(
                mul(a.differentiate(axis), (**b).clone()),
                mul((**a).clone(), b.differentiate(axis)),
            ),
            E::Div(a, b) => div(
                sub(
                    mul(a.differentiate(axis), (**b).clone()),
                    mul((**a).clone(), b.differentiate(axis)),
                ),
                pow((**b).clone(), 2),
            ),
            E::Pow(a, n) => mul(
                mul(E::Const(*n as f64), pow((**a).clone(), n - 1)),
                a.differentiate(axis),
            ),
            E::Call(f, a) => {
                let inner = a.differentiate(axis);
                let outer = match f {
                    Func::Exp => self.clone(),
                    Func::Sin => call(Func::Cos, (**a).clone()),
                    Func::Cos => neg(call(Func::Sin, (**a).clone())),
                    Func::Sqrt => div(E::Const(0.5), self.clone()),
                };
                mul(outer, inner)
            }
        }
    }

    pub fn gradient(&self) -> [Expression; 3] {
        [0, 1, 2].map(|i| self.differentiate(i))
    }
}

/// Constant-folding constructors used by differentiation and by
/// programmatic construction of manufactured fields.
pub fn neg(a: Expression) -> Expression {
    match a {
        E::Const(c) => E::Const(-c),
        E::Neg(inner) => *inner,
        other => E::Neg(Box::new(other)),
    }
}

pub fn add(a: Expression, b: Expression) -> Expression {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => E::Const(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => E::Add(Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expression, b: Expression) -> Expression {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => E::Const(x - y),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => E::Sub(Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expression, b: Expression) -> Expression {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => E::Const(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => E::Const(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        _ => E::Mul(Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expression, b: Expression) -> Expression {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) if y != 0.0 => E::Const(x / y),
        (Some(x), _) if x == 0.0 => E::Const(0.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => E::Div(Box::new(a), Box::new(b)),
    }
}

pub fn pow(a: Expression, n: i32) -> Expression {
    match (a.as_const(), n) {
        (_, 0) => E::Const(1.0),
        (_, 1) => a,
        (Some(x), _) => E::Const(x.powi(n)),
        _ => E::Pow(Box::new(a), n),
    }
}

pub fn call(f: Func, a: Expression) -> Expression {
    match a.as_const() {
        Some(x) => E::Const(f.apply(x)),
        None => E::Call(f, Box::new(a)),
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            E::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => {
                write!(f, "(-{:?})", -c)
            }
            E::Const(c) => write!(f, "{c:?}"),
            E::Var(i) => write!(f, "x{}", i + 1),
            E::Neg(a) => write!(f, "(-{a})"),
            E::Add(a, b) => write!(f, "({a} + {b})"),
            E::Sub(a, b) => write!(f, "({a} - {b})"),
            E::Mul(a, b) => write!(f, "({a} * {b})"),
            E::Div(a, b) => write!(f, "({a} / {b})"),
            E::Pow(a, n) => write!(f, "({a}^{n})"),
            E::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl std::str::FromStr for Expression {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse(s)
    }
}

/// Parse an expression. Errors carry the byte offset of the offending token.
pub fn parse(source: &str) -> Result<Expression> {
    let mut p = Parser { src: source.as_bytes(), pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Syntax { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expression> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = E::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = E::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expression> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = E::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = E::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expression> {
        if self.eat(b'-') {
            Ok(E::Neg(Box::new(self.unary()?)))
        } else if self.eat(b'+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expression> {
        let mut base = self.atom()?;
        while self.eat(b'^') {
            let n = self.integer_exponent()?;
            base = E::Pow(Box::new(base), n);
        }
        Ok(base)
    }

    /// Accepts `2`, `-2` or `(-2)`.
    fn integer_exponent(&mut self) -> Result<i32> {
        let paren = self.eat(b'(');
        let negative = self.eat(b'-');
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected integer exponent"));
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        let mut n: i32 = text.parse().map_err(|_| Error::Syntax {
            offset: start,
            message: "exponent out of range".into(),
        })?;
        if negative {
            n = -n;
        }
        if paren && !self.eat(b')') {
            return Err(self.error("expected `)`"));
        }
        Ok(n)
    }

    fn atom(&mut self) -> Result<Expression> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expression> {
        let start = self.pos;
        let s = self.src;
        let digits = |p: &mut usize| {
            while *p < s.len() && s[*p].is_ascii_digit() {
                *p += 1;
            }
        };
        digits(&mut self.pos);
        if self.pos < s.len() && s[self.pos] == b'.' {
            self.pos += 1;
            digits(&mut self.pos);
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(&mut self.pos);
            if exp_start == self.pos {
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).expect("ascii number");
        text.parse::<f64>()
            .map(E::Const)
            .map_err(|_| Error::Syntax { offset: start, message: format!("bad number `{text}`") })
    }

    fn identifier(&mut self) -> Result<Expression> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii identifier");
        let func = match name {
            "x1" => return Ok(E::Var(0)),
            "x2" => return Ok(E::Var(1)),
            "x3" => return Ok(E::Var(2)),
            "pi" => return Ok(E::Const(std::f64::consts::PI)),
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            _ => {
                return Err(Error::UnknownIdentifier { offset: start, name: name.to_string() })
            }
        };
        if !self.eat(b'(') {
            return Err(self.error("expected `(` after function name"));
        }
        let arg = self.expr()?;
        if !self.eat(b')') {
            return Err(self.error("expected `)`"));
        }
        Ok(E::Call(func, Box::new(arg)))
    }
}

/// Symbolic viscosity field with its exact gradient.
#[derive(Clone, Debug)]
pub struct ViscosityModel {
    pub mu: Expression,
    pub grad_mu: [Expression; 3],
    pub lower_bound: f64,
}

impl ViscosityModel {
    pub fn new(mu: Expression, lower_bound: f64) -> Self {
        assert!(lower_bound > 0.0, "viscosity lower bound must be positive");
        let grad_mu = mu.gradient();
        Self { mu, grad_mu, lower_bound }
    }

    /// Parses `source` and uses `lower_bound` as the positivity floor.
    pub fn parse(source: &str, lower_bound: f64) -> Result<Self> {
        Ok(Self::new(parse(source)?, lower_bound))
    }

    pub fn constant(value: f64) -> Self {
        Self::new(E::Const(value), value)
    }

    pub fn unit() -> Self {
        Self::constant(1.0)
    }

    /// True when the gradient is identically zero.
    pub fn is_constant(&self) -> bool {
        self.grad_mu.iter().all(Expression::is_zero)
    }

    pub fn value(&self, x: [f64; 3]) -> f64 {
        self.mu.evaluate(x)
    }

    pub fn gradient(&self, x: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|i| self.grad_mu[i].evaluate(x))
    }

    /// Fails on the first point where μ drops below the lower bound.
    pub fn check_positive<'a>(&self, points: impl IntoIterator<Item = &'a [f64; 3]>) -> Result<()> {
        for &p in points {
            let value = self.value(p);
            if !(value >= self.lower_bound) {
                return Err(Error::ViscosityBound {
                    value,
                    bound: self.lower_bound,
                    x: p[0],
                    y: p[1],
                    z: p[2],
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(s: &str, x: [f64; 3]) -> f64 {
        parse(s).unwrap().evaluate(x)
    }

    #[test]
    fn parse_examples() {
        assert_eq!(ev("1 + x1*x1", [2.0, 0.0, 0.0]), 5.0);
        assert_eq!(ev("2 + x1", [0.5, 0.0, 0.0]), 2.5);
        match parse("sin(") {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
        match parse("1 + y") {
            Err(Error::UnknownIdentifier { offset, name }) => {
                assert_eq!(offset, 4);
                assert_eq!(name, "y");
            }
            other => panic!("expected unknown identifier, got {other:?}"),
        }
    }

    #[test]
    fn precedence_and_associativity() {
        let x = [2.0, 3.0, 5.0];
        assert_eq!(ev("-x1^2", x), -4.0);
        assert_eq!(ev("x1 - x2 - x3", x), -6.0);
        assert_eq!(ev("x3 / x1 / x1", x), 1.25);
        assert_eq!(ev("2*x1^3", x), 16.0);
        assert_eq!(ev("x1^2^3", x), 64.0);
        assert_eq!(ev("x1^-1", x), 0.5);
        assert_eq!(ev("x1^(-2)", x), 0.25);
        assert_eq!(ev("1.5e1 + .5", x), 15.5);
        assert!(parse("x1^1.5").is_err());
        assert!(parse("1 + ").is_err());
        assert!(parse("(1 + 2").is_err());
    }

    #[test]
    fn derivative_examples() {
        let e = parse("x1^2").unwrap().differentiate(0);
        assert_eq!(e.evaluate([3.0, 0.0, 0.0]), 6.0);
        assert_eq!(e.to_string(), "(2.0 * x1)");
        assert!(parse("x1").unwrap().differentiate(1).is_zero());
        let d = parse("exp(x1*x3)").unwrap().differentiate(0);
        let expected = 2.0 * 2f64.exp();
        assert!((d.evaluate([1.0, 0.0, 2.0]) - expected).abs() <= 1e-14 * expected);
    }

    const CORPUS: [&str; 20] = [
        "x1^2 + x2^2 + x3^2",
        "2 + x1",
        "exp(x1*x3)",
        "sin(x1)*cos(x2)",
        "sqrt(1 + x1^2 + x2^2)",
        "x1*x2*x3",
        "1/(2 + x1^2)",
        "x1^-2 + x2",
        "exp(-x1^2 - x2^2)",
        "cos(x1 + 2*x2 - x3)",
        "sin(x1*x2)/(3 + x3)",
        "(x1 - x2)^3",
        "sqrt(x1^2 + 4)*exp(x2/3)",
        "x1^5 - 3*x1^2*x3 + 7",
        "sin(exp(x3/2))",
        "2 + x1 + x2^2*x3",
        "cos(x1)^2 + sin(x1)^2",
        "x3/(1 + x1*x1 + x2*x2)",
        "exp(sin(x1) * cos(x2 * x3))",
        "(1 + x1)^4 / (2 + x2^2)^2",
    ];

    #[test]
    fn derivative_matches_central_differences() {
        let pts = [[0.3, -0.7, 0.5], [1.1, 0.2, -0.4], [-0.6, 0.9, 1.3]];
        let h = 1e-5;
        for src in CORPUS {
            let e = parse(src).unwrap();
            for axis in 0..3 {
                let d = e.differentiate(axis);
                for p in pts {
                    let mut a = p;
                    let mut b = p;
                    a[axis] += h;
                    b[axis] -= h;
                    let fd = (e.evaluate(a) - e.evaluate(b)) / (2.0 * h);
                    let exact = d.evaluate(p);
                    let scale = exact.abs().max(1.0);
                    assert!(
                        (fd - exact).abs() <= 1e-6 * scale,
                        "{src} d/dx{}: {exact} vs {fd}",
                        axis + 1
                    );
                }
            }
        }
    }

    #[test]
    fn viscosity_model() {
        let m = ViscosityModel::parse("2 + x1", 0.5).unwrap();
        assert_eq!(m.gradient([0.3, 0.1, 0.0]), [1.0, 0.0, 0.0]);
        assert!(!m.is_constant());
        assert!(ViscosityModel::unit().is_constant());
        assert!(m.check_positive(&[[0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]).is_ok());
        assert!(m.check_positive(&[[-1.9, 0.0, 0.0]]).is_err());
    }

    fn arb_expr() -> impl Strategy<Value = Expression> {
        let leaf = prop_oneof![
            (-5.0f64..5.0).prop_map(E::Const),
            (0usize..3).prop_map(E::Var),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| E::Neg(Box::new(a))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| E::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| E::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| E::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| E::Div(Box::new(a), Box::new(b))),
                (inner.clone(), -3i32..4).prop_map(|(a, n)| E::Pow(Box::new(a), n)),
                inner.clone().prop_map(|a| E::Call(Func::Sin, Box::new(a))),
                inner.prop_map(|a| E::Call(Func::Exp, Box::new(a))),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr(), x in prop::array::uniform3(-2.0f64..2.0)) {
            let back = parse(&e.to_string()).unwrap();
            let (a, b) = (e.evaluate(x), back.evaluate(x));
            prop_assert!(a == b || (a.is_nan() && b.is_nan()), "{} -> {} vs {}", e, a, b);
        }

        #[test]
        fn folding_preserves_value(e in arb_expr(), x in prop::array::uniform3(-2.0f64..2.0)) {
            // The derivative of x1 * e by the product rule, folded, must equal
            // e + x1 * de/dx1 evaluated directly.
            let prod = E::Mul(Box::new(E::Var(0)), Box::new(e.clone()));
            let lhs = prod.differentiate(0).evaluate(x);
            let rhs = e.evaluate(x) + x[0] * e.differentiate(0).evaluate(x);
            prop_assume!(lhs.is_finite() && rhs.is_finite());
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }
    }
}
