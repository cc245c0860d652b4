//! Arithmetic expressions over state, control and constant symbols.
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := ("-" | "+") unary | power
//! power   := atom ("^" unary)?          right associative, binds tighter than unary minus
//! atom    := number | name | name "(" [expr ("," expr)*] ")" | "(" expr ")"
//! ```
//!
//! Functions: `sin cos tan exp ln sqrt abs sign floor ceil min max clamp norm`, with
//! `norm()` the Euclidean norm of the state. The constant `pi` is predefined.

use crate::{Error, Result};
use std::fmt;

/// Names the expression may refer to.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Symbols {
    pub states: Vec<String>,
    pub controls: Vec<String>,
    pub constants: Vec<(String, f64)>,
}

impl Symbols {
    pub fn new(states: &[String], controls: &[String], constants: &[(String, f64)]) -> Self {
        Self {
            states: states.to_vec(),
            controls: controls.to_vec(),
            constants: constants.to_vec(),
        }
    }

    /// Same symbols without controls, for functions of the state only.
    pub fn state_only(&self) -> Self {
        Self {
            controls: Vec::new(),
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Sign,
    Floor,
    Ceil,
    Min,
    Max,
    Clamp,
    Norm,
}

impl Func {
    fn lookup(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            "floor" => Func::Floor,
            "ceil" => Func::Ceil,
            "min" => Func::Min,
            "max" => Func::Max,
            "clamp" => Func::Clamp,
            "norm" => Func::Norm,
            _ => return None,
        })
    }

    fn arity_ok(self, n: usize) -> bool {
        match self {
            Func::Min | Func::Max => n >= 1,
            Func::Clamp => n == 3,
            Func::Norm => true,
            _ => n == 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    State(usize),
    Control(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    fn eval(&self, x: &[f64], u: &[f64]) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::State(i) => x[*i],
            Node::Control(i) => u[*i],
            Node::Neg(a) => -a.eval(x, u),
            Node::Add(a, b) => a.eval(x, u) + b.eval(x, u),
            Node::Sub(a, b) => a.eval(x, u) - b.eval(x, u),
            Node::Mul(a, b) => a.eval(x, u) * b.eval(x, u),
            Node::Div(a, b) => a.eval(x, u) / b.eval(x, u),
            Node::Pow(a, b) => {
                let base = a.eval(x, u);
                let e = b.eval(x, u);
                if e.fract() == 0.0 && e.abs() <= i32::MAX as f64 {
                    base.powi(e as i32)
                } else {
                    base.powf(e)
                }
            }
            Node::Call(f, args) => {
                let arg = |k: usize| args[k].eval(x, u);
                match f {
                    Func::Sin => arg(0).sin(),
                    Func::Cos => arg(0).cos(),
                    Func::Tan => arg(0).tan(),
                    Func::Exp => arg(0).exp(),
                    Func::Ln => arg(0).ln(),
                    Func::Sqrt => arg(0).sqrt(),
                    Func::Abs => arg(0).abs(),
                    Func::Sign => {
                        let v = arg(0);
                        if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                    Func::Floor => arg(0).floor(),
                    Func::Ceil => arg(0).ceil(),
                    Func::Min => args
                        .iter()
                        .map(|a| a.eval(x, u))
                        .fold(f64::INFINITY, f64::min),
                    Func::Max => args
                        .iter()
                        .map(|a| a.eval(x, u))
                        .fold(f64::NEG_INFINITY, f64::max),
                    Func::Clamp => arg(0).clamp(arg(1), arg(2)),
                    Func::Norm if args.is_empty() => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
                    Func::Norm => args
                        .iter()
                        .map(|a| a.eval(x, u).powi(2))
                        .sum::<f64>()
                        .sqrt(),
                }
            }
        }
    }
}

/// A compiled expression together with its source text.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl Expr {
    /// Parses `source`; `context` names the field in error messages.
    pub fn parse(source: &str, symbols: &Symbols, context: &str) -> Result<Self> {
        let mut p = Parser {
            src: source,
            chars: source.char_indices().collect(),
            pos: 0,
            symbols,
            context,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(p.error(format!("unexpected `{}`", p.chars[p.pos].1)));
        }
        Ok(Self {
            source: source.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> f64 {
        self.root.eval(x, u)
    }
}

struct Parser<'a> {
    src: &'a str,
    chars: Vec<(usize, char)>,
    pos: usize,
    symbols: &'a Symbols,
    context: &'a str,
}

impl Parser<'_> {
    fn location(&self, pos: usize) -> (usize, usize) {
        let mut line = 1;
        let mut col = 1;
        for &(_, c) in &self.chars[..pos.min(self.chars.len())] {
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        }
        (line, col)
    }

    fn error_at(&self, pos: usize, message: String) -> Error {
        let (line, column) = self.location(pos);
        Error::Parse {
            context: self.context.to_string(),
            line,
            column,
            message,
        }
    }

    fn error(&self, message: String) -> Error {
        self.error_at(self.pos, message)
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].1.is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            let found = self
                .peek()
                .map_or("end of input".to_string(), |f| format!("`{f}`"));
            Err(self.error(format!("expected `{c}`, found {found}")))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            Ok(Node::Neg(Box::new(self.unary()?)))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat('^') {
            Ok(Node::Pow(Box::new(base), Box::new(self.unary()?)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            None => Err(self.error("unexpected end of input".into())),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_alphabetic() || c == '_' => self.name(),
            Some(c) => Err(self.error(format!("unexpected `{c}`"))),
        }
    }

    fn slice(&self, start: usize, end: usize) -> &str {
        let a = self.chars[start].0;
        let b = self.chars.get(end).map_or(self.src.len(), |&(i, _)| i);
        &self.src[a..b]
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let at = |p: &Self, k: usize| p.chars.get(k).map(|&(_, c)| c);
        while at(self, self.pos).is_some_and(|c| c.is_ascii_digit() || c == '.') {
            self.pos += 1;
        }
        if at(self, self.pos).is_some_and(|c| c == 'e' || c == 'E') {
            let mut k = self.pos + 1;
            if at(self, k).is_some_and(|c| c == '+' || c == '-') {
                k += 1;
            }
            if at(self, k).is_some_and(|c| c.is_ascii_digit()) {
                self.pos = k;
                while at(self, self.pos).is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
            }
        }
        let text = self.slice(start, self.pos);
        text.parse::<f64>()
            .map(Node::Num)
            .map_err(|_| self.error_at(start, format!("malformed number `{text}`")))
    }

    fn name(&mut self) -> Result<Node> {
        let start = self.pos;
        while self
            .chars
            .get(self.pos)
            .is_some_and(|&(_, c)| c.is_alphanumeric() || c == '_')
        {
            self.pos += 1;
        }
        let name = self.slice(start, self.pos).to_string();
        if self.peek() == Some('(') {
            let func = Func::lookup(&name)
                .ok_or_else(|| self.error_at(start, format!("unknown function `{name}`")))?;
            self.pos += 1;
            let mut args = Vec::new();
            if !self.eat(')') {
                loop {
                    args.push(self.expr()?);
                    if self.eat(')') {
                        break;
                    }
                    self.expect(',')?;
                }
            }
            if !func.arity_ok(args.len()) {
                return Err(self.error_at(
                    start,
                    format!("`{name}` does not take {} arguments", args.len()),
                ));
            }
            return Ok(Node::Call(func, args));
        }
        if let Some(i) = self.symbols.states.iter().position(|s| *s == name) {
            return Ok(Node::State(i));
        }
        if let Some(i) = self.symbols.controls.iter().position(|s| *s == name) {
            return Ok(Node::Control(i));
        }
        if let Some((_, v)) = self.symbols.constants.iter().find(|(s, _)| *s == name) {
            return Ok(Node::Num(*v));
        }
        if name == "pi" {
            return Ok(Node::Num(std::f64::consts::PI));
        }
        Err(self.error_at(start, format!("unknown symbol `{name}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symbols() -> Symbols {
        Symbols::new(
            &["x1".into(), "x2".into()],
            &["a".into()],
            &[("k".into(), 0.5)],
        )
    }

    fn eval(src: &str) -> f64 {
        Expr::parse(src, &symbols(), "test")
            .unwrap()
            .eval(&[3.0, 4.0], &[-1.0])
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(eval("1 + 2 * 3"), 7.0);
        assert_eq!(eval("(1 + 2) * 3"), 9.0);
        assert_eq!(eval("2 ^ 3 ^ 2"), 512.0);
        assert_eq!(eval("-x1^2"), -9.0);
        assert_eq!(eval("x1^-1"), 1.0 / 3.0);
        assert_eq!(eval("8 / 4 / 2"), 1.0);
        assert_eq!(eval("1e-3 * 2E2"), 0.2);
    }

    #[test]
    fn symbols_resolve() {
        assert_eq!(eval("a * x1 + k * x2"), -1.0);
        assert_eq!(eval("norm()"), 5.0);
        assert_eq!(eval("norm(x1, x2, 12)"), 13.0);
        assert_eq!(eval("sin(pi / 2)^2"), 1.0);
        assert_eq!(eval("sign(a) + abs(a)"), 0.0);
        assert_eq!(eval("min(x1, x2, 1) + max(x1, x2)"), 5.0);
        assert_eq!(eval("clamp(x1, 0, 1) + floor(2.5) + ceil(2.5)"), 6.0);
        assert_eq!(eval("sqrt(x2) * exp(0) + ln(1)"), 2.0);
    }

    #[test]
    fn errors_carry_locations() {
        let err = Expr::parse("x1 +", &symbols(), "drift[0]").unwrap_err();
        match err {
            Error::Parse {
                context,
                line,
                column,
                ..
            } => {
                assert_eq!(context, "drift[0]");
                assert_eq!((line, column), (1, 5));
            }
            e => panic!("{e}"),
        }
        let err = Expr::parse("x1 *\n  y", &symbols(), "f").unwrap_err();
        assert!(
            matches!(
                err,
                Error::Parse {
                    line: 2,
                    column: 3,
                    ..
                }
            ),
            "{err}"
        );
        assert!(Expr::parse("foo(x1)", &symbols(), "f").is_err());
        assert!(Expr::parse("sin(x1, x2)", &symbols(), "f").is_err());
        assert!(Expr::parse("(x1", &symbols(), "f").is_err());
        assert!(Expr::parse("x1 x2", &symbols(), "f").is_err());
        assert!(Expr::parse("a", &symbols().state_only(), "f").is_err());
    }
}
