//! Small arithmetic expressions in `x`, `y`, `t`.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numbers, the constant
//! `pi`, and the functions `sin cos exp sqrt abs`. `^` binds tighter than
//! unary minus and is right associative, so `-x^2 = -(x^2)`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mesh::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    X,
    Y,
    T,
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::X => x,
            Node::Y => y,
            Node::T => t,
            Node::Neg(a) => -a.eval(x, y, t),
            Node::Bin(op, a, b) => {
                let (a, b) = (a.eval(x, y, t), b.eval(x, y, t));
                match op {
                    '+' => a + b,
                    '-' => a - b,
                    '*' => a * b,
                    '/' => a / b,
                    _ => a.powf(b),
                }
            }
            Node::Call(f, a) => f.apply(a.eval(x, y, t)),
        }
    }

    fn uses_time(&self) -> bool {
        match self {
            Node::T => true,
            Node::Num(_) | Node::X | Node::Y => false,
            Node::Neg(a) | Node::Call(_, a) => a.uses_time(),
            Node::Bin(_, a, b) => a.uses_time() || b.uses_time(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent part, only if followed by digits
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
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse::<f64>()
                .map_err(|_| Error::Expr(format!("bad number '{s}' in '{src}'")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else {
            return Err(Error::Expr(format!("unexpected character '{c}' in '{src}'")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn peek_op(&self) -> Option<char> {
        match self.toks.get(self.pos) {
            Some(Tok::Op(c)) => Some(*c),
            _ => None,
        }
    }

    fn err(&self, msg: &str) -> Error {
        Error::Expr(format!("{msg} at token {} in '{}'", self.pos + 1, self.src))
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            return Ok(Node::Bin('^', Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let tok = self.toks.get(self.pos).cloned().ok_or_else(|| self.err("unexpected end"))?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Node::Num(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Op(c) => Err(self.err(&format!("unexpected '{c}'"))),
            Tok::Ident(name) => match name.as_str() {
                "x" => Ok(Node::X),
                "y" => Ok(Node::Y),
                "t" => Ok(Node::T),
                "pi" => Ok(Node::Num(std::f64::consts::PI)),
                _ => {
                    let f = Func::lookup(&name).ok_or_else(|| self.err(&format!("unknown name '{name}'")))?;
                    self.expect('(')?;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    Ok(Node::Call(f, Box::new(arg)))
                }
            },
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek_op() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{c}'")))
        }
    }
}

/// A parsed expression together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    src: String,
    root: Node,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let src = src.trim();
        let mut p = Parser {
            toks: tokenize(src)?,
            pos: 0,
            src,
        };
        if p.toks.is_empty() {
            return Err(Error::Expr("empty expression".into()));
        }
        let root = p.expr()?;
        if p.pos != p.toks.len() {
            return Err(p.err("trailing input"));
        }
        Ok(Expr {
            src: src.to_string(),
            root,
        })
    }

    pub fn constant(v: f64) -> Expr {
        Expr {
            src: format!("{v:?}"),
            root: Node::Num(v),
        }
    }

    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        self.root.eval(x, y, t)
    }

    pub fn at(&self, p: Point, t: f64) -> f64 {
        self.eval(p[0], p[1], t)
    }

    pub fn uses_time(&self) -> bool {
        self.root.uses_time()
    }

    pub fn source(&self) -> &str {
        &self.src
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.src)
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Expr> {
        Expr::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: f64, y: f64, t: f64) -> f64 {
        Expr::parse(s).unwrap().eval(x, y, t)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", 0.0, 0.0, 0.0), 7.0);
        assert_eq!(ev("(1 + 2) * 3", 0.0, 0.0, 0.0), 9.0);
        assert_eq!(ev("2 ^ 3 ^ 2", 0.0, 0.0, 0.0), 512.0);
        assert_eq!(ev("-x^2", 3.0, 0.0, 0.0), -9.0);
        assert_eq!(ev("8 / 4 / 2", 0.0, 0.0, 0.0), 1.0);
        assert_eq!(ev("1 - 2 - 3", 0.0, 0.0, 0.0), -4.0);
        assert_eq!(ev("2^-1", 0.0, 0.0, 0.0), 0.5);
    }

    #[test]
    fn variables_functions_constants() {
        assert_eq!(ev("x + 2*y + 3*t", 1.0, 2.0, 3.0), 14.0);
        assert!((ev("sin(pi/2) + cos(0) + exp(0) + sqrt(4) + abs(-1)", 0.0, 0.0, 0.0) - 6.0).abs() < 1e-15);
        assert_eq!(ev("1.5e2 + 2E-1", 0.0, 0.0, 0.0), 150.2);
    }

    #[test]
    fn errors() {
        for bad in ["", "1 +", "(1", "foo(1)", "z", "1 2", "sin 1", "3 $ 4", "1..2"] {
            assert!(Expr::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn source_round_trip_and_time_use() {
        let e = Expr::parse("  1 + x*t ").unwrap();
        assert_eq!(e.to_string(), "1 + x*t");
        assert!(e.uses_time());
        assert!(!Expr::parse("x").unwrap().uses_time());
        assert_eq!(Expr::constant(0.1).eval(0.0, 0.0, 0.0), 0.1);
        assert_eq!(Expr::parse(&Expr::constant(0.1).to_string()).unwrap().eval(0.0, 0.0, 0.0), 0.1);
    }
}
