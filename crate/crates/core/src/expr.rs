//! Scalar expressions over a declared list of variables.
//!
//! Grammar (EBNF):
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | primary ;
//! primary = number | ident | call | "(" expr ")" ;
//! call    = ("min" | "max") "(" expr "," expr ")" | "abs" "(" expr ")" ;
//! number  = digit { digit } [ "." { digit } ] [ ("e" | "E") [ "+" | "-" ] digit { digit } ] ;
//! ```
//!
//! Unary minus binds tighter than `*` and `/`, so `-a*b` is `(-a)*b`.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("undeclared variable \"{name}\" at byte {offset}")]
    UndeclaredVariable { name: String, offset: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no binding for variable \"{0}\"")]
    MissingBinding(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("expected {expected} values, got {got}")]
    Arity { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Min,
    Max,
    Abs,
}

impl Func {
    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            Func::Abs => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Min => "min",
            Func::Max => "max",
            Func::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        match name {
            "min" => Some(Func::Min),
            "max" => Some(Func::Max),
            "abs" => Some(Func::Abs),
            _ => None,
        }
    }
}

/// Expression tree. Variables are indices into the owning [`Expr`]'s
/// variable list.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    fn eval(&self, values: &[f64]) -> Result<f64, EvalError> {
        Ok(match self {
            Node::Const(c) => *c,
            Node::Var(i) => values[*i],
            Node::Neg(a) => -a.eval(values)?,
            Node::Binary(op, a, b) => {
                let (a, b) = (a.eval(values)?, b.eval(values)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                }
            }
            Node::Call(func, args) => match func {
                Func::Min => args[0].eval(values)?.min(args[1].eval(values)?),
                Func::Max => args[0].eval(values)?.max(args[1].eval(values)?),
                Func::Abs => args[0].eval(values)?.abs(),
            },
        })
    }

    fn depends_on(&self, var: usize) -> bool {
        match self {
            Node::Const(_) => false,
            Node::Var(i) => *i == var,
            Node::Neg(a) => a.depends_on(var),
            Node::Binary(_, a, b) => a.depends_on(var) || b.depends_on(var),
            Node::Call(_, args) => args.iter().any(|a| a.depends_on(var)),
        }
    }

    fn has_division(&self) -> bool {
        match self {
            Node::Const(_) | Node::Var(_) => false,
            Node::Neg(a) => a.has_division(),
            Node::Binary(op, a, b) => *op == BinOp::Div || a.has_division() || b.has_division(),
            Node::Call(_, args) => args.iter().any(Node::has_division),
        }
    }

    /// Splits the node as `intercept + slope * var` when it is affine in `var`.
    fn affine(&self, var: usize) -> Option<(Node, Node)> {
        let bin = |op, a: Node, b: Node| Node::Binary(op, Box::new(a), Box::new(b));
        if !self.depends_on(var) {
            return Some((self.clone(), Node::Const(0.0)));
        }
        match self {
            Node::Const(_) => unreachable!(),
            Node::Var(_) => Some((Node::Const(0.0), Node::Const(1.0))),
            Node::Neg(a) => {
                let (a0, a1) = a.affine(var)?;
                Some((Node::Neg(Box::new(a0)), Node::Neg(Box::new(a1))))
            }
            Node::Binary(op @ (BinOp::Add | BinOp::Sub), a, b) => {
                let (a0, a1) = a.affine(var)?;
                let (b0, b1) = b.affine(var)?;
                Some((bin(*op, a0, b0), bin(*op, a1, b1)))
            }
            Node::Binary(BinOp::Mul, a, b) => {
                if !a.depends_on(var) {
                    let (b0, b1) = b.affine(var)?;
                    Some((bin(BinOp::Mul, (**a).clone(), b0), bin(BinOp::Mul, (**a).clone(), b1)))
                } else if !b.depends_on(var) {
                    let (a0, a1) = a.affine(var)?;
                    Some((bin(BinOp::Mul, a0, (**b).clone()), bin(BinOp::Mul, a1, (**b).clone())))
                } else {
                    None
                }
            }
            Node::Binary(BinOp::Div, a, b) => {
                if b.depends_on(var) {
                    return None;
                }
                let (a0, a1) = a.affine(var)?;
                Some((bin(BinOp::Div, a0, (**b).clone()), bin(BinOp::Div, a1, (**b).clone())))
            }
            Node::Call(..) => None,
        }
    }
}

/// A parsed expression together with its declared free-variable list.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    vars: Vec<String>,
}

impl Expr {
    pub fn parse(src: &str, allowed_vars: &[&str]) -> Result<Expr, ExprError> {
        let vars: Vec<String> = allowed_vars.iter().map(|v| v.to_string()).collect();
        let mut parser = Parser { src, pos: 0, vars: &vars };
        let root = parser.expr()?;
        parser.skip_ws();
        if parser.pos < src.len() {
            return Err(parser.syntax("unexpected trailing input"));
        }
        Ok(Expr { root, vars })
    }

    pub fn constant(value: f64, vars: &[&str]) -> Expr {
        Expr { root: Node::Const(value), vars: vars.iter().map(|v| v.to_string()).collect() }
    }

    pub fn from_node(root: Node, vars: Vec<String>) -> Expr {
        Expr { root, vars }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn negated(&self) -> Expr {
        Expr { root: Node::Neg(Box::new(self.root.clone())), vars: self.vars.clone() }
    }

    fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }

    /// Evaluates with positional values, in the order of [`Expr::vars`].
    pub fn eval(&self, values: &[f64]) -> Result<f64, EvalError> {
        if values.len() != self.vars.len() {
            return Err(EvalError::Arity { expected: self.vars.len(), got: values.len() });
        }
        self.root.eval(values)
    }

    pub fn evaluate(&self, bindings: &HashMap<&str, f64>) -> Result<f64, EvalError> {
        let values = self
            .vars
            .iter()
            .map(|v| bindings.get(v.as_str()).copied().ok_or_else(|| EvalError::MissingBinding(v.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        self.root.eval(&values)
    }

    pub fn depends_on(&self, var: &str) -> bool {
        self.var_index(var).is_some_and(|i| self.root.depends_on(i))
    }

    /// True when no declared variable occurs in the tree.
    pub fn is_constant(&self) -> bool {
        (0..self.vars.len()).all(|i| !self.root.depends_on(i))
    }

    pub fn has_division(&self) -> bool {
        self.root.has_division()
    }

    /// Symbolic split `self = intercept + slope * var` when `self` is affine in
    /// `var`; intercept and slope do not depend on `var`.
    pub fn affine_in(&self, var: &str) -> Option<(Expr, Expr)> {
        let i = match self.var_index(var) {
            Some(i) => i,
            None => return Some((self.clone(), Expr { root: Node::Const(0.0), vars: self.vars.clone() })),
        };
        let (a, b) = self.root.affine(i)?;
        Some((Expr { root: a, vars: self.vars.clone() }, Expr { root: b, vars: self.vars.clone() }))
    }

    pub fn is_affine_in(&self, var: &str) -> bool {
        self.affine_in(var).is_some()
    }
}

/// A real function of `(x, y)`; implemented by bifunction expressions and by
/// native closures.
pub trait Bifunction {
    fn at(&self, x: f64, y: f64) -> Result<f64, EvalError>;
}

impl Bifunction for Expr {
    fn at(&self, x: f64, y: f64) -> Result<f64, EvalError> {
        self.eval(&[x, y])
    }
}

impl<F: Fn(f64, f64) -> f64> Bifunction for F {
    fn at(&self, x: f64, y: f64) -> Result<f64, EvalError> {
        Ok(self(x, y))
    }
}

/// A real function of `x` alone, such as `g`, `ε` or `ε′`.
pub trait ScalarFn {
    fn at(&self, x: f64) -> Result<f64, EvalError>;
}

impl ScalarFn for Expr {
    fn at(&self, x: f64) -> Result<f64, EvalError> {
        self.eval(&[x])
    }
}

impl<F: Fn(f64) -> f64> ScalarFn for F {
    fn at(&self, x: f64) -> Result<f64, EvalError> {
        Ok(self(x))
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    vars: &'a [String],
}

impl Parser<'_> {
    fn syntax(&self, message: &str) -> ExprError {
        ExprError::Syntax { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ExprError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.syntax(&format!("expected '{c}'")))
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat('-') {
            Ok(Node::Neg(Box::new(self.unary()?)))
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_alphabetic() || c == '_' => {
                while let Some(c) = self.peek() {
                    if !(c.is_alphanumeric() || c == '_') {
                        break;
                    }
                    self.pos += c.len_utf8();
                }
                let name = &self.src[start..self.pos];
                if let Some(func) = Func::from_name(name) {
                    self.expect('(')?;
                    let mut args = vec![self.expr()?];
                    while self.eat(',') {
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    if args.len() != func.arity() {
                        return Err(ExprError::Syntax {
                            offset: start,
                            message: format!("{} takes {} argument(s), got {}", name, func.arity(), args.len()),
                        });
                    }
                    Ok(Node::Call(func, args))
                } else {
                    match self.vars.iter().position(|v| v == name) {
                        Some(i) => Ok(Node::Var(i)),
                        None => Err(ExprError::UndeclaredVariable { name: name.to_string(), offset: start }),
                    }
                }
            }
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Some(_) => Err(self.syntax("unexpected character")),
            None => Err(self.syntax("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let digits = |p: &mut usize| {
            let s = *p;
            while *p < bytes.len() && bytes[*p].is_ascii_digit() {
                *p += 1;
            }
            *p > s
        };
        let mut p = self.pos;
        let int = digits(&mut p);
        let mut frac = false;
        if p < bytes.len() && bytes[p] == b'.' {
            p += 1;
            frac = digits(&mut p);
        }
        if !int && !frac {
            return Err(self.syntax("malformed number"));
        }
        if p < bytes.len() && (bytes[p] == b'e' || bytes[p] == b'E') {
            let mut q = p + 1;
            if q < bytes.len() && (bytes[q] == b'+' || bytes[q] == b'-') {
                q += 1;
            }
            if digits(&mut q) {
                p = q;
            }
        }
        self.pos = p;
        self.src[start..p]
            .parse::<f64>()
            .map(Node::Const)
            .map_err(|_| ExprError::Syntax { offset: start, message: "malformed number".into() })
    }
}

struct Printer<'a> {
    node: &'a Node,
    vars: &'a [String],
}

impl Printer<'_> {
    fn sub<'b>(&'b self, node: &'b Node) -> Printer<'b> {
        Printer { node, vars: self.vars }
    }
}

impl fmt::Display for Printer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Node::Const(c) => write!(f, "{c}"),
            Node::Var(i) => write!(f, "{}", self.vars[*i]),
            Node::Neg(a) => match **a {
                Node::Binary(..) => write!(f, "-({})", self.sub(a)),
                _ => write!(f, "-{}", self.sub(a)),
            },
            Node::Binary(op, a, b) => {
                let prec = op.precedence();
                let wrap_left = matches!(**a, Node::Binary(o, ..) if o.precedence() < prec);
                let wrap_right = matches!(**b, Node::Binary(o, ..) if o.precedence() <= prec);
                if wrap_left {
                    write!(f, "({})", self.sub(a))?;
                } else {
                    write!(f, "{}", self.sub(a))?;
                }
                write!(f, " {} ", op.symbol())?;
                if wrap_right {
                    write!(f, "({})", self.sub(b))
                } else {
                    write!(f, "{}", self.sub(b))
                }
            }
            Node::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", self.sub(a))?;
                }
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", Printer { node: &self.root, vars: &self.vars })
    }
}
