//! Arithmetic expressions over `t`, `x`, `y` for scenario data, with symbolic
//! differentiation in `t`.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Names: `t`, `x`, `y`, `pi`. Functions: `sin cos tan exp log sqrt abs tanh
//! sinh cosh` (one argument), `min max` (two), and any table registered in the
//! [`Tables`] passed to the parser (one argument, linear interpolation).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Piecewise-linear function given by samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    name: String,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl Table {
    pub fn new(name: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if times.len() != values.len() || times.len() < 2 {
            return Err(Error::Data(format!(
                "table `{name}` needs at least two (t, value) rows"
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Data(format!(
                "table `{name}` times are not strictly increasing"
            )));
        }
        if values.iter().chain(&times).any(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "table `{name}` holds non-finite values"
            )));
        }
        Ok(Table {
            name,
            times,
            values,
        })
    }

    /// Reads column `column` (1-based after the time column) of a CSV file
    /// whose first column is time. A header row is required.
    pub fn read_csv(name: &str, path: &Path, column: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let (mut times, mut values) = (Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            let get = |c: usize| -> Result<f64> {
                rec.get(c).and_then(|s| s.parse().ok()).ok_or_else(|| {
                    Error::Data(format!(
                        "{}: row {}: column {c} is missing or not a number",
                        path.display(),
                        i + 2
                    ))
                })
            };
            times.push(get(0)?);
            values.push(get(column)?);
        }
        Table::new(name, times, values)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Smallest sample spacing.
    pub fn min_spacing(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest sample spacing.
    pub fn max_spacing(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().expect("two rows"))
    }

    fn segment(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s <= t);
        k.clamp(1, self.times.len() - 1) - 1
    }

    /// Linear interpolation, constant extrapolation outside the range.
    pub fn eval(&self, t: f64) -> f64 {
        let (lo, hi) = self.range();
        if t <= lo {
            return self.values[0];
        }
        if t >= hi {
            return *self.values.last().expect("two rows");
        }
        let i = self.segment(t);
        let s = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        self.values[i] + s * (self.values[i + 1] - self.values[i])
    }

    /// Right derivative of the interpolant.
    pub fn slope(&self, t: f64) -> f64 {
        let (lo, hi) = self.range();
        if t < lo || t >= hi {
            return 0.0;
        }
        let i = self.segment(t);
        (self.values[i + 1] - self.values[i]) / (self.times[i + 1] - self.times[i])
    }
}

/// Named tables available to expressions.
pub type Tables = BTreeMap<String, Arc<Table>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Tanh,
    Sinh,
    Cosh,
    Sign,
}

impl Func {
    fn lookup(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Sign => "sign",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
            Func::Tanh => v.tanh(),
            Func::Sinh => v.sinh(),
            Func::Cosh => v.cosh(),
            Func::Sign => {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    T,
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
    /// `if a <= b { p } else { q }`.
    Select(Box<[Node; 4]>),
    Table(Arc<Table>, Box<Node>),
    TableSlope(Arc<Table>, Box<Node>),
}

/// A parsed expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
}

impl Expr {
    pub fn constant(v: f64) -> Self {
        Expr { root: Node::Num(v) }
    }

    pub fn parse(src: &str, tables: &Tables) -> Result<Self> {
        let mut p = Parser {
            src,
            pos: 0,
            tables,
        };
        p.skip_ws();
        let root = p.expr()?;
        p.skip_ws();
        if p.pos < src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Expr { root })
    }

    pub fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        self.root.eval(t, x, y)
    }

    /// Symbolic derivative with respect to `t`.
    pub fn diff_t(&self) -> Expr {
        Expr {
            root: self.root.diff(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.root == Node::Num(0.0)
    }

    pub fn depends_on_t(&self) -> bool {
        self.root.uses(Var::T)
    }

    /// Tables referenced anywhere in the expression.
    pub fn tables(&self) -> Vec<Arc<Table>> {
        let mut out = Vec::new();
        self.root.collect_tables(&mut out);
        out
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}

fn num(v: f64) -> Node {
    Node::Num(v)
}

fn add(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Num(p), Node::Num(q)) => num(p + q),
        (Node::Num(z), _) if *z == 0.0 => b,
        (_, Node::Num(z)) if *z == 0.0 => a,
        _ => Node::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Num(p), Node::Num(q)) => num(p - q),
        (_, Node::Num(z)) if *z == 0.0 => a,
        (Node::Num(z), _) if *z == 0.0 => neg(b),
        _ => Node::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Num(p), Node::Num(q)) => num(p * q),
        (Node::Num(z), _) | (_, Node::Num(z)) if *z == 0.0 => num(0.0),
        (Node::Num(o), _) if *o == 1.0 => b,
        (_, Node::Num(o)) if *o == 1.0 => a,
        _ => Node::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Num(p), Node::Num(q)) if *q != 0.0 => num(p / q),
        (Node::Num(z), _) if *z == 0.0 => num(0.0),
        (_, Node::Num(o)) if *o == 1.0 => a,
        _ => Node::Div(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Node) -> Node {
    match a {
        Node::Num(v) => num(-v),
        Node::Neg(inner) => *inner,
        other => Node::Neg(Box::new(other)),
    }
}

fn call(f: Func, a: Node) -> Node {
    match a {
        Node::Num(v) => num(f.apply(v)),
        other => Node::Call(f, Box::new(other)),
    }
}

fn pow(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Num(p), Node::Num(q)) => num(p.powf(*q)),
        (_, Node::Num(o)) if *o == 1.0 => a,
        (_, Node::Num(z)) if *z == 0.0 => num(1.0),
        _ => Node::Pow(Box::new(a), Box::new(b)),
    }
}

fn select(a: Node, b: Node, p: Node, q: Node) -> Node {
    if p == q {
        return p;
    }
    Node::Select(Box::new([a, b, p, q]))
}

impl Node {
    fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Var(Var::T) => t,
            Node::Var(Var::X) => x,
            Node::Var(Var::Y) => y,
            Node::Neg(a) => -a.eval(t, x, y),
            Node::Add(a, b) => a.eval(t, x, y) + b.eval(t, x, y),
            Node::Sub(a, b) => a.eval(t, x, y) - b.eval(t, x, y),
            Node::Mul(a, b) => a.eval(t, x, y) * b.eval(t, x, y),
            Node::Div(a, b) => a.eval(t, x, y) / b.eval(t, x, y),
            Node::Pow(a, b) => {
                let (base, e) = (a.eval(t, x, y), b.eval(t, x, y));
                if e == e.round() && e.abs() < 64.0 {
                    base.powi(e as i32)
                } else {
                    base.powf(e)
                }
            }
            Node::Call(f, a) => f.apply(a.eval(t, x, y)),
            Node::Select(s) => {
                if s[0].eval(t, x, y) <= s[1].eval(t, x, y) {
                    s[2].eval(t, x, y)
                } else {
                    s[3].eval(t, x, y)
                }
            }
            Node::Table(tab, a) => tab.eval(a.eval(t, x, y)),
            Node::TableSlope(tab, a) => tab.slope(a.eval(t, x, y)),
        }
    }

    fn uses(&self, v: Var) -> bool {
        match self {
            Node::Num(_) => false,
            Node::Var(w) => *w == v,
            Node::Neg(a) | Node::Call(_, a) | Node::Table(_, a) | Node::TableSlope(_, a) => {
                a.uses(v)
            }
            Node::Add(a, b)
            | Node::Sub(a, b)
            | Node::Mul(a, b)
            | Node::Div(a, b)
            | Node::Pow(a, b) => a.uses(v) || b.uses(v),
            Node::Select(s) => s.iter().any(|n| n.uses(v)),
        }
    }

    fn collect_tables(&self, out: &mut Vec<Arc<Table>>) {
        match self {
            Node::Num(_) | Node::Var(_) => {}
            Node::Neg(a) | Node::Call(_, a) => a.collect_tables(out),
            Node::Table(tab, a) | Node::TableSlope(tab, a) => {
                if !out.iter().any(|t| Arc::ptr_eq(t, tab)) {
                    out.push(tab.clone());
                }
                a.collect_tables(out);
            }
            Node::Add(a, b)
            | Node::Sub(a, b)
            | Node::Mul(a, b)
            | Node::Div(a, b)
            | Node::Pow(a, b) => {
                a.collect_tables(out);
                b.collect_tables(out);
            }
            Node::Select(s) => s.iter().for_each(|n| n.collect_tables(out)),
        }
    }

    fn diff(&self) -> Node {
        match self {
            Node::Num(_) => num(0.0),
            Node::Var(v) => num(if *v == Var::T { 1.0 } else { 0.0 }),
            Node::Neg(a) => neg(a.diff()),
            Node::Add(a, b) => add(a.diff(), b.diff()),
            Node::Sub(a, b) => sub(a.diff(), b.diff()),
            Node::Mul(a, b) => add(mul(a.diff(), (**b).clone()), mul((**a).clone(), b.diff())),
            Node::Div(a, b) => {
                let (a, b) = ((**a).clone(), (**b).clone());
                div(
                    sub(mul(a.diff(), b.clone()), mul(a, b.diff())),
                    mul(b.clone(), b),
                )
            }
            Node::Pow(a, b) => {
                let (a, b) = ((**a).clone(), (**b).clone());
                if !b.uses(Var::T) {
                    mul(mul(b.clone(), pow(a.clone(), sub(b, num(1.0)))), a.diff())
                } else {
                    let whole = pow(a.clone(), b.clone());
                    mul(
                        whole,
                        add(
                            mul(b.diff(), call(Func::Log, a.clone())),
                            div(mul(b, a.diff()), a),
                        ),
                    )
                }
            }
            Node::Call(f, a) => {
                let inner = (**a).clone();
                let da = inner.diff();
                if da == num(0.0) {
                    return num(0.0);
                }
                let outer = match f {
                    Func::Sin => call(Func::Cos, inner),
                    Func::Cos => neg(call(Func::Sin, inner)),
                    Func::Tan => {
                        let t = call(Func::Tan, inner);
                        add(num(1.0), mul(t.clone(), t))
                    }
                    Func::Exp => call(Func::Exp, inner),
                    Func::Log => div(num(1.0), inner),
                    Func::Sqrt => div(num(0.5), call(Func::Sqrt, inner)),
                    Func::Abs => call(Func::Sign, inner),
                    Func::Tanh => {
                        let t = call(Func::Tanh, inner);
                        sub(num(1.0), mul(t.clone(), t))
                    }
                    Func::Sinh => call(Func::Cosh, inner),
                    Func::Cosh => call(Func::Sinh, inner),
                    Func::Sign => num(0.0),
                };
                mul(outer, da)
            }
            Node::Select(s) => select(s[0].clone(), s[1].clone(), s[2].diff(), s[3].diff()),
            Node::Table(tab, a) => mul(Node::TableSlope(tab.clone(), a.clone()), a.diff()),
            Node::TableSlope(..) => num(0.0),
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(v) => write!(f, "{v}"),
            Node::Var(Var::T) => write!(f, "t"),
            Node::Var(Var::X) => write!(f, "x"),
            Node::Var(Var::Y) => write!(f, "y"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Sub(a, b) => write!(f, "({a} - {b})"),
            Node::Mul(a, b) => write!(f, "({a} * {b})"),
            Node::Div(a, b) => write!(f, "({a} / {b})"),
            Node::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
            Node::Select(s) => write!(f, "select({}, {}, {}, {})", s[0], s[1], s[2], s[3]),
            Node::Table(t, a) => write!(f, "{}({a})", t.name()),
            Node::TableSlope(t, a) => write!(f, "{}'({a})", t.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    tables: &'a Tables,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Expression {
            column: self.pos + 1,
            message: format!("{message} in `{}`", self.src),
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            self.skip_ws();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = add(lhs, self.term()?);
            } else if self.eat('-') {
                lhs = sub(lhs, self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = mul(lhs, self.unary()?);
            } else if self.eat('/') {
                lhs = div(lhs, self.unary()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(neg(self.unary()?));
        }
        if self.eat('+') {
            return self.unary();
        }
        let base = self.atom()?;
        if self.eat('^') {
            let e = self.unary()?;
            return Ok(pow(base, e));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => Err(self.error("unexpected end of expression")),
            Some('(') => {
                self.eat('(');
                let inner = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let rest = &self.src[self.pos..];
                let mut end = 0;
                let bytes = rest.as_bytes();
                while end < bytes.len() {
                    let b = bytes[end];
                    let exp_sign = (b == b'+' || b == b'-')
                        && end > 0
                        && matches!(bytes[end - 1], b'e' | b'E');
                    if b.is_ascii_digit() || b == b'.' || b == b'e' || b == b'E' || exp_sign {
                        end += 1;
                    } else {
                        break;
                    }
                }
                let v: f64 = rest[..end]
                    .parse()
                    .map_err(|_| self.error(&format!("bad number `{}`", &rest[..end])))?;
                self.pos += end;
                self.skip_ws();
                Ok(num(v))
            }
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                let rest = &self.src[self.pos..];
                let end = rest
                    .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                    .unwrap_or(rest.len());
                let name = &rest[..end];
                self.pos += end;
                self.skip_ws();
                if self.eat('(') {
                    let mut args = vec![self.expr()?];
                    while self.eat(',') {
                        args.push(self.expr()?);
                    }
                    if !self.eat(')') {
                        return Err(self.error("expected `)` after arguments"));
                    }
                    self.call(name, args, start)
                } else {
                    match name {
                        "t" => Ok(Node::Var(Var::T)),
                        "x" => Ok(Node::Var(Var::X)),
                        "y" => Ok(Node::Var(Var::Y)),
                        "pi" => Ok(num(std::f64::consts::PI)),
                        _ => {
                            self.pos = start;
                            Err(self.error(&format!("unknown name `{name}`")))
                        }
                    }
                }
            }
            Some(c) => Err(self.error(&format!("unexpected character `{c}`"))),
        }
    }

    fn call(&mut self, name: &str, mut args: Vec<Node>, start: usize) -> Result<Node> {
        let arity = |n: usize, this: &mut Self| -> Result<()> {
            if args.len() != n {
                this.pos = start;
                return Err(this.error(&format!("`{name}` takes {n} argument(s)")));
            }
            Ok(())
        };
        if let Some(f) = Func::lookup(name) {
            arity(1, self)?;
            return Ok(call(f, args.pop().expect("one argument")));
        }
        match name {
            "min" | "max" => {
                arity(2, self)?;
                let b = args.pop().expect("two arguments");
                let a = args.pop().expect("two arguments");
                Ok(if name == "min" {
                    select(a.clone(), b.clone(), a, b)
                } else {
                    select(a.clone(), b.clone(), b, a)
                })
            }
            _ => match self.tables.get(name) {
                Some(tab) => {
                    arity(1, self)?;
                    Ok(Node::Table(
                        tab.clone(),
                        Box::new(args.pop().expect("one argument")),
                    ))
                }
                None => {
                    self.pos = start;
                    Err(self.error(&format!("unknown function `{name}`")))
                }
            },
        }
    }
}
