//! Benchmark oracle registry.
//!
//! Equations are defined by a text formula over named variables with
//! per-variable bounds, compiled to an expression tree. Ground truth for a
//! run comes from evaluating that tree, so loading additional equations
//! (e.g. the rest of the Feynman symbolic-regression set) is a data change,
//! not a code change.
//!
//! Grammar, in precedence order: `+ -`, `* /`, unary minus, `^`
//! (right-associative), function calls `sqrt exp sin cos`, parentheses,
//! numeric literals and `pi`. Variable names are Unicode identifiers.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::data::{Bounds, Dataset, LabeledPoint};
use crate::model::Op;
use crate::rng::GeneticRng;

/// Expression tree over the grammar above.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Sqrt(Box<Expr>),
    Exp(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

impl Expr {
    pub fn eval(&self, inputs: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => inputs[*i],
            Expr::Neg(e) => -e.eval(inputs),
            Expr::Add(a, b) => a.eval(inputs) + b.eval(inputs),
            Expr::Sub(a, b) => a.eval(inputs) - b.eval(inputs),
            Expr::Mul(a, b) => a.eval(inputs) * b.eval(inputs),
            Expr::Div(a, b) => a.eval(inputs) / b.eval(inputs),
            Expr::Pow(a, b) => a.eval(inputs).powf(b.eval(inputs)),
            Expr::Sqrt(e) => e.eval(inputs).sqrt(),
            Expr::Exp(e) => e.eval(inputs).exp(),
            Expr::Sin(e) => e.eval(inputs).sin(),
            Expr::Cos(e) => e.eval(inputs).cos(),
        }
    }

    /// Renders with full parentheses; parsing the result reproduces the
    /// tree.
    pub fn render(&self, var_names: &[&str]) -> String {
        let mut out = String::new();
        self.render_into(&mut out, var_names);
        out
    }

    fn render_into(&self, out: &mut String, names: &[&str]) {
        match self {
            Expr::Const(c) => {
                // parenthesize negatives so they cannot bind as a negated
                // power when rendered into a `^` base
                if c.is_sign_negative() {
                    let _ = write!(out, "({c})");
                } else {
                    let _ = write!(out, "{c}");
                }
            }
            Expr::Var(i) => {
                let _ = write!(out, "{}", names.get(*i).copied().unwrap_or("?"));
            }
            Expr::Neg(e) => {
                out.push_str("(-");
                e.render_into(out, names);
                out.push(')');
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                let sym = match self {
                    Expr::Add(..) => " + ",
                    Expr::Sub(..) => " - ",
                    Expr::Mul(..) => " * ",
                    _ => " / ",
                };
                out.push('(');
                a.render_into(out, names);
                out.push_str(sym);
                b.render_into(out, names);
                out.push(')');
            }
            Expr::Pow(a, b) => {
                out.push('(');
                a.render_into(out, names);
                out.push('^');
                b.render_into(out, names);
                out.push(')');
            }
            Expr::Sqrt(e) | Expr::Exp(e) | Expr::Sin(e) | Expr::Cos(e) => {
                let f = match self {
                    Expr::Sqrt(..) => "sqrt",
                    Expr::Exp(..) => "exp",
                    Expr::Sin(..) => "sin",
                    _ => "cos",
                };
                out.push_str(f);
                out.push('(');
                e.render_into(out, names);
                out.push(')');
            }
        }
    }

    /// Variable indices referenced anywhere in the tree.
    pub fn variables_used(&self, seen: &mut Vec<usize>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(i) => {
                if !seen.contains(i) {
                    seen.push(*i);
                }
            }
            Expr::Neg(e) | Expr::Sqrt(e) | Expr::Exp(e) | Expr::Sin(e) | Expr::Cos(e) => {
                e.variables_used(seen)
            }
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => {
                a.variables_used(seen);
                b.variables_used(seen);
            }
        }
    }

    fn collect_required_ops(&self, ops: &mut Vec<Op>) {
        match self {
            Expr::Sin(e) => {
                if !ops.contains(&Op::Sin) {
                    ops.push(Op::Sin);
                }
                e.collect_required_ops(ops);
            }
            Expr::Cos(e) => {
                if !ops.contains(&Op::Cos) {
                    ops.push(Op::Cos);
                }
                e.collect_required_ops(ops);
            }
            Expr::Neg(e) | Expr::Sqrt(e) | Expr::Exp(e) => e.collect_required_ops(ops),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => {
                a.collect_required_ops(ops);
                b.collect_required_ops(ops);
            }
            _ => {}
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at offset {pos}: {found}")]
    Syntax { pos: usize, found: String },
    #[error("unknown identifier `{name}` at offset {pos}")]
    UnknownIdentifier { pos: usize, name: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok<'a> {
    Num(f64),
    Ident(&'a str),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Eof,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    /// Next token and its byte offset.
    fn next(&mut self) -> Result<(Tok<'a>, usize), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        if self.pos >= bytes.len() {
            return Ok((Tok::Eof, start));
        }
        let rest = &self.src[self.pos..];
        let c = rest.chars().next().unwrap();
        let simple = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = simple {
            self.pos += c.len_utf8();
            return Ok((tok, start));
        }
        if c.is_ascii_digit() || c == '.' {
            let mut end = self.pos;
            let mut seen_exp = false;
            while end < bytes.len() {
                let b = bytes[end] as char;
                if b.is_ascii_digit() || b == '.' {
                    end += 1;
                } else if (b == 'e' || b == 'E') && !seen_exp {
                    // exponent only when digits follow (possibly signed)
                    let mut peek = end + 1;
                    if peek < bytes.len() && (bytes[peek] == b'+' || bytes[peek] == b'-') {
                        peek += 1;
                    }
                    if peek < bytes.len() && bytes[peek].is_ascii_digit() {
                        seen_exp = true;
                        end = peek;
                    } else {
                        break;
                    }
                } else {
                    break;
                }
            }
            let text = &self.src[self.pos..end];
            let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                pos: start,
                found: format!("bad number `{text}`"),
            })?;
            self.pos = end;
            return Ok((Tok::Num(value), start));
        }
        if c.is_alphabetic() || c == '_' {
            let mut end = self.pos + c.len_utf8();
            for (off, ch) in rest.char_indices().skip(1) {
                if ch.is_alphanumeric() || ch == '_' {
                    end = self.pos + off + ch.len_utf8();
                } else {
                    break;
                }
            }
            let ident = &self.src[self.pos..end];
            self.pos = end;
            return Ok((Tok::Ident(ident), start));
        }
        Err(ParseError::Syntax {
            pos: start,
            found: format!("unexpected character `{c}`"),
        })
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    current: (Tok<'a>, usize),
    var_names: &'a [&'a str],
}

impl<'a> Parser<'a> {
    fn advance(&mut self) -> Result<(), ParseError> {
        self.current = self.lexer.next()?;
        Ok(())
    }

    fn parse_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_term()?;
        loop {
            match self.current.0 {
                Tok::Plus => {
                    self.advance()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.parse_term()?));
                }
                Tok::Minus => {
                    self.advance()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.parse_term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_unary()?;
        loop {
            match self.current.0 {
                Tok::Star => {
                    self.advance()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.parse_unary()?));
                }
                Tok::Slash => {
                    self.advance()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.parse_unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Expr, ParseError> {
        if self.current.0 == Tok::Minus {
            self.advance()?;
            let inner = self.parse_unary()?;
            // fold a negated literal into the constant
            return Ok(match inner {
                Expr::Const(c) => Expr::Const(-c),
                other => Expr::Neg(Box::new(other)),
            });
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expr, ParseError> {
        let base = self.parse_atom()?;
        if self.current.0 == Tok::Caret {
            self.advance()?;
            // exponent re-enters at unary so `x^-2` and `x^y^z` work;
            // right associativity falls out of the recursion
            let exponent = self.parse_unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Expr, ParseError> {
        let (tok, pos) = self.current;
        match tok {
            Tok::Num(v) => {
                self.advance()?;
                Ok(Expr::Const(v))
            }
            Tok::LParen => {
                self.advance()?;
                let inner = self.parse_expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.advance()?;
                if self.current.0 == Tok::LParen {
                    let func = match name {
                        "sqrt" => Expr::Sqrt as fn(Box<Expr>) -> Expr,
                        "exp" => Expr::Exp,
                        "sin" => Expr::Sin,
                        "cos" => Expr::Cos,
                        _ => {
                            return Err(ParseError::UnknownIdentifier {
                                pos,
                                name: name.to_string(),
                            })
                        }
                    };
                    self.advance()?;
                    let arg = self.parse_expr()?;
                    self.expect_rparen()?;
                    return Ok(func(Box::new(arg)));
                }
                if let Some(i) = self.var_names.iter().position(|v| *v == name) {
                    return Ok(Expr::Var(i));
                }
                if name == "pi" || name == "π" {
                    return Ok(Expr::Const(std::f64::consts::PI));
                }
                Err(ParseError::UnknownIdentifier {
                    pos,
                    name: name.to_string(),
                })
            }
            other => Err(ParseError::Syntax {
                pos,
                found: format!("{other:?}"),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if self.current.0 == Tok::RParen {
            self.advance()
        } else {
            Err(ParseError::Syntax {
                pos: self.current.1,
                found: "expected `)`".to_string(),
            })
        }
    }
}

/// Parses `src` over the given variable names.
pub fn parse_expression(src: &str, var_names: &[&str]) -> Result<Expr, ParseError> {
    let mut lexer = Lexer::new(src);
    let current = lexer.next()?;
    let mut parser = Parser {
        lexer,
        current,
        var_names,
    };
    let expr = parser.parse_expr()?;
    if parser.current.0 != Tok::Eof {
        return Err(ParseError::Syntax {
            pos: parser.current.1,
            found: "trailing input".to_string(),
        });
    }
    Ok(expr)
}

/// One benchmark variable with its sampling interval.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

/// A benchmark oracle: named, bounded variables and a ground-truth
/// expression.
#[derive(Debug, Clone, PartialEq)]
pub struct EquationSpec {
    pub id: u32,
    pub name: String,
    pub variables: Vec<VariableSpec>,
    pub expression: Expr,
    /// The formula text the expression was compiled from.
    pub source: String,
}

impl EquationSpec {
    fn build(
        id: u32,
        name: &str,
        variables: Vec<VariableSpec>,
        source: &str,
    ) -> Result<Self, ParseError> {
        let names: Vec<&str> = variables.iter().map(|v| v.name.as_str()).collect();
        let expression = parse_expression(source, &names)?;
        Ok(Self {
            id,
            name: name.to_string(),
            variables,
            expression,
            source: source.to_string(),
        })
    }

    pub fn eval(&self, inputs: &[f64]) -> f64 {
        self.expression.eval(inputs)
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::new(self.variables.iter().map(|v| (v.lo, v.hi)).collect())
    }

    pub fn var_names(&self) -> Vec<&str> {
        self.variables.iter().map(|v| v.name.as_str()).collect()
    }

    /// Operators beyond the default set that an exact rediscovery needs
    /// (currently the trig operators).
    pub fn required_operators(&self) -> Vec<Op> {
        let mut ops = Vec::new();
        self.expression.collect_required_ops(&mut ops);
        ops
    }
}

fn vars(specs: &[(&str, f64, f64)]) -> Vec<VariableSpec> {
    specs
        .iter()
        .map(|&(name, lo, hi)| VariableSpec {
            name: name.to_string(),
            lo,
            hi,
        })
        .collect()
}

/// The built-in equations: the benchmark formulas exercised by the test
/// suite plus two toy equations for smoke tests. Variables default to
/// `[1, 5]`; angle arguments use `[0, 5]`.
pub fn builtin_registry() -> Vec<EquationSpec> {
    let defs: Vec<EquationSpec> = vec![
        EquationSpec::build(
            1,
            "gaussian-unit",
            vars(&[("theta", 1.0, 5.0)]),
            "exp(-(theta^2)/2) / sqrt(2*pi)",
        )
        .unwrap(),
        EquationSpec::build(
            2,
            "gaussian-scaled",
            vars(&[("sigma", 1.0, 5.0), ("theta", 1.0, 5.0)]),
            "exp(-((theta/sigma)^2)/2) / (sqrt(2*pi)*sigma)",
        )
        .unwrap(),
        EquationSpec::build(
            3,
            "gaussian-shifted",
            vars(&[
                ("sigma", 1.0, 5.0),
                ("theta", 1.0, 5.0),
                ("theta1", 1.0, 5.0),
            ]),
            "exp(-(((theta-theta1)/sigma)^2)/2) / (sqrt(2*pi)*sigma)",
        )
        .unwrap(),
        EquationSpec::build(
            5,
            "newton-gravity",
            vars(&[
                ("m1", 1.0, 5.0),
                ("m2", 1.0, 5.0),
                ("G", 1.0, 5.0),
                ("x1", 1.0, 5.0),
                ("x2", 1.0, 5.0),
                ("y1", 1.0, 5.0),
                ("y2", 1.0, 5.0),
                ("z1", 1.0, 5.0),
                ("z2", 1.0, 5.0),
            ]),
            "G*m1*m2 / ((x2-x1)^2 + (y2-y1)^2 + (z2-z1)^2)",
        )
        .unwrap(),
        EquationSpec::build(
            14,
            "gravitational-potential",
            vars(&[
                ("m1", 1.0, 5.0),
                ("m2", 1.0, 5.0),
                ("r1", 1.0, 5.0),
                ("r2", 1.0, 5.0),
                ("G", 1.0, 5.0),
            ]),
            "G*m1*m2*(1/r2 - 1/r1)",
        )
        .unwrap(),
        EquationSpec::build(
            22,
            "torque",
            vars(&[("r", 1.0, 5.0), ("F", 1.0, 5.0), ("theta", 0.0, 5.0)]),
            "r*F*sin(theta)",
        )
        .unwrap(),
        EquationSpec::build(
            24,
            "oscillator-energy",
            vars(&[
                ("m", 1.0, 5.0),
                ("omega", 1.0, 5.0),
                ("omega1", 1.0, 5.0),
                ("x", 1.0, 5.0),
            ]),
            "1/4*m*x^2*(omega^2 + omega1^2)",
        )
        .unwrap(),
        EquationSpec::build(
            47,
            "thermal-conductivity",
            vars(&[
                ("gamma", 1.0, 5.0),
                ("k", 1.0, 5.0),
                ("v", 1.0, 5.0),
                ("A", 1.0, 5.0),
            ]),
            "k*v/(A*(gamma-1))",
        )
        .unwrap(),
        EquationSpec::build(901, "identity", vars(&[("x1", 1.0, 5.0)]), "x1").unwrap(),
        EquationSpec::build(
            902,
            "product",
            vars(&[("x1", 1.0, 5.0), ("x2", 1.0, 5.0)]),
            "x1*x2",
        )
        .unwrap(),
    ];
    defs
}

pub fn find_equation(registry: &[EquationSpec], id: u32) -> Option<&EquationSpec> {
    registry.iter().find(|e| e.id == id)
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error reading equation file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed row: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: variable `{var}` has lo >= hi")]
    InvalidBounds { line: usize, var: String },
    #[error("line {line}: duplicate equation id {id}")]
    DuplicateId { line: usize, id: u32 },
    #[error("line {line}: {source}")]
    Expression {
        line: usize,
        #[source]
        source: ParseError,
    },
}

/// Parses the equation CSV format: one row per equation,
/// `id,name,num_vars,{var_name,lo,hi}xnum_vars,expression`, `#` comment
/// lines, UTF-8. The expression is the final field and may not contain
/// commas (the grammar has none).
pub fn parse_equation_csv(text: &str) -> Result<Vec<EquationSpec>, IngestError> {
    let mut specs: Vec<EquationSpec> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() || row.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() < 4 {
            return Err(IngestError::Malformed {
                line,
                reason: "expected id,name,num_vars,...,expression".to_string(),
            });
        }
        let id: u32 = fields[0].parse().map_err(|_| IngestError::Malformed {
            line,
            reason: format!("bad id `{}`", fields[0]),
        })?;
        let name = fields[1].to_string();
        let num_vars: usize = fields[2].parse().map_err(|_| IngestError::Malformed {
            line,
            reason: format!("bad variable count `{}`", fields[2]),
        })?;
        let expected = 3 + 3 * num_vars + 1;
        if fields.len() != expected {
            return Err(IngestError::Malformed {
                line,
                reason: format!("expected {expected} fields, found {}", fields.len()),
            });
        }
        let mut variables = Vec::with_capacity(num_vars);
        for v in 0..num_vars {
            let base = 3 + 3 * v;
            let var_name = fields[base].to_string();
            let lo: f64 = fields[base + 1].parse().map_err(|_| IngestError::Malformed {
                line,
                reason: format!("bad bound `{}`", fields[base + 1]),
            })?;
            let hi: f64 = fields[base + 2].parse().map_err(|_| IngestError::Malformed {
                line,
                reason: format!("bad bound `{}`", fields[base + 2]),
            })?;
            if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                return Err(IngestError::InvalidBounds {
                    line,
                    var: var_name,
                });
            }
            variables.push(VariableSpec {
                name: var_name,
                lo,
                hi,
            });
        }
        if specs.iter().any(|s| s.id == id) {
            return Err(IngestError::DuplicateId { line, id });
        }
        let source = fields[expected - 1];
        let spec = EquationSpec::build(id, &name, variables, source)
            .map_err(|source| IngestError::Expression { line, source })?;
        specs.push(spec);
    }
    Ok(specs)
}

/// Reads and parses an equation CSV file.
pub fn ingest_equation_file(path: &Path) -> Result<Vec<EquationSpec>, IngestError> {
    let text = std::fs::read_to_string(path)?;
    parse_equation_csv(&text)
}

/// Appends ingested specs to a registry, rejecting ids that already exist.
pub fn extend_registry(
    registry: &mut Vec<EquationSpec>,
    extra: Vec<EquationSpec>,
) -> Result<(), IngestError> {
    for spec in extra {
        if registry.iter().any(|e| e.id == spec.id) {
            return Err(IngestError::DuplicateId { line: 0, id: spec.id });
        }
        registry.push(spec);
    }
    Ok(())
}

#[derive(Debug, Error)]
#[error("oracle for equation {equation_id} returned non-finite values after {attempts} attempts")]
pub struct OracleError {
    pub equation_id: u32,
    pub attempts: usize,
}

/// Samples `n` points uniformly in the equation's box, labeled by the
/// oracle. Points where the oracle is non-finite are redrawn, up to 100
/// attempts each.
pub fn sample_uniform(
    eq: &EquationSpec,
    n: usize,
    rng: &mut GeneticRng,
) -> Result<Dataset, OracleError> {
    let bounds = eq.bounds();
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        points.push(sample_one(eq, &bounds, rng)?);
    }
    Ok(Dataset::new(points))
}

/// One labeled point, redrawing non-finite oracle evaluations.
pub fn sample_one(
    eq: &EquationSpec,
    bounds: &Bounds,
    rng: &mut GeneticRng,
) -> Result<LabeledPoint, OracleError> {
    const ATTEMPTS: usize = 100;
    for _ in 0..ATTEMPTS {
        let inputs = bounds.sample(rng);
        let response = eq.eval(&inputs);
        if response.is_finite() {
            return Ok(LabeledPoint::new(inputs, response));
        }
    }
    Err(OracleError {
        equation_id: eq.id,
        attempts: ATTEMPTS,
    })
}

/// Labels a caller-chosen point, falling back to uniform redraws when the
/// oracle is non-finite there.
pub fn label_point(
    eq: &EquationSpec,
    inputs: Vec<f64>,
    bounds: &Bounds,
    rng: &mut GeneticRng,
) -> Result<LabeledPoint, OracleError> {
    let response = eq.eval(&inputs);
    if response.is_finite() {
        return Ok(LabeledPoint::new(inputs, response));
    }
    sample_one(eq, bounds, rng)
}
