//! Dual-stack program representation and its evaluation semantics.
//!
//! A model is two aligned stacks: an operator stack that drives execution
//! and an operand stack holding variables and constants. Evaluation walks
//! the operator stack from the top; each operator takes as many values as
//! its arity from the front of a working queue seeded with the operand
//! stack, and appends its result at the back. The value most recently
//! produced is the model output. `Pop` discards the front value instead of
//! computing anything.
//!
//! Two properties follow from this discipline and are relied on elsewhere:
//! evaluation is pure and deterministic, and an operator that cannot find
//! enough values is skipped rather than failing, so every pair of stacks is
//! a runnable program. Non-finite intermediates (division by zero, square
//! roots of negatives, overflow) invalidate the whole evaluation; callers
//! map that to worst fitness.

use crate::data::Dataset;
use crate::stats;

/// Training-side tolerance of the solved check: `1 - R^2` after affine
/// alignment must fall below this on the training set.
pub const SOLVE_TRAIN_LOSS: f64 = 1e-9;
/// Test-side tolerance of the solved check: maximum relative error over the
/// held-out points.
pub const SOLVE_TEST_REL_ERR: f64 = 1e-6;
/// Absolute error bound used instead of the relative one where the true
/// response is smaller than [`SMALL_RESPONSE`].
pub const SOLVE_TEST_ABS_ERR: f64 = 1e-9;
/// Threshold below which responses are compared absolutely.
pub const SMALL_RESPONSE: f64 = 1e-3;

/// Operators a model may carry. `Pop` is the only non-math entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Exp,
    Sqrt,
    Inverse,
    Squared,
    Pop,
    Sin,
    Cos,
}

impl Op {
    /// Number of working-queue values the operator consumes.
    pub fn arity(self) -> usize {
        match self {
            Op::Add | Op::Sub | Op::Mul | Op::Div => 2,
            _ => 1,
        }
    }

    /// The default operator set: the four arithmetic operators, `Exp`,
    /// `Sqrt`, `Inverse`, `Squared`, and `Pop`.
    pub fn default_set() -> Vec<Op> {
        vec![
            Op::Add,
            Op::Sub,
            Op::Mul,
            Op::Div,
            Op::Exp,
            Op::Sqrt,
            Op::Inverse,
            Op::Squared,
            Op::Pop,
        ]
    }

    /// Default set plus the trigonometric operators.
    pub fn default_set_with_trig() -> Vec<Op> {
        let mut set = Op::default_set();
        set.push(Op::Sin);
        set.push(Op::Cos);
        set
    }

    pub fn name(self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Exp => "exp",
            Op::Sqrt => "sqrt",
            Op::Inverse => "inverse",
            Op::Squared => "squared",
            Op::Pop => "pop",
            Op::Sin => "sin",
            Op::Cos => "cos",
        }
    }
}

/// Operand-stack entry: an input slot or a literal constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Operand {
    Var(usize),
    Const(f64),
}

/// A program as two aligned stacks. Index 0 is the top of each stack: the
/// first operator executed, the first operand consumed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StackModel {
    pub ops: Vec<Op>,
    pub operands: Vec<Operand>,
}

impl StackModel {
    pub fn new(ops: Vec<Op>, operands: Vec<Operand>) -> Self {
        Self { ops, operands }
    }

    /// Combined stack length, the complexity objective.
    pub fn complexity(&self) -> usize {
        self.ops.len() + self.operands.len()
    }

    /// Hash of the exact stack contents (constants by bit pattern), for
    /// cheap structural deduplication and memoization.
    pub fn structural_hash(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.ops.hash(&mut h);
        for operand in &self.operands {
            match operand {
                Operand::Var(i) => (0u8, *i as u64).hash(&mut h),
                Operand::Const(c) => (1u8, c.to_bits()).hash(&mut h),
            }
        }
        h.finish()
    }

    /// Runs the model on one input vector. `None` when the evaluation is
    /// invalid: a non-finite value appeared, a variable index has no input,
    /// or nothing is left on the working queue at the end.
    pub fn evaluate(&self, inputs: &[f64]) -> Option<f64> {
        let mut scratch = Vec::new();
        self.evaluate_with(inputs, &mut scratch)
    }

    /// Same as [`evaluate`](Self::evaluate) with a caller-owned scratch
    /// buffer, for hot loops that score many points.
    pub fn evaluate_with(&self, inputs: &[f64], scratch: &mut Vec<f64>) -> Option<f64> {
        run_program(
            &self.ops,
            &self.operands,
            scratch,
            |operand| match *operand {
                Operand::Var(i) => inputs.get(i).copied().filter(|v| v.is_finite()),
                Operand::Const(c) => c.is_finite().then_some(c),
            },
            |op, x| {
                let v = match op {
                    Op::Exp => x.exp(),
                    Op::Sqrt => x.sqrt(),
                    Op::Inverse => 1.0 / x,
                    Op::Squared => x * x,
                    Op::Sin => x.sin(),
                    Op::Cos => x.cos(),
                    _ => unreachable!("unary apply got {op:?}"),
                };
                v.is_finite().then_some(v)
            },
            |op, a, b| {
                let v = match op {
                    Op::Add => a + b,
                    Op::Sub => a - b,
                    Op::Mul => a * b,
                    Op::Div => a / b,
                    _ => unreachable!("binary apply got {op:?}"),
                };
                v.is_finite().then_some(v)
            },
        )
    }

    /// Renders the model as a fully parenthesized infix expression over the
    /// given variable names. The string parses under the equation-expression
    /// grammar and evaluates identically to [`evaluate`](Self::evaluate)
    /// wherever that is valid. Models that leave nothing on the working
    /// queue render as `"<invalid>"`.
    pub fn render_infix(&self, var_names: &[&str]) -> String {
        let mut scratch = Vec::new();
        let rendered = run_program(
            &self.ops,
            &self.operands,
            &mut scratch,
            |operand| {
                Some(match *operand {
                    Operand::Var(i) => var_names
                        .get(i)
                        .map_or_else(|| format!("x{i}"), |n| n.to_string()),
                    // negative literals take parens so `(c^2)` cannot
                    // reparse as a negated power
                    Operand::Const(c) if c.is_sign_negative() => format!("({c})"),
                    Operand::Const(c) => format!("{c}"),
                })
            },
            |op, x| {
                Some(match op {
                    Op::Exp => format!("exp({x})"),
                    Op::Sqrt => format!("sqrt({x})"),
                    Op::Inverse => format!("(1 / {x})"),
                    Op::Squared => format!("({x}^2)"),
                    Op::Sin => format!("sin({x})"),
                    Op::Cos => format!("cos({x})"),
                    _ => unreachable!(),
                })
            },
            |op, a, b| {
                let sym = match op {
                    Op::Add => "+",
                    Op::Sub => "-",
                    Op::Mul => "*",
                    Op::Div => "/",
                    _ => unreachable!(),
                };
                Some(format!("({a} {sym} {b})"))
            },
        );
        rendered.unwrap_or_else(|| "<invalid>".to_string())
    }
}

/// Executes the queue discipline generically; shared by numeric evaluation
/// and infix rendering so the two can never drift apart.
///
/// Values are taken from the front of the queue and results appended at the
/// back. The output is the value left at the back, i.e. the most recent
/// result; when no operator produced a result the front value (the top of
/// the operand stack) is returned. `None` means invalid: a closure rejected
/// a value or the queue ended empty.
fn run_program<T>(
    ops: &[Op],
    operands: &[Operand],
    queue: &mut Vec<T>,
    mut leaf: impl FnMut(&Operand) -> Option<T>,
    mut apply_unary: impl FnMut(Op, T) -> Option<T>,
    mut apply_binary: impl FnMut(Op, T, T) -> Option<T>,
) -> Option<T>
where
    T: Clone,
{
    queue.clear();
    for operand in operands {
        queue.push(leaf(operand)?);
    }
    // `head` is the logical front; pushes only ever append, so a plain Vec
    // with a cursor implements the queue without wraparound.
    let mut head = 0usize;
    let mut produced = false;
    for &op in ops {
        let available = queue.len() - head;
        let arity = op.arity();
        if available < arity {
            continue; // skip: not enough operands
        }
        match op {
            Op::Pop => {
                head += 1;
            }
            _ if arity == 1 => {
                let x = queue[head].clone();
                head += 1;
                let v = apply_unary(op, x)?;
                queue.push(v);
                produced = true;
            }
            _ => {
                let a = queue[head].clone();
                let b = queue[head + 1].clone();
                head += 2;
                let v = apply_binary(op, a, b)?;
                queue.push(v);
                produced = true;
            }
        }
    }
    if head >= queue.len() {
        return None; // nothing left
    }
    let idx = if produced { queue.len() - 1 } else { head };
    Some(queue[idx].clone())
}

/// Decides whether `model` reproduces the data exactly: after least-squares
/// affine alignment on `train`, the training loss must fall below
/// [`SOLVE_TRAIN_LOSS`] and every held-out point must match within
/// [`SOLVE_TEST_REL_ERR`] relative (absolute [`SOLVE_TEST_ABS_ERR`] where
/// the response is near zero). Any invalid evaluation fails the check.
pub fn is_solved(model: &StackModel, train: &Dataset, test: &Dataset) -> bool {
    if train.is_empty() || test.is_empty() {
        return false;
    }
    let mut scratch = Vec::new();
    let mut outputs = Vec::with_capacity(train.len());
    for p in &train.points {
        match model.evaluate_with(&p.inputs, &mut scratch) {
            Some(v) => outputs.push(v),
            None => return false,
        }
    }
    let responses: Vec<f64> = train.responses().collect();
    let Some((a, b)) = stats::affine_fit(&outputs, &responses) else {
        return false;
    };
    let ss_tot: f64 = {
        let mean = stats::mean(&responses);
        responses.iter().map(|y| (y - mean) * (y - mean)).sum()
    };
    if ss_tot <= 0.0 {
        return false;
    }
    let ss_res: f64 = outputs
        .iter()
        .zip(&responses)
        .map(|(&m, &y)| {
            let r = a * m + b - y;
            r * r
        })
        .sum();
    if ss_res / ss_tot >= SOLVE_TRAIN_LOSS {
        return false;
    }
    match test_error(model, a, b, test) {
        Some(err) => err < SOLVE_TEST_REL_ERR,
        None => false,
    }
}

/// Maximum test-set error of the aligned model `a*m(x) + b`, in the units
/// of the solved check: relative error per point, with responses below
/// [`SMALL_RESPONSE`] measured absolutely and rescaled so a single
/// threshold of [`SOLVE_TEST_REL_ERR`] applies everywhere. `None` when the
/// model is invalid on some test point.
pub fn test_error(model: &StackModel, a: f64, b: f64, test: &Dataset) -> Option<f64> {
    let mut scratch = Vec::new();
    let mut worst = 0.0f64;
    for p in &test.points {
        let m = model.evaluate_with(&p.inputs, &mut scratch)?;
        let predicted = a * m + b;
        let diff = (predicted - p.response).abs();
        let measure = if p.response.abs() < SMALL_RESPONSE {
            diff * (SOLVE_TEST_REL_ERR / SOLVE_TEST_ABS_ERR)
        } else {
            diff / p.response.abs()
        };
        worst = worst.max(measure);
    }
    Some(worst)
}
