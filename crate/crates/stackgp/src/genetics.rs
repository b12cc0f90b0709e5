//! Variation operators: random spawning, the six mutation types, and
//! two-point stack crossover.
//!
//! All operators are pure with respect to their parents and draw every
//! random choice from the caller's [`GeneticRng`], so a breeding pipeline
//! replays identically under a fixed seed.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::{Op, Operand, StackModel};
use crate::rng::GeneticRng;

/// Parameters for random model generation.
#[derive(Debug, Clone)]
pub struct SpawnConfig {
    /// Upper bound on a fresh model's operator-stack length.
    pub max_ops: usize,
    /// Operators available to spawning and mutation.
    pub ops: Vec<Op>,
    /// Number of input variables models may reference.
    pub num_vars: usize,
    /// Probability that a fresh operand is a variable rather than a constant.
    pub var_probability: f64,
    /// Probability that a fresh constant is drawn log-uniform in magnitude
    /// from `[1e-2, 1e2]` instead of standard normal.
    pub heavy_const_probability: f64,
    /// Sigma of the multiplicative log-normal perturbation applied when a
    /// constant point-mutates into another constant.
    pub const_perturb_sigma: f64,
}

impl SpawnConfig {
    pub fn new(num_vars: usize, ops: Vec<Op>) -> Self {
        assert!(!ops.is_empty(), "operator whitelist must be nonempty");
        Self {
            max_ops: 10,
            ops,
            num_vars,
            var_probability: 0.7,
            heavy_const_probability: 0.1,
            const_perturb_sigma: 0.3,
        }
    }
}

/// Number of operand-stack entries an operator stack consumes when no
/// operator is skipped: the running maximum of (arities seen so far minus
/// results produced before), never less than 1.
pub fn operand_demand(ops: &[Op]) -> usize {
    let mut demand: i64 = 0;
    let mut arity_sum: i64 = 0;
    let mut pushed: i64 = 0;
    for &op in ops {
        arity_sum += op.arity() as i64;
        demand = demand.max(arity_sum - pushed);
        if op != Op::Pop {
            pushed += 1;
        }
    }
    demand.max(1) as usize
}

/// Operand-stack entries consumed by the first `op_count` operators of
/// `ops`, given `total_operands` available. Operand consumption is
/// front-to-back, so any contiguous leading run of operators consumes a
/// contiguous leading run of operands.
fn operand_prefix(ops: &[Op], op_count: usize, total_operands: usize) -> usize {
    let arity_sum: usize = ops[..op_count].iter().map(|op| op.arity()).sum();
    arity_sum.min(total_operands)
}

fn random_op(cfg: &SpawnConfig, rng: &mut GeneticRng) -> Op {
    *cfg.ops.choose(rng).expect("nonempty whitelist")
}

fn random_constant(cfg: &SpawnConfig, rng: &mut GeneticRng) -> f64 {
    if rng.gen::<f64>() < cfg.heavy_const_probability {
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let exp = rng.gen_range(-2.0..2.0);
        sign * 10f64.powf(exp)
    } else {
        StandardNormal.sample(rng)
    }
}

fn random_operand(cfg: &SpawnConfig, rng: &mut GeneticRng) -> Operand {
    if cfg.num_vars > 0 && rng.gen::<f64>() < cfg.var_probability {
        Operand::Var(rng.gen_range(0..cfg.num_vars))
    } else {
        Operand::Const(random_constant(cfg, rng))
    }
}

/// Fresh random model: operator stack of uniform length in
/// `[1, cfg.max_ops]`, operand stack sized to the stack's operand demand.
pub fn spawn_random(cfg: &SpawnConfig, rng: &mut GeneticRng) -> StackModel {
    let len = rng.gen_range(1..=cfg.max_ops);
    let ops: Vec<Op> = (0..len).map(|_| random_op(cfg, rng)).collect();
    let demand = operand_demand(&ops);
    let operands = (0..demand).map(|_| random_operand(cfg, rng)).collect();
    StackModel::new(ops, operands)
}

/// The six mutation types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MutationKind {
    /// Replace one operand with a fresh one; constants drift
    /// multiplicatively instead of being redrawn.
    OperandPoint,
    /// Replace one operator with a random whitelisted operator.
    OperatorPoint,
    /// Push 1-3 new operators plus the operands they demand onto the tops
    /// of both stacks.
    PushTop,
    /// Trim 1-3 operators off the bottom of the operator stack along with
    /// the operands they would consume.
    TrimBottom,
    /// Push 1-3 new operands onto the bottom of the operand stack.
    PushBottomOperands,
    /// Insert one random operator at a random position.
    InsertOperator,
}

const MUTATION_KINDS: [MutationKind; 6] = [
    MutationKind::OperandPoint,
    MutationKind::OperatorPoint,
    MutationKind::PushTop,
    MutationKind::TrimBottom,
    MutationKind::PushBottomOperands,
    MutationKind::InsertOperator,
];

/// Applies exactly one mutation, drawn uniformly from the six types.
/// Mutations that would empty a stack return a fresh random model instead.
pub fn mutate(parent: &StackModel, cfg: &SpawnConfig, rng: &mut GeneticRng) -> StackModel {
    mutate_with_kind(parent, cfg, rng).0
}

/// Like [`mutate`], also reporting which type was drawn.
pub fn mutate_with_kind(
    parent: &StackModel,
    cfg: &SpawnConfig,
    rng: &mut GeneticRng,
) -> (StackModel, MutationKind) {
    let kind = MUTATION_KINDS[rng.gen_range(0..MUTATION_KINDS.len())];
    if parent.ops.is_empty() || parent.operands.is_empty() {
        return (spawn_random(cfg, rng), kind);
    }
    let child = match kind {
        MutationKind::OperandPoint => {
            let mut child = parent.clone();
            let idx = rng.gen_range(0..child.operands.len());
            let fresh = random_operand(cfg, rng);
            child.operands[idx] = match (child.operands[idx], fresh) {
                (Operand::Const(old), Operand::Const(_)) => {
                    let z: f64 = StandardNormal.sample(rng);
                    Operand::Const(old * (z * cfg.const_perturb_sigma).exp())
                }
                (_, fresh) => fresh,
            };
            child
        }
        MutationKind::OperatorPoint => {
            let mut child = parent.clone();
            let idx = rng.gen_range(0..child.ops.len());
            child.ops[idx] = random_op(cfg, rng);
            child
        }
        MutationKind::PushTop => {
            let count = rng.gen_range(1..=3);
            let new_ops: Vec<Op> = (0..count).map(|_| random_op(cfg, rng)).collect();
            let demand = operand_demand(&new_ops);
            let new_operands: Vec<Operand> =
                (0..demand).map(|_| random_operand(cfg, rng)).collect();
            let mut ops = new_ops;
            ops.extend(&parent.ops);
            let mut operands = new_operands;
            operands.extend(&parent.operands);
            StackModel::new(ops, operands)
        }
        MutationKind::TrimBottom => {
            let count = rng.gen_range(1..=3usize);
            if count >= parent.ops.len() {
                return (spawn_random(cfg, rng), kind);
            }
            let keep = parent.ops.len() - count;
            let operand_keep = operand_prefix(&parent.ops, keep, parent.operands.len());
            let consumed_end = operand_prefix(&parent.ops, parent.ops.len(), parent.operands.len());
            let mut operands = parent.operands[..operand_keep].to_vec();
            operands.extend(&parent.operands[consumed_end..]);
            if operands.is_empty() {
                return (spawn_random(cfg, rng), kind);
            }
            StackModel::new(parent.ops[..keep].to_vec(), operands)
        }
        MutationKind::PushBottomOperands => {
            let count = rng.gen_range(1..=3);
            let mut child = parent.clone();
            for _ in 0..count {
                child.operands.push(random_operand(cfg, rng));
            }
            child
        }
        MutationKind::InsertOperator => {
            let mut child = parent.clone();
            let idx = rng.gen_range(0..=child.ops.len());
            child.ops.insert(idx, random_op(cfg, rng));
            child
        }
    };
    (child, kind)
}

/// Two-point stack crossover: replaces a segment of `a`'s operator stack
/// with a segment of `b`'s, splicing the operand runs each segment
/// consumes. Cut indices are drawn independently on both parents; when both
/// segments are empty the child is a clone of `a`.
pub fn crossover(a: &StackModel, b: &StackModel, rng: &mut GeneticRng) -> StackModel {
    let (i, j) = ordered_cuts(a.ops.len(), rng);
    let (k, l) = ordered_cuts(b.ops.len(), rng);
    crossover_at(a, b, i, j, k, l)
}

/// Crossover with explicit cut indices `i <= j` on `a` and `k <= l` on `b`.
pub fn crossover_at(
    a: &StackModel,
    b: &StackModel,
    i: usize,
    j: usize,
    k: usize,
    l: usize,
) -> StackModel {
    assert!(i <= j && j <= a.ops.len());
    assert!(k <= l && l <= b.ops.len());
    if i == j && k == l {
        return a.clone();
    }
    let pa_i = operand_prefix(&a.ops, i, a.operands.len());
    let pa_j = operand_prefix(&a.ops, j, a.operands.len());
    let pb_k = operand_prefix(&b.ops, k, b.operands.len());
    let pb_l = operand_prefix(&b.ops, l, b.operands.len());

    let mut ops = a.ops[..i].to_vec();
    ops.extend(&b.ops[k..l]);
    ops.extend(&a.ops[j..]);
    let mut operands = a.operands[..pa_i].to_vec();
    operands.extend(&b.operands[pb_k..pb_l]);
    operands.extend(&a.operands[pa_j..]);

    if ops.is_empty() || operands.is_empty() {
        return a.clone();
    }
    StackModel::new(ops, operands)
}

fn ordered_cuts(len: usize, rng: &mut GeneticRng) -> (usize, usize) {
    let a = rng.gen_range(0..=len);
    let b = rng.gen_range(0..=len);
    (a.min(b), a.max(b))
}
