//! Tree-based evolutionary search over expressions for one ensemble member.
//!
//! The search is generational with single-member elitism, tournament
//! selection, subtree crossover and four kinds of point mutation. A tenth of
//! every generation is replaced by fresh random immigrants, and an offspring
//! that duplicates a member already placed in the new generation is replaced
//! by a random expression.
//!
//! The evaluation budget counts candidate evaluations, so a population of
//! `P` runs for `ceil(budget / P)` generations. Each slot of each generation
//! draws from its own random stream keyed by `(seed, generation, slot)`,
//! which keeps results identical for any number of worker threads.

use std::cmp::Ordering;
use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{BinaryOp, Expression, Node, TextFormat, UnaryOp};
use crate::objective::{total_loss, LossBreakdown, TrainingContext};
use crate::rng::{stream, StreamRng};

/// Share of leaves that are features rather than constants.
const FEATURE_LEAF_PROB: f64 = 0.7;
/// Share of operator nodes that are binary.
const BINARY_OP_PROB: f64 = 0.7;
/// Chance that an interior position of a fresh tree becomes a leaf early.
const EARLY_LEAF_PROB: f64 = 0.3;
/// Height cap for fresh trees and replacement subtrees.
const FRESH_HEIGHT: usize = 4;
const CONSTANT_SIGMA: f64 = 0.2;
const IMMIGRANT_SHARE: usize = 10;
const CROSSOVER_RETRIES: usize = 10;
const DEDUP_RETRIES: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvolveError {
    #[error("invalid evolution config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    /// Total number of candidate evaluations.
    pub evaluations: usize,
    pub population_size: usize,
    pub tournament_size: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub max_depth: usize,
    pub constant_range: (f64, f64),
    pub seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            evaluations: 30_000,
            population_size: 100,
            tournament_size: 3,
            crossover_prob: 0.5,
            mutation_prob: 0.4,
            max_depth: 10,
            constant_range: (-5.0, 5.0),
            seed: 0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolveError> {
        let bad = |m: &str| Err(EvolveError::InvalidConfig(m.to_string()));
        if self.evaluations == 0 {
            return bad("evaluation budget must be positive");
        }
        if self.population_size == 0 {
            return bad("population size must be positive");
        }
        if self.tournament_size < 2 {
            return bad("tournament size must be at least 2");
        }
        let p_ok = |p: f64| (0.0..=1.0).contains(&p);
        if !p_ok(self.crossover_prob) || !p_ok(self.mutation_prob) {
            return bad("probabilities must lie in [0, 1]");
        }
        if self.crossover_prob + self.mutation_prob > 1.0 + 1e-12 {
            return bad("crossover_prob + mutation_prob must not exceed 1");
        }
        let (lo, hi) = self.constant_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad("constant range must be a finite interval");
        }
        Ok(())
    }

    /// Number of generations needed to spend the evaluation budget.
    pub fn generations(&self) -> usize {
        self.evaluations.div_ceil(self.population_size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionResult {
    pub best: Expression,
    pub best_loss: LossBreakdown,
    /// Best total loss seen so far, one entry per generation.
    pub loss_trace: Vec<f64>,
    pub evaluations: usize,
}

fn random_leaf<R: Rng + ?Sized>(dimension: usize, constant_range: (f64, f64), rng: &mut R) -> Node {
    if rng.random_bool(FEATURE_LEAF_PROB) {
        Node::Feature(rng.random_range(0..dimension))
    } else {
        random_leaf_constant(constant_range, rng)
    }
}

fn grow<R: Rng + ?Sized>(height: usize, dimension: usize, constant_range: (f64, f64), root: bool, rng: &mut R) -> Node {
    if height == 0 || (!root && rng.random_bool(EARLY_LEAF_PROB)) {
        return random_leaf(dimension, constant_range, rng);
    }
    if rng.random_bool(BINARY_OP_PROB) {
        let op = BinaryOp::ALL[rng.random_range(0..BinaryOp::ALL.len())];
        let a = grow(height - 1, dimension, constant_range, false, rng);
        let b = grow(height - 1, dimension, constant_range, false, rng);
        Node::binary(op, a, b)
    } else {
        let op = UnaryOp::ALL[rng.random_range(0..UnaryOp::ALL.len())];
        Node::unary(op, grow(height - 1, dimension, constant_range, false, rng))
    }
}

fn random_node<R: Rng + ?Sized>(dimension: usize, max_height: usize, constant_range: (f64, f64), rng: &mut R) -> Node {
    let cap = max_height.min(FRESH_HEIGHT);
    let target = rng.random_range(0..=cap);
    grow(target, dimension, constant_range, true, rng)
}

/// Draws a random tree of height at most `min(max_depth, 4)`.
pub fn random_expression<R: Rng + ?Sized>(
    dimension: usize,
    max_depth: usize,
    constant_range: (f64, f64),
    rng: &mut R,
) -> Expression {
    assert!(dimension >= 1, "dimension must be at least 1");
    Expression::new(random_node(dimension, max_depth, constant_range, rng), dimension)
        .expect("generated trees only reference valid features and finite constants")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MutationKind {
    Subtree,
    OperatorSwap,
    ConstantPerturbation,
    LeafRetarget,
}

const MUTATIONS: [MutationKind; 4] =
    [MutationKind::Subtree, MutationKind::OperatorSwap, MutationKind::ConstantPerturbation, MutationKind::LeafRetarget];

fn indices_where(root: &Node, pred: impl Fn(&Node) -> bool) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = 0;
    root.visit(&mut |n| {
        if pred(n) {
            out.push(i);
        }
        i += 1;
    });
    out
}

fn perturb_constant<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    let lognormal = LogNormal::new(0.0, CONSTANT_SIGMA).expect("valid sigma");
    for _ in 0..16 {
        // multiplicative moves cannot leave zero
        let next = if c == 0.0 {
            Normal::new(0.0, CONSTANT_SIGMA).expect("valid sigma").sample(rng)
        } else {
            c * lognormal.sample(rng)
        };
        if next.is_finite() && next != c {
            return next;
        }
    }
    // a run of identical draws is astronomically unlikely; nudge deterministically
    if c == 0.0 {
        CONSTANT_SIGMA
    } else {
        c * (1.0 + CONSTANT_SIGMA)
    }
}

fn apply_mutation<R: Rng + ?Sized>(
    kind: MutationKind,
    root: &Node,
    dimension: usize,
    config: &EvolutionConfig,
    rng: &mut R,
) -> Option<Node> {
    let mut out = root.clone();
    match kind {
        MutationKind::Subtree => {
            let at = rng.random_range(0..root.size());
            let depth = root.depth_of(at).expect("index within tree");
            let room = config.max_depth.saturating_sub(depth);
            *out.get_mut(at).expect("index within tree") = random_node(dimension, room, config.constant_range, rng);
        }
        MutationKind::OperatorSwap => {
            let ops = indices_where(root, |n| !n.is_leaf());
            let at = *ops.get(rng.random_range(0..ops.len().max(1)))?;
            match out.get_mut(at).expect("index within tree") {
                Node::Unary(op, _) => {
                    let others: Vec<_> = UnaryOp::ALL.iter().filter(|o| *o != op).collect();
                    *op = *others[rng.random_range(0..others.len())];
                }
                Node::Binary(op, _, _) => {
                    let others: Vec<_> = BinaryOp::ALL.iter().filter(|o| *o != op).collect();
                    *op = *others[rng.random_range(0..others.len())];
                }
                _ => unreachable!("selected an operator node"),
            }
        }
        MutationKind::ConstantPerturbation => {
            let consts = indices_where(root, |n| matches!(n, Node::Const(_)));
            let at = *consts.get(rng.random_range(0..consts.len().max(1)))?;
            if let Some(Node::Const(c)) = out.get_mut(at) {
                *c = perturb_constant(*c, rng);
            }
        }
        MutationKind::LeafRetarget => {
            let leaves = indices_where(root, Node::is_leaf);
            let at = leaves[rng.random_range(0..leaves.len())];
            let node = out.get_mut(at).expect("index within tree");
            *node = match *node {
                Node::Feature(i) if dimension > 1 => {
                    let j = rng.random_range(0..dimension - 1);
                    Node::Feature(if j >= i { j + 1 } else { j })
                }
                Node::Feature(_) => random_leaf_constant(config.constant_range, rng),
                _ => Node::Feature(rng.random_range(0..dimension)),
            };
        }
    }
    Some(out)
}

fn random_leaf_constant<R: Rng + ?Sized>(constant_range: (f64, f64), rng: &mut R) -> Node {
    let (lo, hi) = constant_range;
    Node::Const(if hi > lo { rng.random_range(lo..hi) } else { lo })
}

/// Applies one randomly chosen mutation. Kinds that do not apply to the
/// tree (no constants to perturb, no operator to swap) fall through to the
/// next kind in a random order.
pub fn mutate<R: Rng + ?Sized>(expr: &Expression, config: &EvolutionConfig, rng: &mut R) -> Expression {
    let start = rng.random_range(0..MUTATIONS.len());
    for k in 0..MUTATIONS.len() {
        let kind = MUTATIONS[(start + k) % MUTATIONS.len()];
        if let Some(root) = apply_mutation(kind, expr.root(), expr.dimension(), config, rng) {
            return Expression::new(root, expr.dimension()).expect("mutation preserves validity");
        }
    }
    unreachable!("subtree replacement always applies")
}

/// Replaces a uniformly chosen subtree of `a` with a uniformly chosen subtree
/// of `b`, retrying when the result would exceed the depth bound. Returns a
/// copy of `a` after ten failed attempts.
pub fn crossover<R: Rng + ?Sized>(a: &Expression, b: &Expression, config: &EvolutionConfig, rng: &mut R) -> Expression {
    assert_eq!(a.dimension(), b.dimension(), "crossover of different dimensions");
    for _ in 0..CROSSOVER_RETRIES {
        let at = rng.random_range(0..a.size());
        let from = rng.random_range(0..b.size());
        let donor = b.root().get(from).expect("index within tree");
        let depth = a.root().depth_of(at).expect("index within tree");
        if depth + donor.height() > config.max_depth {
            continue;
        }
        let mut root = a.root().clone();
        *root.get_mut(at).expect("index within tree") = donor.clone();
        return Expression::new(root, a.dimension()).expect("crossover preserves validity");
    }
    a.clone()
}

#[derive(Debug, Clone)]
struct Candidate {
    expr: Expression,
    loss: LossBreakdown,
    complexity: f64,
}

impl Candidate {
    /// Lower loss first; lower complexity breaks ties.
    fn rank(&self, other: &Candidate) -> Ordering {
        self.loss.total.total_cmp(&other.loss.total).then(self.complexity.total_cmp(&other.complexity))
    }
}

fn tournament<'a, R: Rng + ?Sized>(pop: &'a [Candidate], size: usize, rng: &mut R) -> &'a Candidate {
    let mut best = &pop[rng.random_range(0..pop.len())];
    let mut ties = 1u32;
    for _ in 1..size {
        let c = &pop[rng.random_range(0..pop.len())];
        match c.rank(best) {
            Ordering::Less => {
                best = c;
                ties = 1;
            }
            Ordering::Equal => {
                ties += 1;
                if rng.random_range(0..ties) == 0 {
                    best = c;
                }
            }
            Ordering::Greater => {}
        }
    }
    best
}

fn evaluate_all(exprs: Vec<Expression>, ctx: &TrainingContext) -> Vec<Candidate> {
    // keep tiny datasets from drowning in scheduling overhead
    let rows = ctx.train().nrows() + ctx.noise().nrows();
    let chunk = (8192 / rows.max(1)).max(1);
    exprs
        .into_par_iter()
        .with_min_len(chunk)
        .map(|expr| Candidate { loss: total_loss(&expr, ctx), complexity: expr.complexity(), expr })
        .collect()
}

fn slot_rng(seed: u64, generation: usize, slot: usize) -> StreamRng {
    stream(&[seed, generation as u64, slot as u64])
}

fn fresh_unique<R: Rng + ?Sized>(
    dimension: usize,
    config: &EvolutionConfig,
    seen: &HashSet<String>,
    rng: &mut R,
) -> Expression {
    let mut e = random_expression(dimension, config.max_depth, config.constant_range, rng);
    for _ in 0..DEDUP_RETRIES {
        if !seen.contains(&e.to_text(TextFormat::Sexpr)) {
            break;
        }
        e = random_expression(dimension, config.max_depth, config.constant_range, rng);
    }
    e
}

/// Minimizes the training loss of `ctx` over expressions.
pub fn evolve(ctx: &TrainingContext, config: &EvolutionConfig) -> Result<EvolutionResult, EvolveError> {
    config.validate()?;
    let dim = ctx.dimension();
    let size = config.population_size;
    let generations = config.generations();

    let mut seen = HashSet::new();
    let initial: Vec<Expression> = (0..size)
        .map(|slot| {
            let mut rng = slot_rng(config.seed, 0, slot);
            let e = fresh_unique(dim, config, &seen, &mut rng);
            seen.insert(e.to_text(TextFormat::Sexpr));
            e
        })
        .collect();
    let mut population = evaluate_all(initial, ctx);
    let mut evaluations = size;
    let mut best = population.iter().min_by(|a, b| a.rank(b)).expect("population is non-empty").clone();
    let mut loss_trace = Vec::with_capacity(generations);
    loss_trace.push(best.loss.total);

    let immigrants = if size > 1 { size / IMMIGRANT_SHARE } else { 0 };
    for generation in 1..generations {
        let mut seen = HashSet::with_capacity(size);
        seen.insert(best.expr.to_text(TextFormat::Sexpr));
        let mut offspring = Vec::with_capacity(size.saturating_sub(1));
        for slot in 1..size {
            let mut rng = slot_rng(config.seed, generation, slot);
            let child = if slot >= size - immigrants {
                fresh_unique(dim, config, &seen, &mut rng)
            } else {
                let r: f64 = rng.random();
                let p1 = tournament(&population, config.tournament_size, &mut rng);
                if r < config.crossover_prob {
                    let p2 = tournament(&population, config.tournament_size, &mut rng);
                    crossover(&p1.expr, &p2.expr, config, &mut rng)
                } else if r < config.crossover_prob + config.mutation_prob {
                    mutate(&p1.expr, config, &mut rng)
                } else {
                    p1.expr.clone()
                }
            };
            let key = child.to_text(TextFormat::Sexpr);
            let child = if seen.contains(&key) { fresh_unique(dim, config, &seen, &mut rng) } else { child };
            seen.insert(child.to_text(TextFormat::Sexpr));
            offspring.push(child);
        }
        evaluations += offspring.len();
        let offspring = evaluate_all(offspring, ctx);
        if let Some(c) = offspring.iter().min_by(|a, b| a.rank(b)) {
            if c.rank(&best) == Ordering::Less {
                best = c.clone();
            }
        }
        population.clear();
        population.push(best.clone());
        population.extend(offspring);
        loss_trace.push(best.loss.total);
    }

    Ok(EvolutionResult { best: best.expr, best_loss: best.loss, loss_trace, evaluations })
}
