//! Expression trees over feature leaves and numeric constants.
//!
//! An [`Expression`] is an immutable operator tree together with the input
//! dimension it was built for. Evaluation never produces a non-finite value:
//! division by (near) zero, domain errors and overflow surface as an
//! [`EvalFault`] instead of being patched over by protected operators.

mod equiv;
mod text;

use std::fmt;
use std::ops;

use thiserror::Error;

use crate::matrix::Matrix;

pub use equiv::{numeric_equivalence, sample_points};
pub use text::{format_constant, parse, parse_with_names, TextFormat};

/// Denominators with a smaller magnitude than this fault.
pub const DIVISION_EPSILON: f64 = 1e-12;
/// `pow` results with a larger magnitude than this fault.
pub const POW_LIMIT: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Abs,
    Sin,
    Cos,
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 5] = [UnaryOp::Neg, UnaryOp::Abs, UnaryOp::Sin, UnaryOp::Cos, UnaryOp::Exp];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Abs => "abs",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
        }
    }

    /// Complexity weight of one node of this kind.
    pub fn weight(self) -> f64 {
        match self {
            UnaryOp::Neg => 1.0,
            UnaryOp::Abs => 2.0,
            UnaryOp::Sin | UnaryOp::Cos | UnaryOp::Exp => 4.0,
        }
    }

    fn apply(self, x: f64) -> Result<f64, EvalFault> {
        let v = match self {
            UnaryOp::Neg => -x,
            UnaryOp::Abs => x.abs(),
            UnaryOp::Sin => x.sin(),
            UnaryOp::Cos => x.cos(),
            UnaryOp::Exp => x.exp(),
        };
        check_finite(v)
    }
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 5] = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div, BinaryOp::Pow];

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::Pow => "pow",
        }
    }

    /// Complexity weight of one node of this kind.
    pub fn weight(self) -> f64 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 1.0,
            BinaryOp::Mul => 2.0,
            BinaryOp::Div => 3.0,
            BinaryOp::Pow => 4.0,
        }
    }

    fn apply(self, a: f64, b: f64) -> Result<f64, EvalFault> {
        match self {
            BinaryOp::Add => check_finite(a + b),
            BinaryOp::Sub => check_finite(a - b),
            BinaryOp::Mul => check_finite(a * b),
            BinaryOp::Div => {
                if b.abs() < DIVISION_EPSILON {
                    Err(EvalFault::DivisionByZero)
                } else {
                    check_finite(a / b)
                }
            }
            BinaryOp::Pow => {
                if a < 0.0 && b.fract() != 0.0 {
                    return Err(EvalFault::Domain);
                }
                if a == 0.0 && b < 0.0 {
                    return Err(EvalFault::DivisionByZero);
                }
                let v = a.powf(b);
                if v.abs() > POW_LIMIT {
                    return Err(EvalFault::Overflow);
                }
                check_finite(v)
            }
        }
    }
}

/// Why an evaluation produced no value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
pub enum EvalFault {
    #[error("division by a value near zero")]
    DivisionByZero,
    #[error("argument outside the operator's domain")]
    Domain,
    #[error("result overflowed")]
    Overflow,
    #[error("non-finite value")]
    NonFinite,
}

/// Result of evaluating an expression at one point. The `Ok` value is
/// always finite.
pub type EvalOutcome = Result<f64, EvalFault>;

fn check_finite(v: f64) -> EvalOutcome {
    if v.is_finite() {
        Ok(v)
    } else if v.is_nan() {
        Err(EvalFault::NonFinite)
    } else {
        Err(EvalFault::Overflow)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("feature index {index} out of range for dimension {dimension}")]
    FeatureIndex { index: usize, dimension: usize },
    #[error("constant {0} is not finite")]
    NonFiniteConstant(f64),
}

/// One node of an expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Feature(usize),
    Const(f64),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

impl Node {
    pub fn feature(index: usize) -> Node {
        Node::Feature(index)
    }

    pub fn constant(value: f64) -> Node {
        Node::Const(value)
    }

    pub fn unary(op: UnaryOp, child: Node) -> Node {
        Node::Unary(op, Box::new(child))
    }

    pub fn binary(op: BinaryOp, left: Node, right: Node) -> Node {
        Node::Binary(op, Box::new(left), Box::new(right))
    }

    pub fn pow(self, exponent: Node) -> Node {
        Node::binary(BinaryOp::Pow, self, exponent)
    }

    pub fn abs(self) -> Node {
        Node::unary(UnaryOp::Abs, self)
    }

    pub fn sin(self) -> Node {
        Node::unary(UnaryOp::Sin, self)
    }

    pub fn cos(self) -> Node {
        Node::unary(UnaryOp::Cos, self)
    }

    pub fn exp(self) -> Node {
        Node::unary(UnaryOp::Exp, self)
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Feature(_) | Node::Const(_))
    }

    pub fn eval(&self, point: &[f64]) -> EvalOutcome {
        match self {
            Node::Feature(i) => check_finite(point[*i]),
            Node::Const(c) => Ok(*c),
            Node::Unary(op, a) => op.apply(a.eval(point)?),
            Node::Binary(op, a, b) => {
                let x = a.eval(point)?;
                let y = b.eval(point)?;
                op.apply(x, y)
            }
        }
    }

    /// Number of nodes in the subtree.
    pub fn size(&self) -> usize {
        match self {
            Node::Feature(_) | Node::Const(_) => 1,
            Node::Unary(_, a) => 1 + a.size(),
            Node::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    /// Longest root-to-leaf path, counted in edges. A leaf has height 0.
    pub fn height(&self) -> usize {
        match self {
            Node::Feature(_) | Node::Const(_) => 0,
            Node::Unary(_, a) => 1 + a.height(),
            Node::Binary(_, a, b) => 1 + a.height().max(b.height()),
        }
    }

    pub fn complexity(&self) -> f64 {
        match self {
            Node::Feature(_) | Node::Const(_) => 1.0,
            Node::Unary(op, a) => op.weight() + a.complexity(),
            Node::Binary(op, a, b) => op.weight() + a.complexity() + b.complexity(),
        }
    }

    /// Subtree at pre-order position `index` (the root is 0).
    pub fn get(&self, index: usize) -> Option<&Node> {
        let mut remaining = index;
        self.find(&mut remaining)
    }

    fn find(&self, remaining: &mut usize) -> Option<&Node> {
        if *remaining == 0 {
            return Some(self);
        }
        *remaining -= 1;
        match self {
            Node::Feature(_) | Node::Const(_) => None,
            Node::Unary(_, a) => a.find(remaining),
            Node::Binary(_, a, b) => a.find(remaining).or_else(|| b.find(remaining)),
        }
    }

    /// Depth (in edges from the root) of the node at pre-order `index`.
    pub fn depth_of(&self, index: usize) -> Option<usize> {
        fn walk(n: &Node, remaining: &mut usize, depth: usize) -> Option<usize> {
            if *remaining == 0 {
                return Some(depth);
            }
            *remaining -= 1;
            match n {
                Node::Feature(_) | Node::Const(_) => None,
                Node::Unary(_, a) => walk(a, remaining, depth + 1),
                Node::Binary(_, a, b) => walk(a, remaining, depth + 1).or_else(|| walk(b, remaining, depth + 1)),
            }
        }
        let mut remaining = index;
        walk(self, &mut remaining, 0)
    }

    /// Mutable access to the subtree at pre-order `index`.
    pub fn get_mut(&mut self, index: usize) -> Option<&mut Node> {
        fn walk<'a>(n: &'a mut Node, remaining: &mut usize) -> Option<&'a mut Node> {
            if *remaining == 0 {
                return Some(n);
            }
            *remaining -= 1;
            match n {
                Node::Feature(_) | Node::Const(_) => None,
                Node::Unary(_, a) => walk(a, remaining),
                Node::Binary(_, a, b) => {
                    let skip = a.size();
                    if *remaining < skip {
                        walk(a, remaining)
                    } else {
                        *remaining -= skip;
                        walk(b, remaining)
                    }
                }
            }
        }
        let mut remaining = index;
        walk(self, &mut remaining)
    }

    /// Visits every node in pre-order.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Node)) {
        f(self);
        match self {
            Node::Feature(_) | Node::Const(_) => {}
            Node::Unary(_, a) => a.visit(f),
            Node::Binary(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }

    fn validate(&self, dimension: usize) -> Result<(), ExprError> {
        let mut result = Ok(());
        self.visit(&mut |n| {
            if result.is_err() {
                return;
            }
            match *n {
                Node::Feature(i) if i >= dimension => result = Err(ExprError::FeatureIndex { index: i, dimension }),
                Node::Const(c) if !c.is_finite() => result = Err(ExprError::NonFiniteConstant(c)),
                _ => {}
            }
        });
        result
    }
}

impl ops::Add for Node {
    type Output = Node;
    fn add(self, rhs: Node) -> Node {
        Node::binary(BinaryOp::Add, self, rhs)
    }
}

impl ops::Sub for Node {
    type Output = Node;
    fn sub(self, rhs: Node) -> Node {
        Node::binary(BinaryOp::Sub, self, rhs)
    }
}

impl ops::Mul for Node {
    type Output = Node;
    fn mul(self, rhs: Node) -> Node {
        Node::binary(BinaryOp::Mul, self, rhs)
    }
}

impl ops::Div for Node {
    type Output = Node;
    fn div(self, rhs: Node) -> Node {
        Node::binary(BinaryOp::Div, self, rhs)
    }
}

impl ops::Neg for Node {
    type Output = Node;
    fn neg(self) -> Node {
        Node::unary(UnaryOp::Neg, self)
    }
}

/// A validated expression tree of a fixed input dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
    dimension: usize,
}

impl Expression {
    /// Checks feature indices against `dimension` and rejects non-finite
    /// constants.
    pub fn new(root: Node, dimension: usize) -> Result<Self, ExprError> {
        root.validate(dimension)?;
        Ok(Self { root, dimension })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn into_root(self) -> Node {
        self.root
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn evaluate(&self, point: &[f64]) -> EvalOutcome {
        assert_eq!(point.len(), self.dimension, "point length does not match expression dimension");
        self.root.eval(point)
    }

    pub fn evaluate_batch(&self, rows: &Matrix) -> Vec<EvalOutcome> {
        assert_eq!(rows.ncols(), self.dimension, "row width mismatch");
        rows.rows().map(|r| self.root.eval(r)).collect()
    }

    /// Weighted node count: leaves, `add`, `sub` and `neg` weigh 1, `mul`
    /// and `abs` 2, `div` 3, `sin`, `cos`, `exp` and `pow` 4.
    pub fn complexity(&self) -> f64 {
        self.root.complexity()
    }

    pub fn size(&self) -> usize {
        self.root.size()
    }

    pub fn height(&self) -> usize {
        self.root.height()
    }

    /// Full validity check including the depth bound.
    pub fn is_valid(&self, max_depth: usize) -> bool {
        self.height() <= max_depth && self.root.validate(self.dimension).is_ok()
    }

    pub fn to_text(&self, format: TextFormat) -> String {
        text::render::<&str>(&self.root, format, None)
    }

    /// Renders with `names[k]` in place of `x<k>`.
    pub fn to_text_named<S: AsRef<str>>(&self, format: TextFormat, names: &[S]) -> String {
        text::render(&self.root, format, Some(names))
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text(TextFormat::Infix))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t() -> Node {
        Node::feature(0)
    }
    fn a() -> Node {
        Node::feature(1)
    }
    fn c(v: f64) -> Node {
        Node::constant(v)
    }

    fn kepler() -> Expression {
        Expression::new((t() * t()) / (a() * (a() * a())), 2).unwrap()
    }

    #[test]
    fn kepler_form_is_one_in_natural_units() {
        assert_eq!(kepler().evaluate(&[1.0, 1.0]), Ok(1.0));
    }

    #[test]
    fn wine_invariant_inverts_to_one() {
        let fw = Expression::new(c(1.0759) / (Node::feature(0) - c(11.1282)), 1).unwrap();
        let v = fw.evaluate(&[12.2041]).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{v}");
        assert_eq!(fw.evaluate(&[11.1282]), Err(EvalFault::DivisionByZero));
    }

    #[test]
    fn batch_matches_pointwise() {
        let a4 = 4f64.powf(2.0 / 3.0);
        let rows = Matrix::from_rows(2, &[[1.0, 1.0], [4.0, a4]]).unwrap();
        let out = kepler().evaluate_batch(&rows);
        assert_eq!(out[0], Ok(1.0));
        assert!((out[1].unwrap() - 1.0).abs() < 1e-12);

        assert!(kepler().evaluate_batch(&Matrix::empty(2)).is_empty());

        let bad = Matrix::from_rows(2, &[[f64::NAN, 1.0], [1.0, 1.0]]).unwrap();
        let out = kepler().evaluate_batch(&bad);
        assert_eq!(out[0], Err(EvalFault::NonFinite));
        assert_eq!(out[1], Ok(1.0));
    }

    #[test]
    fn fault_paths() {
        let e = |n: Node| Expression::new(n, 1).unwrap();
        assert_eq!(e(c(0.0).pow(c(-1.0))).evaluate(&[0.0]), Err(EvalFault::DivisionByZero));
        assert_eq!(e(c(-2.0).pow(c(0.5))).evaluate(&[0.0]), Err(EvalFault::Domain));
        assert_eq!(e(c(-2.0).pow(c(2.0))).evaluate(&[0.0]), Ok(4.0));
        assert_eq!(e(c(10.0).pow(c(400.0))).evaluate(&[0.0]), Err(EvalFault::Overflow));
        assert_eq!(e(c(1e200).pow(c(1.6))).evaluate(&[0.0]), Err(EvalFault::Overflow));
        assert_eq!(e(c(1000.0).exp()).evaluate(&[0.0]), Err(EvalFault::Overflow));
        assert_eq!(e(c(1.0) / c(1e-13)).evaluate(&[0.0]), Err(EvalFault::DivisionByZero));
        assert!(e(c(1.0) / c(1e-11)).evaluate(&[0.0]).is_ok());
        assert_eq!(e(c(1e308) * c(10.0)).evaluate(&[0.0]), Err(EvalFault::Overflow));
    }

    #[test]
    fn complexity_weights() {
        assert_eq!(Expression::new(t(), 1).unwrap().complexity(), 1.0);
        assert_eq!(Expression::new(t() + c(2.0), 1).unwrap().complexity(), 3.0);
        // 5 leaves, three mul, one div
        assert_eq!(kepler().complexity(), 14.0);
        let wrapped = Expression::new(kepler().into_root().sin(), 2).unwrap();
        assert!(wrapped.complexity() > kepler().complexity());
        assert_eq!((-t()).complexity(), 2.0);
        assert_eq!(t().abs().complexity(), 3.0);
        assert_eq!(t().pow(c(2.0)).complexity(), 6.0);
    }

    #[test]
    fn validation() {
        assert_eq!(Expression::new(Node::feature(2), 2), Err(ExprError::FeatureIndex { index: 2, dimension: 2 }));
        assert!(matches!(Expression::new(c(f64::INFINITY), 1), Err(ExprError::NonFiniteConstant(_))));
    }

    #[test]
    fn preorder_addressing() {
        // (add x0 (abs (sub 1 x0)))
        let n = t() + (c(1.0) - t()).abs();
        assert_eq!(n.size(), 6);
        assert_eq!(n.get(1), Some(&t()));
        assert_eq!(n.get(4), Some(&c(1.0)));
        assert_eq!(n.get(6), None);
        assert_eq!(n.depth_of(5), Some(3));
        assert_eq!(n.height(), 3);
        let mut m = n.clone();
        *m.get_mut(5).unwrap() = c(7.0);
        assert_eq!(m, t() + (c(1.0) - c(7.0)).abs());
        for i in 0..n.size() {
            let mut m = n.clone();
            let want = n.get(i).unwrap().clone();
            assert_eq!(m.get_mut(i).unwrap(), &want);
        }
    }
}
