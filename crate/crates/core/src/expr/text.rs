//! Infix pretty-printing and the s-expression interchange format.
//!
//! Grammar of the s-expression form:
//!
//! ```text
//! expr := const | feature | "(" op expr+ ")"
//! ```
//!
//! Features are written `x<k>` (0-based) or, when a name table is supplied,
//! by name. Constants are written with six significant digits whenever that
//! reproduces the stored value exactly, and with the shortest exact decimal
//! otherwise, so `parse(to_text(e, Sexpr))` rebuilds `e` bit for bit.

use super::{BinaryOp, ExprError, Expression, Node, UnaryOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TextFormat {
    /// Human-readable infix with minimal parentheses.
    Infix,
    /// Fully parenthesized prefix form.
    Sexpr,
}

/// Six significant digits, trailing zeros trimmed.
fn six_digits(c: f64) -> String {
    if c == 0.0 {
        return "0".to_string();
    }
    let exp = c.abs().log10().floor() as i32;
    let s = if (-5..15).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_fraction(format!("{c:.decimals$}"))
    } else {
        let s = format!("{c:.5e}");
        let (mantissa, exponent) = s.split_once('e').expect("LowerExp always has an exponent");
        format!("{}e{exponent}", trim_fraction(mantissa.to_string()))
    };
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

fn trim_fraction(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Renders a constant so that parsing the text returns the same `f64`.
pub fn format_constant(c: f64) -> String {
    let short = six_digits(c);
    if short.parse::<f64>().ok() == Some(c) {
        return short;
    }
    let a = c.abs();
    if (1e-5..1e15).contains(&a) {
        format!("{c}")
    } else {
        format!("{c:e}")
    }
}

pub(super) fn render<S: AsRef<str>>(root: &Node, format: TextFormat, names: Option<&[S]>) -> String {
    let mut out = String::new();
    match format {
        TextFormat::Sexpr => sexpr(root, names, &mut out),
        TextFormat::Infix => infix(root, names, &mut out),
    }
    out
}

fn feature_name<S: AsRef<str>>(i: usize, names: Option<&[S]>) -> String {
    match names.and_then(|n| n.get(i)) {
        Some(name) => name.as_ref().to_string(),
        None => format!("x{i}"),
    }
}

fn sexpr<S: AsRef<str>>(n: &Node, names: Option<&[S]>, out: &mut String) {
    match n {
        Node::Feature(i) => out.push_str(&feature_name(*i, names)),
        Node::Const(c) => out.push_str(&format_constant(*c)),
        Node::Unary(op, a) => {
            out.push('(');
            out.push_str(op.name());
            out.push(' ');
            sexpr(a, names, out);
            out.push(')');
        }
        Node::Binary(op, a, b) => {
            out.push('(');
            out.push_str(op.name());
            out.push(' ');
            sexpr(a, names, out);
            out.push(' ');
            sexpr(b, names, out);
            out.push(')');
        }
    }
}

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(n: &Node) -> u8 {
    match n {
        Node::Const(c) if *c < 0.0 => PREC_NEG,
        Node::Feature(_) | Node::Const(_) => PREC_ATOM,
        Node::Unary(UnaryOp::Neg, _) => PREC_NEG,
        Node::Unary(..) => PREC_ATOM,
        Node::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => PREC_ADD,
        Node::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => PREC_MUL,
        Node::Binary(BinaryOp::Pow, ..) => PREC_POW,
    }
}

fn leading_minus(n: &Node) -> bool {
    precedence(n) == PREC_NEG
}

fn infix<S: AsRef<str>>(n: &Node, names: Option<&[S]>, out: &mut String) {
    match n {
        Node::Feature(i) => out.push_str(&feature_name(*i, names)),
        Node::Const(c) => out.push_str(&six_digits(*c)),
        Node::Unary(UnaryOp::Neg, a) => {
            out.push('-');
            wrapped(a, precedence(a) <= PREC_NEG, names, out);
        }
        Node::Unary(UnaryOp::Abs, a) => {
            out.push('|');
            infix(a, names, out);
            out.push('|');
        }
        Node::Unary(op, a) => {
            out.push_str(op.name());
            out.push('(');
            infix(a, names, out);
            out.push(')');
        }
        Node::Binary(op, a, b) => {
            let p = precedence(n);
            let (symbol, left_parens, right_parens) = match op {
                BinaryOp::Pow => ("^", precedence(a) <= PREC_POW, precedence(b) < PREC_POW || leading_minus(b)),
                _ => {
                    let symbol = match op {
                        BinaryOp::Add => " + ",
                        BinaryOp::Sub => " - ",
                        BinaryOp::Mul => " * ",
                        _ => " / ",
                    };
                    let same_associative = matches!(
                        (op, &**b),
                        (BinaryOp::Add, Node::Binary(BinaryOp::Add, ..))
                            | (BinaryOp::Mul, Node::Binary(BinaryOp::Mul, ..))
                    );
                    let right = if same_associative { false } else { precedence(b) <= p || leading_minus(b) };
                    (symbol, precedence(a) < p, right)
                }
            };
            wrapped(a, left_parens, names, out);
            out.push_str(symbol);
            wrapped(b, right_parens, names, out);
        }
    }
}

fn wrapped<S: AsRef<str>>(n: &Node, parens: bool, names: Option<&[S]>, out: &mut String) {
    if parens {
        out.push('(');
        infix(n, names, out);
        out.push(')');
    } else {
        infix(n, names, out);
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(text: &str) -> Vec<(usize, Token<'_>)> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        let delimiter = ch == '(' || ch == ')' || ch.is_whitespace();
        if delimiter {
            if let Some(s) = start.take() {
                tokens.push((s, Token::Atom(&text[s..i])));
            }
            match ch {
                '(' => tokens.push((i, Token::Open)),
                ')' => tokens.push((i, Token::Close)),
                _ => {}
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push((s, Token::Atom(&text[s..])));
    }
    tokens
}

struct Parser<'a, S> {
    tokens: Vec<(usize, Token<'a>)>,
    pos: usize,
    end: usize,
    dimension: usize,
    names: Option<&'a [S]>,
}

fn syntax(position: usize, message: impl Into<String>) -> ExprError {
    ExprError::Syntax { position, message: message.into() }
}

impl<'a, S: AsRef<str>> Parser<'a, S> {
    fn next(&mut self) -> Result<(usize, Token<'a>), ExprError> {
        let t = self.tokens.get(self.pos).cloned().ok_or_else(|| syntax(self.end, "unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let (at, tok) = self.next()?;
        match tok {
            Token::Close => Err(syntax(at, "unexpected ')'")),
            Token::Atom(a) => self.atom(at, a),
            Token::Open => {
                let (op_at, op_tok) = self.next()?;
                let Token::Atom(op) = op_tok else {
                    return Err(syntax(op_at, "expected an operator name"));
                };
                let mut args = Vec::new();
                loop {
                    match self.tokens.get(self.pos) {
                        Some((_, Token::Close)) => {
                            self.pos += 1;
                            break;
                        }
                        Some(_) => args.push(self.expr()?),
                        None => return Err(syntax(self.end, "unexpected end of input, missing ')'")),
                    }
                }
                build(op_at, op, args)
            }
        }
    }

    fn atom(&self, at: usize, a: &str) -> Result<Node, ExprError> {
        if let Some(names) = self.names {
            if let Some(i) = names.iter().position(|n| n.as_ref() == a) {
                return Ok(Node::Feature(i));
            }
        }
        if let Some(digits) = a.strip_prefix('x') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize =
                    digits.parse().map_err(|_| syntax(at, format!("feature index '{a}' is too large")))?;
                if index >= self.dimension {
                    return Err(ExprError::FeatureIndex { index, dimension: self.dimension });
                }
                return Ok(Node::Feature(index));
            }
        }
        // Rust's float parser accepts "inf" and "nan"; neither is a constant here.
        let numeric = a.bytes().all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E'));
        match a.parse::<f64>() {
            Ok(v) if numeric && v.is_finite() => Ok(Node::Const(v)),
            Ok(v) if numeric => Err(ExprError::NonFiniteConstant(v)),
            _ => Err(syntax(at, format!("unknown symbol '{a}'"))),
        }
    }
}

fn build(at: usize, op: &str, mut args: Vec<Node>) -> Result<Node, ExprError> {
    if let Some(u) = UnaryOp::ALL.iter().find(|u| u.name() == op) {
        if args.len() != 1 {
            return Err(syntax(at, format!("'{op}' takes 1 argument, got {}", args.len())));
        }
        return Ok(Node::unary(*u, args.pop().expect("length checked")));
    }
    if let Some(b) = BinaryOp::ALL.iter().find(|b| b.name() == op) {
        if args.len() != 2 {
            return Err(syntax(at, format!("'{op}' takes 2 arguments, got {}", args.len())));
        }
        let right = args.pop().expect("length checked");
        let left = args.pop().expect("length checked");
        return Ok(Node::binary(*b, left, right));
    }
    Err(syntax(at, format!("unknown operator '{op}'")))
}

fn parse_inner<S: AsRef<str>>(text: &str, dimension: usize, names: Option<&[S]>) -> Result<Expression, ExprError> {
    let mut p = Parser { tokens: tokenize(text), pos: 0, end: text.len(), dimension, names };
    let root = p.expr()?;
    if let Some((at, _)) = p.tokens.get(p.pos) {
        return Err(syntax(*at, "trailing input after expression"));
    }
    Expression::new(root, dimension)
}

/// Parses the s-expression form over `dimension` inputs named `x0..`.
pub fn parse(text: &str, dimension: usize) -> Result<Expression, ExprError> {
    parse_inner::<&str>(text, dimension, None)
}

/// Parses the s-expression form, resolving atoms against `names` first.
/// `x<k>` atoms remain valid.
pub fn parse_with_names<S: AsRef<str>>(text: &str, names: &[S]) -> Result<Expression, ExprError> {
    parse_inner(text, names.len(), Some(names))
}
