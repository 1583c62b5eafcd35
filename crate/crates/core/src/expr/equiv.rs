//! Numeric (sampling-based) equivalence of two expressions.

use rand::Rng;

use super::Expression;

/// Minimum share of sample points at which both expressions must evaluate.
pub const MIN_VALID_FRACTION: f64 = 0.8;

/// Draws `samples` points uniformly from the box `domain` (one `(lo, hi)`
/// interval per feature).
pub fn sample_points<R: Rng + ?Sized>(domain: &[(f64, f64)], samples: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..samples)
        .map(|_| domain.iter().map(|&(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo }).collect())
        .collect()
}

/// True when `a` and `b` agree to `tol * max(1, |b|)` at every sampled point
/// where both evaluate, and at least 80% of the points evaluate for both.
pub fn numeric_equivalence<R: Rng + ?Sized>(
    a: &Expression,
    b: &Expression,
    domain: &[(f64, f64)],
    samples: usize,
    tol: f64,
    rng: &mut R,
) -> bool {
    assert_eq!(a.dimension(), b.dimension(), "expressions differ in dimension");
    assert_eq!(domain.len(), a.dimension(), "domain does not match dimension");
    assert!(samples >= 1);
    let points = sample_points(domain, samples, rng);
    let mut valid = 0usize;
    for p in &points {
        if let (Ok(va), Ok(vb)) = (a.evaluate(p), b.evaluate(p)) {
            valid += 1;
            if (va - vb).abs() > tol * vb.abs().max(1.0) {
                return false;
            }
        }
    }
    valid as f64 >= MIN_VALID_FRACTION * samples as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_with_names, Node};
    use crate::rng::stream;

    const NAMES: [&str; 2] = ["T", "a"];
    const DOMAIN: [(f64, f64); 2] = [(1.0, 10.0), (1.0, 10.0)];

    fn e(text: &str) -> Expression {
        parse_with_names(text, &NAMES).unwrap()
    }

    #[test]
    fn e1_is_the_reciprocal_kepler_form() {
        // (a/T)/(T/a^2) = a^3/T^2
        let e1 = e("(div (div a T) (div T (mul a a)))");
        let kepler = e("(div (mul T T) (mul a (mul a a)))");
        let inverse = e("(div (mul a (mul a a)) (mul T T))");
        assert!(!numeric_equivalence(&e1, &kepler, &DOMAIN, 200, 1e-9, &mut stream(&[1])));
        assert!(numeric_equivalence(&e1, &inverse, &DOMAIN, 200, 1e-9, &mut stream(&[1])));
    }

    #[test]
    fn self_and_unrelated() {
        let k = e("(div (mul T T) (mul a (mul a a)))");
        assert!(numeric_equivalence(&k, &k, &DOMAIN, 50, 0.0, &mut stream(&[2])));
        assert!(!numeric_equivalence(&e("T"), &e("a"), &DOMAIN, 50, 1e-6, &mut stream(&[3])));
    }

    #[test]
    fn mostly_faulting_pairs_are_not_equivalent() {
        // defined only where T > 5.5 on this domain
        let partial = e("(pow (sub T 5.5) 0.5)");
        assert!(!numeric_equivalence(&partial, &partial, &DOMAIN, 200, 1e-6, &mut stream(&[4])));
    }

    #[test]
    fn degenerate_interval_samples_its_endpoint() {
        let pts = sample_points(&[(2.0, 2.0)], 5, &mut stream(&[5]));
        assert!(pts.iter().all(|p| p == &[2.0]));
        let one = Expression::new(Node::constant(1.0), 1).unwrap();
        assert!(numeric_equivalence(&one, &one, &[(2.0, 2.0)], 1, 0.0, &mut stream(&[6])));
    }
}
