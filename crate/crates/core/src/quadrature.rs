//! Quadrature rules on the reference cells.
//!
//! 1D rules are Gauss-Legendre on the unit interval [0, 1]; the triangle rule
//! is a six-point symmetric rule exact for polynomials of total degree 4 on
//! the reference triangle {(0,0), (1,0), (0,1)}.
//!
//! Weights sum to the reference-cell measure (1 for the interval, 1/2 for the
//! triangle), so physical integrals are `|det J| * sum(w_q * f(p_q))`.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// Reference-cell coordinates; 1D rules use only the first component.
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Largest polynomial degree integrated exactly.
    pub exact_degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gauss-Legendre rule with `n` points on [0, 1], exact through degree 2n - 1.
///
/// Nodes are Newton-refined roots of the Legendre polynomial P_n, which keeps
/// the table free of transcription errors for any n.
pub fn gauss_legendre(n: usize) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::invalid_argument("quadrature rule needs n >= 1"));
    }
    let mut points = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 1..=n {
        // initial guess on [-1, 1]
        let mut t = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, t);
            let step = p / d;
            t -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, t);
        let w = 2.0 / ((1.0 - t * t) * dp * dp);
        // map [-1, 1] -> [0, 1]
        points.push([(1.0 - t) / 2.0, 0.0]);
        weights.push(w / 2.0);
    }
    points.reverse();
    weights.reverse();
    Ok(QuadratureRule {
        points,
        weights,
        exact_degree: 2 * n - 1,
    })
}

/// Legendre polynomial P_n(t) and its derivative via the three-term recurrence.
fn legendre_with_derivative(n: usize, t: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * t * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = p_next;
    }
    let d = n as f64 * (t * p - p_prev) / (t * t - 1.0);
    (p, d)
}

/// Six-point symmetric triangle rule, exact through total degree 4.
/// Weights sum to the reference-triangle area 1/2.
pub fn triangle_degree4() -> QuadratureRule {
    const W1: f64 = 0.223_381_589_678_011;
    const A1: f64 = 0.108_103_018_168_070;
    const B1: f64 = 0.445_948_490_915_965;
    const W2: f64 = 0.109_951_743_655_322;
    const A2: f64 = 0.816_847_572_980_459;
    const B2: f64 = 0.091_576_213_509_771;

    let mut points = Vec::with_capacity(6);
    let mut weights = Vec::with_capacity(6);
    // barycentric (l0, l1, l2) maps to (x, y) = (l1, l2)
    for (a, b, w) in [(A1, B1, W1), (A2, B2, W2)] {
        points.push([b, b]);
        weights.push(w / 2.0);
        points.push([a, b]);
        weights.push(w / 2.0);
        points.push([b, a]);
        weights.push(w / 2.0);
    }
    QuadratureRule {
        points,
        weights,
        exact_degree: 4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product::<f64>().max(1.0)
    }

    #[test]
    fn gauss_weights_positive_and_sum_to_length() {
        for n in 1..=9 {
            let rule = gauss_legendre(n).unwrap();
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            let total: f64 = rule.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-14, "n = {n}: sum = {total}");
        }
    }

    #[test]
    fn gauss_exact_for_monomials() {
        // int_0^1 x^p dx = 1/(p+1), checked up to the declared degree
        for n in 1..=9 {
            let rule = gauss_legendre(n).unwrap();
            for p in 0..=rule.exact_degree {
                let approx: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| w * x[0].powi(p as i32))
                    .sum();
                let exact = 1.0 / (p as f64 + 1.0);
                assert!(
                    (approx - exact).abs() < 1e-13,
                    "n = {n}, p = {p}: {approx} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn zero_points_rejected() {
        assert!(gauss_legendre(0).is_err());
    }

    #[test]
    fn triangle_rule_exact_through_degree4() {
        // int_T x^p y^q = p! q! / (p + q + 2)! on the reference triangle
        let rule = triangle_degree4();
        assert!(rule.weights.iter().all(|&w| w > 0.0));
        for p in 0..=4usize {
            for q in 0..=(4 - p) {
                let approx: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(pt, w)| w * pt[0].powi(p as i32) * pt[1].powi(q as i32))
                    .sum();
                let exact = factorial(p) * factorial(q) / factorial(p + q + 2);
                assert!(
                    (approx - exact).abs() < 1e-14,
                    "x^{p} y^{q}: {approx} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn triangle_rule_not_exact_beyond_degree4() {
        // degree-5 monomial x^5 should show a visible error; guards the
        // declared exactness from silently being overstated
        let rule = triangle_degree4();
        let approx: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(pt, w)| w * pt[0].powi(5))
            .sum();
        let exact = factorial(5) / factorial(7);
        assert!((approx - exact).abs() > 1e-8);
    }
}
