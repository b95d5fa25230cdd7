//! Quadrature rules: Gauss–Legendre on an interval, a degree-4 six-point
//! triangle rule, and a degree-5 three-point edge rule.
//!
//! The spatial basis is linear, so the fixed rules are exact for every
//! polynomial integrand that appears in assembly; smooth non-polynomial
//! coefficients (KL eigenfunctions) are integrated to well below the
//! solver's truncation tolerances.

/// Six-point triangle rule, exact for total degree ≤ 4.
/// Entries are (λ₁, λ₂, λ₃, w) in barycentric coordinates; weights sum to 1
/// and must be scaled by the triangle area.
pub const TRIANGLE_6: [(f64, f64, f64, f64); 6] = {
    const A1: f64 = 0.445_948_490_915_965;
    const B1: f64 = 1.0 - 2.0 * A1;
    const W1: f64 = 0.223_381_589_678_011;
    const A2: f64 = 0.091_576_213_509_771;
    const B2: f64 = 1.0 - 2.0 * A2;
    const W2: f64 = 0.109_951_743_655_322;
    [
        (B1, A1, A1, W1),
        (A1, B1, A1, W1),
        (A1, A1, B1, W1),
        (B2, A2, A2, W2),
        (A2, B2, A2, W2),
        (A2, A2, B2, W2),
    ]
};

/// Three-point Gauss rule on [0,1], exact for degree ≤ 5.
/// Entries are (t, w); weights sum to 1 and must be scaled by edge length.
pub const EDGE_3: [(f64, f64); 3] = {
    const T: f64 = 0.387_298_334_620_741_7; // sqrt(3/5)/2
    [
        (0.5 - T, 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.5 + T, 5.0 / 18.0),
    ]
};

/// Gauss–Legendre nodes and weights on [-1,1].
///
/// Newton iteration on the degree-n Legendre polynomial from the Chebyshev
/// initial guesses; exact for polynomials of degree ≤ 2n-1.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let step = p / d;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    // Newton walks from one end; present nodes in ascending order.
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

/// Value and derivative of the degree-n Legendre polynomial at x.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    if n == 0 {
        return (p0, 0.0);
    }
    let mut p1 = x;
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to [lo, hi].
pub fn gauss_legendre_on(n: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = gauss_legendre(n);
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    (
        xs.iter().map(|x| mid + half * x).collect(),
        ws.iter().map(|w| w * half).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_integrates_polynomials_exactly() {
        // n-point Gauss is exact through degree 2n-1; check x^k moments.
        for n in 1..=12 {
            let (xs, ws) = gauss_legendre(n);
            assert_relative_eq!(ws.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
            for k in 0..(2 * n) {
                let num: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(k as i32)).sum();
                let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
                assert_relative_eq!(num, exact, epsilon = 1e-12, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn gauss_nodes_sorted_and_symmetric() {
        let (xs, ws) = gauss_legendre(7);
        for pair in xs.windows(2) {
            assert!(pair[0] < pair[1]);
        }
        for i in 0..7 {
            assert_relative_eq!(xs[i], -xs[6 - i], epsilon = 1e-14);
            assert_relative_eq!(ws[i], ws[6 - i], epsilon = 1e-14);
        }
    }

    #[test]
    fn triangle_rule_degree_four() {
        // Reference triangle (0,0)-(1,0)-(0,1): ∫ x^a y^b = a! b! / (a+b+2)!.
        let verts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let area = 0.5;
        let factorial = |m: u32| (1..=m).map(f64::from).product::<f64>().max(1.0);
        for a in 0..=4u32 {
            for b in 0..=(4 - a) {
                let mut num = 0.0;
                for &(l1, l2, l3, w) in &TRIANGLE_6 {
                    let x = l1 * verts[0][0] + l2 * verts[1][0] + l3 * verts[2][0];
                    let y = l1 * verts[0][1] + l2 * verts[1][1] + l3 * verts[2][1];
                    num += w * area * x.powi(a as i32) * y.powi(b as i32);
                }
                let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                assert_relative_eq!(num, exact, epsilon = 1e-14, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn edge_rule_degree_five() {
        for k in 0..=5u32 {
            let num: f64 = EDGE_3.iter().map(|&(t, w)| w * t.powi(k as i32)).sum();
            assert_relative_eq!(num, 1.0 / (k as f64 + 1.0), epsilon = 1e-14);
        }
    }
}
