//! Orthonormal Legendre chaos on [-√3, √3]^N and the stochastic Galerkin
//! coupling matrices.
//!
//! Basis functions are products ψ_r(ξ) = Π_m p_{r_m}(ξ_m) over a graded
//! multi-index set of total degree ≤ Q, with p_n the Legendre polynomials
//! orthonormal w.r.t. the uniform density 1/(2√3) on [-√3, √3] (unit
//! variance, p_1(t) = t). The Galerkin projection needs
//!
//!   G_0(r,s) = ⟨ψ_r ψ_s⟩ = δ_rs,    G_i(r,s) = ⟨ξ_i ψ_r ψ_s⟩,
//!
//! and g_i = G_i e_0. Each G_i (i ≥ 1) is symmetric with at most two
//! nonzeros per row: entries survive only when the multi-indices differ by
//! exactly one in coordinate i and agree elsewhere. Both are computed by
//! tensorized Gauss–Legendre quadrature, evaluated through its per-dimension
//! factorization.

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use nalgebra::DVector;
use sprs::{CsMat, TriMat};

/// Half-width of the random-variable range: ξ_k ~ Uniform[-√3, √3].
pub const XI_HALF_WIDTH: f64 = 1.732_050_807_568_877_2;

/// Multi-index bookkeeping for the chaos basis. Immutable.
#[derive(Debug, Clone)]
pub struct ChaosBasis {
    /// Stochastic dimension N (number of KL modes).
    pub n: usize,
    /// Maximal total polynomial degree Q.
    pub q: usize,
    /// Graded multi-index set; row 0 is the zero index (constant mode).
    pub indices: Vec<Vec<usize>>,
}

impl ChaosBasis {
    /// Build the graded total-degree-≤ Q basis in N variables.
    ///
    /// N = 0 is the deterministic reduction: a single empty index, J = 1.
    pub fn new(n: usize, q: usize) -> ChaosBasis {
        ChaosBasis { n, q, indices: multi_index_set(n, q) }
    }

    /// Number of basis functions J = (N+Q)! / (N! Q!).
    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    /// Evaluate ψ_r at a sample ξ of length N.
    pub fn eval(&self, r: usize, xi: &[f64]) -> Result<f64> {
        if xi.len() != self.n {
            return Err(Error::contract(format!(
                "sample has {} coordinates, basis expects {}",
                xi.len(),
                self.n
            )));
        }
        Ok(self.indices[r]
            .iter()
            .zip(xi)
            .map(|(&deg, &t)| legendre_orthonormal(deg, t))
            .product())
    }

    /// The Gram diagonal ⟨ψ_r²⟩; identically one under the orthonormal
    /// convention.
    pub fn gram_diagonal(&self) -> DVector<f64> {
        DVector::from_element(self.dim(), 1.0)
    }
}

/// All multi-indices in N variables with total degree ≤ Q, graded:
/// ascending degree, ties broken by descending lexicographic order, so the
/// degree-one block lists coordinates 1..N in order.
pub fn multi_index_set(n: usize, q: usize) -> Vec<Vec<usize>> {
    let mut set = Vec::new();
    let mut current = vec![0usize; n];
    enumerate_indices(n, 0, q, &mut current, &mut set);
    set.sort_by(|a, b| {
        let da: usize = a.iter().sum();
        let db: usize = b.iter().sum();
        da.cmp(&db).then_with(|| b.cmp(a))
    });
    set
}

fn enumerate_indices(
    n: usize,
    pos: usize,
    budget: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if pos == n {
        out.push(current.clone());
        return;
    }
    for d in 0..=budget {
        current[pos] = d;
        enumerate_indices(n, pos + 1, budget - d, current, out);
    }
    current[pos] = 0;
}

/// Basis count (N+Q)! / (N! Q!) without enumerating.
pub fn basis_dim(n: usize, q: usize) -> usize {
    // Π_{k=1..N} (Q+k)/k, exact in integer arithmetic.
    let mut j = 1usize;
    for k in 1..=n {
        j = j * (q + k) / k;
    }
    j
}

/// Legendre polynomial of degree `n`, orthonormal w.r.t. the density
/// 1/(2√3) on [-√3, √3]: p_0 = 1, p_1(t) = t, ⟨p_n²⟩ = 1.
pub fn legendre_orthonormal(n: usize, t: f64) -> f64 {
    // Standard Legendre on s = t/√3, scaled by √(2n+1).
    let s = t / XI_HALF_WIDTH;
    let mut p0 = 1.0;
    if n == 0 {
        return 1.0;
    }
    let mut p1 = s;
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * s * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    ((2 * n + 1) as f64).sqrt() * p1
}

/// The stochastic coupling matrices G_0..G_N and load weights g_0..g_N.
#[derive(Debug, Clone)]
pub struct StochasticMatrices {
    /// G_0 (identity) followed by G_1..G_N, J×J sparse.
    pub g_mats: Vec<CsMat<f64>>,
    /// g_i = first column of G_i.
    pub g_vecs: Vec<DVector<f64>>,
}

impl StochasticMatrices {
    pub fn dim(&self) -> usize {
        self.g_mats[0].rows()
    }

    /// Number of fluctuation matrices N (count excludes G_0).
    pub fn n_modes(&self) -> usize {
        self.g_mats.len() - 1
    }
}

/// Entries below this magnitude are quadrature zeros and dropped.
const DROP_TOL: f64 = 1e-13;

/// Build G_0..G_N and g_0..g_N for a basis by tensorized Gauss–Legendre
/// quadrature with `q+2` points per dimension (exact through degree 2Q+3).
pub fn build_stochastic_matrices(basis: &ChaosBasis) -> StochasticMatrices {
    build_stochastic_matrices_with_points(basis, basis.q + 2)
}

/// Same as [`build_stochastic_matrices`] with an explicit per-dimension
/// quadrature point count (must be ≥ Q+1 for exactness).
pub fn build_stochastic_matrices_with_points(
    basis: &ChaosBasis,
    points: usize,
) -> StochasticMatrices {
    let j = basis.dim();
    // 1-D moment tables over the orthonormal factors:
    //   plain[a][b] = ⟨p_a p_b⟩,  weighted[a][b] = ⟨t p_a p_b⟩.
    // The tensor-product integral of a separable integrand factorizes into
    // products of these.
    let deg = basis.q;
    let (xs, ws) = gauss_legendre(points.max(deg + 1));
    let mut plain = vec![vec![0.0; deg + 1]; deg + 1];
    let mut weighted = vec![vec![0.0; deg + 1]; deg + 1];
    for (x, w) in xs.iter().zip(&ws) {
        // Map the [-1,1] rule onto [-√3,√3] with the uniform density: the
        // Jacobian √3 and the density 1/(2√3) combine to weight w/2.
        let t = XI_HALF_WIDTH * x;
        let vals: Vec<f64> = (0..=deg).map(|a| legendre_orthonormal(a, t)).collect();
        for a in 0..=deg {
            for b in a..=deg {
                plain[a][b] += 0.5 * w * vals[a] * vals[b];
                weighted[a][b] += 0.5 * w * t * vals[a] * vals[b];
            }
        }
    }
    for a in 0..=deg {
        for b in 0..a {
            plain[a][b] = plain[b][a];
            weighted[a][b] = weighted[b][a];
        }
    }
    // The factors are orthonormal, so the plain table is the Kronecker
    // delta. Quadrature reproduces it only to machine precision; snapping
    // keeps that roundoff out of every product and makes G_0 exactly the
    // identity.
    for a in 0..=deg {
        for b in 0..=deg {
            let exact = if a == b { 1.0 } else { 0.0 };
            debug_assert!(
                (plain[a][b] - exact).abs() < 1e-12,
                "Gram entry ({a},{b}) = {} drifted from orthonormality",
                plain[a][b]
            );
            plain[a][b] = exact;
        }
    }

    let mut g_mats = Vec::with_capacity(basis.n + 1);
    for i in 0..=basis.n {
        let mut tri = TriMat::new((j, j));
        for r in 0..j {
            for s in 0..j {
                let mut value = 1.0;
                for m in 0..basis.n {
                    let (a, b) = (basis.indices[r][m], basis.indices[s][m]);
                    value *= if i >= 1 && m == i - 1 { weighted[a][b] } else { plain[a][b] };
                    if value == 0.0 {
                        break;
                    }
                }
                if value.abs() >= DROP_TOL {
                    tri.add_triplet(r, s, value);
                }
            }
        }
        g_mats.push(tri.to_csr());
    }

    let g_vecs = g_mats
        .iter()
        .map(|g| {
            let mut v = DVector::zeros(j);
            for (val, (r, c)) in g.iter() {
                if c == 0 {
                    v[r] = *val;
                }
            }
            v
        })
        .collect();

    StochasticMatrices { g_mats, g_vecs }
}

/// Moment diagonals for the risk term: G_γ = diag(1, 1+γ, …, 1+γ) and
/// M_0 = diag(0, 1, …, 1) under the orthonormal convention.
pub fn build_gamma_diagonal(basis: &ChaosBasis, gamma: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    if !(gamma >= 0.0) {
        return Err(Error::contract(format!("gamma must be >= 0, got {gamma}")));
    }
    let j = basis.dim();
    let mut g_gamma = DVector::from_element(j, 1.0 + gamma);
    let mut m0 = DVector::from_element(j, 1.0);
    g_gamma[0] = 1.0;
    m0[0] = 0.0;
    Ok((g_gamma, m0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dimension_formula() {
        for (n, q, expect) in [(3, 3, 20), (4, 3, 35), (5, 3, 56), (6, 3, 84), (7, 3, 120)] {
            assert_eq!(basis_dim(n, q), expect);
            assert_eq!(ChaosBasis::new(n, q).dim(), expect);
        }
    }

    #[test]
    fn trivial_index_sets() {
        assert_eq!(multi_index_set(1, 0), vec![vec![0]]);
        assert_eq!(multi_index_set(0, 3), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn graded_ordering_two_vars() {
        let set = multi_index_set(2, 2);
        assert_eq!(
            set,
            vec![
                vec![0, 0],
                vec![1, 0],
                vec![0, 1],
                vec![2, 0],
                vec![1, 1],
                vec![0, 2]
            ]
        );
        // Degree profile 1/2/3 over degrees 0/1/2.
        let profile: Vec<usize> = (0..=2)
            .map(|d| set.iter().filter(|i| i.iter().sum::<usize>() == d).count())
            .collect();
        assert_eq!(profile, vec![1, 2, 3]);
    }

    #[test]
    fn orthonormal_legendre_low_degrees() {
        assert_eq!(legendre_orthonormal(0, 0.37), 1.0);
        for t in [-1.2, 0.0, 0.9, XI_HALF_WIDTH] {
            assert_relative_eq!(legendre_orthonormal(1, t), t, epsilon = 1e-14);
            // Degree two in closed form: √5 (t² - 1) / 2.
            assert_relative_eq!(
                legendre_orthonormal(2, t),
                5f64.sqrt() * (t * t - 1.0) / 2.0,
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn orthonormality_under_quadrature_oracle() {
        // 30-point Gauss over the uniform density on [-√3,√3].
        let (xs, ws) = gauss_legendre(30);
        for a in 0..=4usize {
            for b in 0..=4usize {
                let mut acc = 0.0;
                for (x, w) in xs.iter().zip(&ws) {
                    let t = XI_HALF_WIDTH * x;
                    acc += 0.5 * w * legendre_orthonormal(a, t) * legendre_orthonormal(b, t);
                }
                let expect = if a == b { 1.0 } else { 0.0 };
                assert_relative_eq!(acc, expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn g0_is_identity_exactly() {
        let basis = ChaosBasis::new(3, 3);
        let mats = build_stochastic_matrices(&basis);
        let g0 = &mats.g_mats[0];
        assert_eq!(g0.nnz(), basis.dim());
        for (val, (r, c)) in g0.iter() {
            assert_eq!(r, c);
            assert_eq!(*val, 1.0);
        }
    }

    #[test]
    fn g1_scalar_entry_is_unit_variance() {
        let basis = ChaosBasis::new(1, 2);
        let mats = build_stochastic_matrices(&basis);
        // ⟨ξ · 1 · ξ⟩ = Var(ξ) = 1.
        let g1 = mats.g_mats[1].to_dense();
        assert_relative_eq!(g1[[0, 1]], 1.0, epsilon = 1e-13);
        assert_relative_eq!(g1[[1, 0]], 1.0, epsilon = 1e-13);
        // ⟨ξ p_1 p_2⟩ = 2/√5 by direct moment evaluation of the uniform law.
        assert_relative_eq!(g1[[1, 2]], 2.0 / 5f64.sqrt(), epsilon = 1e-13);
        assert_relative_eq!(g1[[0, 2]], 0.0, epsilon = 1e-13);
    }

    /// Nonzero pattern: entries exactly where indices differ by one in
    /// coordinate i and agree elsewhere.
    fn adjacency(a: &[usize], b: &[usize], coord: usize) -> bool {
        a.iter().zip(b).enumerate().all(|(m, (&x, &y))| {
            if m == coord {
                x.abs_diff(y) == 1
            } else {
                x == y
            }
        })
    }

    #[test]
    fn structure_matches_adjacency_predicate() {
        let basis = ChaosBasis::new(3, 3);
        let mats = build_stochastic_matrices(&basis);
        for i in 1..=basis.n {
            let g = &mats.g_mats[i];
            for r in 0..basis.dim() {
                let row_nnz = g.outer_view(r).map_or(0, |row| row.nnz());
                assert!(row_nnz <= 2, "row {r} of G_{i} has {row_nnz} nonzeros");
            }
            for (val, (r, s)) in g.iter() {
                assert!(
                    adjacency(&basis.indices[r], &basis.indices[s], i - 1),
                    "G_{i}({r},{s}) = {val} violates the neighbor structure"
                );
            }
            // Converse: every adjacent pair has a nonzero entry.
            let dense = g.to_dense();
            for r in 0..basis.dim() {
                for s in 0..basis.dim() {
                    if adjacency(&basis.indices[r], &basis.indices[s], i - 1) {
                        assert!(dense[[r, s]].abs() > 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn symmetry_and_first_column() {
        let basis = ChaosBasis::new(2, 3);
        let mats = build_stochastic_matrices(&basis);
        for i in 0..=basis.n {
            let dense = mats.g_mats[i].to_dense();
            for r in 0..basis.dim() {
                for s in 0..basis.dim() {
                    assert_eq!(dense[[r, s]], dense[[s, r]], "G_{i} must be symmetric");
                }
                assert_eq!(mats.g_vecs[i][r], dense[[r, 0]], "g_{i} must be G_{i} e_0");
            }
        }
    }

    #[test]
    fn quadrature_independence() {
        let basis = ChaosBasis::new(2, 3);
        let coarse = build_stochastic_matrices_with_points(&basis, basis.q + 2);
        let fine = build_stochastic_matrices_with_points(&basis, 2 * basis.q + 4);
        for (a, b) in coarse.g_mats.iter().zip(&fine.g_mats) {
            let d = (a.to_dense() - b.to_dense()).iter().fold(0.0, |m: f64, v| m.max(v.abs()));
            assert!(d <= 1e-13, "entry drift {d} under quadrature refinement");
        }
    }

    #[test]
    fn recurrence_coefficients_closed_form() {
        // ⟨t p_a p_{a+1}⟩ = √3 (a+1) / √((2a+1)(2a+3)) for the scaled basis.
        let basis = ChaosBasis::new(1, 5);
        let mats = build_stochastic_matrices(&basis);
        let g1 = mats.g_mats[1].to_dense();
        for a in 0..5usize {
            let expect =
                3f64.sqrt() * (a as f64 + 1.0) / (((2 * a + 1) * (2 * a + 3)) as f64).sqrt();
            assert_relative_eq!(g1[[a, a + 1]], expect, epsilon = 1e-13);
        }
    }

    #[test]
    fn gamma_diagonals() {
        let basis = ChaosBasis::new(3, 3);
        let (g_gamma, m0) = build_gamma_diagonal(&basis, 0.0).unwrap();
        assert!(g_gamma.iter().all(|&v| v == 1.0));
        assert_eq!(m0[0], 0.0);
        assert!(m0.iter().skip(1).all(|&v| v == 1.0));

        let (g_gamma, _) = build_gamma_diagonal(&basis, 1.0).unwrap();
        assert_eq!(g_gamma[0], 1.0);
        assert!(g_gamma.iter().skip(1).all(|&v| v == 2.0));
        assert_eq!(g_gamma.len(), 20);

        assert!(build_gamma_diagonal(&basis, -0.5).is_err());
    }

    #[test]
    fn basis_eval_matches_factor_product() {
        let basis = ChaosBasis::new(2, 2);
        let xi = [0.4, -1.1];
        // ψ for index (1,1) is ξ_1 ξ_2.
        let r = basis.indices.iter().position(|i| i == &vec![1, 1]).unwrap();
        assert_relative_eq!(basis.eval(r, &xi).unwrap(), 0.4 * -1.1, epsilon = 1e-14);
        assert!(basis.eval(0, &[0.0]).is_err());
    }
}
