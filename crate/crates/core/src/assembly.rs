//! Symmetric interior penalty DG assembly on linear elements.
//!
//! For a diffusion field a, velocity field b and penalty σ the bilinear form
//! is
//!
//!   a_h(y, v) = Σ_K ∫_K (a ∇y·∇v + (b·∇y) v)
//!             - Σ_E ∫_E ({a ∇y}·[v] + {a ∇v}·[y])
//!             + Σ_E (σ/h_E) ∫_E [y]·[v]
//!             + Σ_K ∫_{∂K⁻\∂D} b·n (y^e - y) v
//!             - Σ_K ∫_{∂K⁻∩∂D⁻} b·n y v,
//!
//! over interior and boundary edges alike, with the boundary convention
//! {v} = v, [v] = v n. The mean-coefficient matrix carries the penalty
//! term; fluctuation-mode matrices consist solely of terms weighted by the
//! mode's coefficient fields, so a vanishing fluctuation yields a zero
//! matrix. Loads collect the volume source plus the Dirichlet penalty,
//! consistency and inflow terms, with the same mean/fluctuation split.
//!
//! Row index = test function, column index = trial function, so the
//! assembled K applied to a coefficient vector evaluates the form against
//! every test function.

use crate::error::{Error, Result};
use crate::fields::{ScalarField, VectorField};
use crate::mesh::{InflowFlags, Mesh};
use crate::quadrature::{EDGE_3, TRIANGLE_6};
use nalgebra::DVector;
use sprs::{CsMat, TriMat};

/// Interior-penalty weights (σ/h_E on each edge class).
#[derive(Debug, Clone, Copy)]
pub struct Penalty {
    pub interior: f64,
    pub boundary: f64,
}

impl Default for Penalty {
    fn default() -> Self {
        Penalty { interior: 6.0, boundary: 12.0 }
    }
}

/// Everything the Kronecker system needs from the spatial discretization:
/// mass matrix, mean and fluctuation stiffness matrices K_0..K_N, loads
/// f_0..f_N, and the desired-state load vector.
#[derive(Debug, Clone)]
pub struct DeterministicBlocks {
    pub mass: CsMat<f64>,
    pub stiffness: Vec<CsMat<f64>>,
    pub loads: Vec<DVector<f64>>,
    pub desired_load: DVector<f64>,
    pub penalty: Penalty,
    pub viscosity: f64,
}

impl DeterministicBlocks {
    pub fn n_dofs(&self) -> usize {
        self.mass.rows()
    }

    /// Number of fluctuation modes (stiffness list holds N+1 matrices).
    pub fn n_modes(&self) -> usize {
        self.stiffness.len() - 1
    }
}

/// Mass matrix: block diagonal with the exact local linear-element block
/// (area/12)·[[2,1,1],[1,2,1],[1,1,2]].
pub fn assemble_mass(mesh: &Mesh) -> CsMat<f64> {
    let nd = mesh.dof_count();
    let mut tri = TriMat::new((nd, nd));
    for t in 0..mesh.triangle_count() {
        let scale = mesh.area(t) / 12.0;
        for l in 0..3 {
            for m in 0..3 {
                let v = scale * if l == m { 2.0 } else { 1.0 };
                tri.add_triplet(mesh.dof(t, l), mesh.dof(t, m), v);
            }
        }
    }
    tri.to_csr()
}

/// Exact inverse of the local mass block: (3/area)·[[3,-1,-1],[-1,3,-1],[-1,-1,3]].
pub fn local_mass_inverse(area: f64) -> [[f64; 3]; 3] {
    let s = 3.0 / area;
    [[3.0 * s, -s, -s], [-s, 3.0 * s, -s], [-s, -s, 3.0 * s]]
}

fn check_finite(value: f64, what: &str, x: [f64; 2]) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::numeric(format!(
            "{what} is {value} at quadrature point ({}, {})",
            x[0], x[1]
        )))
    }
}

fn check_finite2(value: [f64; 2], what: &str, x: [f64; 2]) -> Result<[f64; 2]> {
    check_finite(value[0], what, x)?;
    check_finite(value[1], what, x)?;
    Ok(value)
}

/// Points and basis traces of one triangle side along an edge from vertex
/// `a` to vertex `b`.
struct EdgeTrace {
    /// Quadrature points on the edge (shared by both sides).
    points: [[f64; 2]; 3],
    /// Basis values of the side's three local functions at each point.
    basis: [[f64; 3]; 3],
}

fn edge_trace(mesh: &Mesh, tri: usize, a: [f64; 2], b: [f64; 2]) -> EdgeTrace {
    let mut points = [[0.0; 2]; 3];
    let mut basis = [[0.0; 3]; 3];
    for (q, &(t, _)) in EDGE_3.iter().enumerate() {
        let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        points[q] = x;
        basis[q] = mesh.barycentric(tri, x);
    }
    EdgeTrace { points, basis }
}

/// Assemble one stiffness matrix. `penalty: Some` builds a mean-coefficient
/// matrix (with the coefficient-free jump penalty); `None` builds a
/// fluctuation-mode matrix where every term carries the given fields.
/// Inflow sets are fixed by the caller (classified once from the mean
/// velocity and reused for every mode).
pub fn assemble_stiffness(
    mesh: &Mesh,
    diffusion: &dyn ScalarField,
    convection: &dyn VectorField,
    inflow: &InflowFlags,
    penalty: Option<Penalty>,
) -> Result<CsMat<f64>> {
    let nd = mesh.dof_count();
    let mut out = TriMat::new((nd, nd));
    let push = |tri: &mut TriMat<f64>, r: usize, s: usize, v: f64| {
        if v != 0.0 {
            tri.add_triplet(s, r, v); // row = test s, column = trial r
        }
    };

    // Volume terms: a ∇φ_r·∇φ_s + (b·∇φ_r) φ_s.
    for t in 0..mesh.triangle_count() {
        let grads = *mesh.gradients(t);
        let area = mesh.area(t);
        let verts = mesh.triangles[t];
        let p: Vec<[f64; 2]> = verts.iter().map(|&v| mesh.vertices[v]).collect();
        let mut a_int = 0.0;
        let mut conv = [[0.0; 3]; 3];
        for &(l1, l2, l3, w) in &TRIANGLE_6 {
            let x = [
                l1 * p[0][0] + l2 * p[1][0] + l3 * p[2][0],
                l1 * p[0][1] + l2 * p[1][1] + l3 * p[2][1],
            ];
            let lam = [l1, l2, l3];
            let a = check_finite(diffusion.eval(x), "diffusion coefficient", x)?;
            let b = check_finite2(convection.eval(x), "convection coefficient", x)?;
            a_int += w * area * a;
            for r in 0..3 {
                let br = b[0] * grads[r][0] + b[1] * grads[r][1];
                for s in 0..3 {
                    conv[s][r] += w * area * br * lam[s];
                }
            }
        }
        for r in 0..3 {
            for s in 0..3 {
                let diff = a_int * (grads[r][0] * grads[s][0] + grads[r][1] * grads[s][1]);
                push(&mut out, mesh.dof(t, r), mesh.dof(t, s), diff + conv[s][r]);
            }
        }
    }

    // Interior edges: consistency, penalty, upwind.
    for (e_idx, e) in mesh.interior_edges.iter().enumerate() {
        let (t0, t1) = (e.tris[0], e.tris[1]);
        let (va, vb) = (mesh.vertices[e.verts[0]], mesh.vertices[e.verts[1]]);
        let n = e.normal;
        let traces = [edge_trace(mesh, t0, va, vb), edge_trace(mesh, t1, va, vb)];
        let grads = [*mesh.gradients(t0), *mesh.gradients(t1)];
        let tris = [t0, t1];
        // Jump sign: +1 for the side the normal leaves, -1 for the other.
        let jump_sign = [1.0, -1.0];

        for (q, &(_, wq)) in EDGE_3.iter().enumerate() {
            let x = traces[0].points[q];
            let w = wq * e.length;
            let a = check_finite(diffusion.eval(x), "diffusion coefficient", x)?;
            let b = check_finite2(convection.eval(x), "convection coefficient", x)?;

            // Consistency and penalty couple all 6 local functions.
            for side_r in 0..2 {
                for lr in 0..3 {
                    let r = mesh.dof(tris[side_r], lr);
                    let avg_r = 0.5 * a * (grads[side_r][lr][0] * n[0] + grads[side_r][lr][1] * n[1]);
                    let jmp_r = jump_sign[side_r] * traces[side_r].basis[q][lr];
                    for side_s in 0..2 {
                        for ls in 0..3 {
                            let s = mesh.dof(tris[side_s], ls);
                            let avg_s = 0.5
                                * a
                                * (grads[side_s][ls][0] * n[0] + grads[side_s][ls][1] * n[1]);
                            let jmp_s = jump_sign[side_s] * traces[side_s].basis[q][ls];
                            let mut v = -w * (avg_r * jmp_s + avg_s * jmp_r);
                            if let Some(pen) = penalty {
                                v += w * pen.interior / e.length * jmp_r * jmp_s;
                            }
                            push(&mut out, r, s, v);
                        }
                    }
                }
            }

            // Upwind jump on the inflow side: b·n_K (φ_r^e - φ_r) φ_s with
            // rows and the -φ_r column on the inflow element K, the +φ_r^e
            // column on its neighbor.
            if let Some(side_k) = inflow.interior[e_idx] {
                let side_e = 1 - side_k;
                let sign = if side_k == 0 { 1.0 } else { -1.0 };
                let bn = sign * (b[0] * n[0] + b[1] * n[1]);
                for ls in 0..3 {
                    let s = mesh.dof(tris[side_k], ls);
                    let vs = traces[side_k].basis[q][ls];
                    for lr in 0..3 {
                        let r_own = mesh.dof(tris[side_k], lr);
                        let r_ext = mesh.dof(tris[side_e], lr);
                        push(&mut out, r_ext, s, w * bn * traces[side_e].basis[q][lr] * vs);
                        push(&mut out, r_own, s, -w * bn * traces[side_k].basis[q][lr] * vs);
                    }
                }
            }
        }
    }

    // Boundary edges: single-sided consistency, penalty, inflow term.
    for (e_idx, e) in mesh.boundary_edges.iter().enumerate() {
        let t = e.tri;
        let (va, vb) = (mesh.vertices[e.verts[0]], mesh.vertices[e.verts[1]]);
        let n = e.normal;
        let trace = edge_trace(mesh, t, va, vb);
        let grads = *mesh.gradients(t);
        for (q, &(_, wq)) in EDGE_3.iter().enumerate() {
            let x = trace.points[q];
            let w = wq * e.length;
            let a = check_finite(diffusion.eval(x), "diffusion coefficient", x)?;
            let b = check_finite2(convection.eval(x), "convection coefficient", x)?;
            let bn = b[0] * n[0] + b[1] * n[1];
            for lr in 0..3 {
                let r = mesh.dof(t, lr);
                let flux_r = a * (grads[lr][0] * n[0] + grads[lr][1] * n[1]);
                let tr_r = trace.basis[q][lr];
                for ls in 0..3 {
                    let s = mesh.dof(t, ls);
                    let flux_s = a * (grads[ls][0] * n[0] + grads[ls][1] * n[1]);
                    let tr_s = trace.basis[q][ls];
                    let mut v = -w * (flux_r * tr_s + flux_s * tr_r);
                    if let Some(pen) = penalty {
                        v += w * pen.boundary / e.length * tr_r * tr_s;
                    }
                    if inflow.boundary[e_idx] {
                        v -= w * bn * tr_r * tr_s;
                    }
                    push(&mut out, r, s, v);
                }
            }
        }
    }

    Ok(out.to_csr())
}

/// Assemble one load vector. `source: Some` and `boundary_penalty: Some`
/// build the mean load (volume source + Dirichlet penalty + consistency +
/// inflow); mode loads pass `None` for both and keep only the terms carrying
/// their fluctuation fields.
pub fn assemble_load(
    mesh: &Mesh,
    source: Option<&dyn ScalarField>,
    dirichlet: &dyn ScalarField,
    diffusion: &dyn ScalarField,
    convection: &dyn VectorField,
    inflow: &InflowFlags,
    boundary_penalty: Option<f64>,
) -> Result<DVector<f64>> {
    let mut f = DVector::zeros(mesh.dof_count());
    if let Some(src) = source {
        f += assemble_volume_load(mesh, src)?;
    }
    for (e_idx, e) in mesh.boundary_edges.iter().enumerate() {
        let t = e.tri;
        let (va, vb) = (mesh.vertices[e.verts[0]], mesh.vertices[e.verts[1]]);
        let n = e.normal;
        let trace = edge_trace(mesh, t, va, vb);
        let grads = *mesh.gradients(t);
        for (q, &(_, wq)) in EDGE_3.iter().enumerate() {
            let x = trace.points[q];
            let w = wq * e.length;
            let yd = check_finite(dirichlet.eval(x), "Dirichlet datum", x)?;
            let a = check_finite(diffusion.eval(x), "diffusion coefficient", x)?;
            let b = check_finite2(convection.eval(x), "convection coefficient", x)?;
            let bn = b[0] * n[0] + b[1] * n[1];
            for ls in 0..3 {
                let s = mesh.dof(t, ls);
                let tr_s = trace.basis[q][ls];
                let flux_s = a * (grads[ls][0] * n[0] + grads[ls][1] * n[1]);
                let mut v = -w * yd * flux_s;
                if let Some(sigma_b) = boundary_penalty {
                    v += w * sigma_b / e.length * yd * tr_s;
                }
                if inflow.boundary[e_idx] {
                    v -= w * bn * yd * tr_s;
                }
                f[s] += v;
            }
        }
    }
    Ok(f)
}

/// L² load of a scalar field: entries ∫ g φ_s.
pub fn assemble_volume_load(mesh: &Mesh, g: &dyn ScalarField) -> Result<DVector<f64>> {
    let mut f = DVector::zeros(mesh.dof_count());
    for t in 0..mesh.triangle_count() {
        let area = mesh.area(t);
        let verts = mesh.triangles[t];
        let p: Vec<[f64; 2]> = verts.iter().map(|&v| mesh.vertices[v]).collect();
        for &(l1, l2, l3, w) in &TRIANGLE_6 {
            let x = [
                l1 * p[0][0] + l2 * p[1][0] + l3 * p[2][0],
                l1 * p[0][1] + l2 * p[1][1] + l3 * p[2][1],
            ];
            let gval = check_finite(g.eval(x), "load integrand", x)?;
            let lam = [l1, l2, l3];
            for s in 0..3 {
                f[mesh.dof(t, s)] += w * area * gval * lam[s];
            }
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{constant, constant_vector};
    use crate::mesh::{classify_inflow, Rect};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_mesh(level: u32) -> Mesh {
        Mesh::uniform(Rect::unit_centered(), level).unwrap()
    }

    fn to_dense(m: &CsMat<f64>) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(m.rows(), m.cols());
        for (v, (r, c)) in m.iter() {
            d[(r, c)] += *v;
        }
        d
    }

    #[test]
    fn mass_local_block_and_row_sums() {
        let mesh = unit_mesh(0);
        let m = to_dense(&assemble_mass(&mesh));
        for t in 0..2 {
            let scale = 2.0 / 12.0; // area 2
            for l in 0..3 {
                for k in 0..3 {
                    let expect = scale * if l == k { 2.0 } else { 1.0 };
                    assert_relative_eq!(m[(3 * t + l, 3 * t + k)], expect, epsilon = 1e-15);
                }
            }
        }
        let mesh = unit_mesh(2);
        let m = assemble_mass(&mesh);
        let total: f64 = m.iter().map(|(v, _)| v).sum();
        assert_relative_eq!(total, 4.0, epsilon = 1e-13);
        let md = to_dense(&m);
        assert_eq!((&md - md.transpose()).abs().max(), 0.0);
    }

    #[test]
    fn local_mass_inverse_is_exact() {
        let area = 0.37;
        let inv = local_mass_inverse(area);
        let scale = area / 12.0;
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    let m_kj = scale * if k == j { 2.0 } else { 1.0 };
                    acc += inv[i][k] * m_kj;
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(acc, expect, epsilon = 1e-13);
            }
        }
    }

    fn still() -> impl crate::fields::VectorField {
        constant_vector([0.0, 0.0])
    }

    #[test]
    fn pure_diffusion_matrix_is_spd() {
        let mesh = unit_mesh(0);
        let inflow = classify_inflow(&mesh, &still());
        let k0 = assemble_stiffness(
            &mesh,
            &constant(1.0),
            &still(),
            &inflow,
            Some(Penalty::default()),
        )
        .unwrap();
        let kd = to_dense(&k0);
        assert!((&kd - kd.transpose()).abs().max() < 1e-12);
        let eigs = kd.symmetric_eigen().eigenvalues;
        assert!(eigs.min() > 0.0, "smallest eigenvalue {}", eigs.min());
    }

    #[test]
    fn vanished_fluctuation_gives_zero_matrix_and_load() {
        let mesh = unit_mesh(1);
        let up = constant_vector([0.0, 1.0]);
        let inflow = classify_inflow(&mesh, &up);
        let k = assemble_stiffness(&mesh, &constant(0.0), &still(), &inflow, None).unwrap();
        assert_eq!(k.nnz(), 0);
        let f = assemble_load(&mesh, None, &constant(0.0), &constant(0.0), &still(), &inflow, None)
            .unwrap();
        assert_eq!(f.amax(), 0.0);
    }

    #[test]
    fn entries_couple_only_neighboring_elements() {
        let mesh = unit_mesh(1);
        let b = constant_vector([0.4, 1.0]);
        let inflow = classify_inflow(&mesh, &b);
        let k0 =
            assemble_stiffness(&mesh, &constant(1.0), &b, &inflow, Some(Penalty::default()))
                .unwrap();
        let share_edge = |t0: usize, t1: usize| {
            mesh.interior_edges
                .iter()
                .any(|e| e.tris == [t0, t1] || e.tris == [t1, t0])
        };
        for (_, (r, c)) in k0.iter() {
            let (tr, tc) = (r / 3, c / 3);
            assert!(tr == tc || share_edge(tr, tc), "coupling {tr} with {tc}");
        }
    }

    #[test]
    fn coercivity_of_the_mean_form() {
        let mesh = unit_mesh(2);
        let b = constant_vector([0.0, 1.0]);
        let inflow = classify_inflow(&mesh, &b);
        let k0 =
            assemble_stiffness(&mesh, &constant(1.0), &b, &inflow, Some(Penalty::default()))
                .unwrap();
        let kd = to_dense(&k0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let x = DVector::from_fn(kd.nrows(), |_, _| rng.random_range(-1.0..1.0));
            let xkx = x.dot(&(&kd * &x));
            assert!(xkx > 0.0, "indefinite direction found: {xkx}");
        }
    }

    #[test]
    fn constant_state_leaves_only_the_inflow_boundary_term() {
        // A mode matrix with zero diffusion fluctuation: applied to the
        // all-ones vector, volume convection (b·∇1 = 0) and the upwind jump
        // (1^e - 1 = 0) drop out, leaving -∫_{∂D⁻} b·n φ_s.
        let mesh = unit_mesh(1);
        let b = constant_vector([0.0, 1.0]);
        let inflow = classify_inflow(&mesh, &b);
        let k = assemble_stiffness(&mesh, &constant(0.0), &b, &inflow, None).unwrap();
        let ones = DVector::from_element(mesh.dof_count(), 1.0);
        let got = to_dense(&k) * ones;
        // Each inflow edge contributes length/2 to its two endpoint DOFs
        // (b·n = -1 on the bottom).
        let mut expect = DVector::zeros(mesh.dof_count());
        for (e_idx, e) in mesh.boundary_edges.iter().enumerate() {
            if !inflow.boundary[e_idx] {
                continue;
            }
            for l in 0..3 {
                let v = mesh.triangles[e.tri][l];
                if e.verts.contains(&v) {
                    expect[mesh.dof(e.tri, l)] += e.length / 2.0;
                }
            }
        }
        assert!((got - expect).amax() < 1e-13);
    }

    #[test]
    fn upwind_term_vanishes_for_continuous_states() {
        // For a globally affine function (continuous across edges) the jump
        // terms drop out; a_h reduces to volume + boundary terms, which for
        // y = x_2 and pure convection b = (0,1) gives
        // a_h(y, v) = ∫ v dx - ∫_{∂D⁻} b·n y v ds.
        let mesh = unit_mesh(2);
        let b = constant_vector([0.0, 1.0]);
        let inflow = classify_inflow(&mesh, &b);
        let k = assemble_stiffness(&mesh, &constant(0.0), &b, &inflow, None).unwrap();
        let mut y = DVector::zeros(mesh.dof_count());
        for t in 0..mesh.triangle_count() {
            for l in 0..3 {
                y[mesh.dof(t, l)] = mesh.vertices[mesh.triangles[t][l]][1];
            }
        }
        let got = to_dense(&k) * y;
        let volume = assemble_volume_load(&mesh, &constant(1.0)).unwrap();
        let mut expect = volume;
        for (e_idx, e) in mesh.boundary_edges.iter().enumerate() {
            if !inflow.boundary[e_idx] {
                continue;
            }
            // y = -1 and b·n = -1 on the inflow boundary.
            for l in 0..3 {
                let v = mesh.triangles[e.tri][l];
                if e.verts.contains(&v) {
                    expect[mesh.dof(e.tri, l)] -= e.length / 2.0;
                }
            }
        }
        assert!((got - expect).amax() < 1e-12);
    }

    fn solve_sparse(k: &CsMat<f64>, f: &DVector<f64>) -> DVector<f64> {
        use faer::linalg::solvers::Solve;
        use faer::sparse::{SparseColMat, Triplet};
        let trips: Vec<Triplet<usize, usize, f64>> =
            k.iter().map(|(v, (r, c))| Triplet::new(r, c, *v)).collect();
        let a = SparseColMat::try_new_from_triplets(k.rows(), k.cols(), &trips).unwrap();
        let lu = a.sp_lu().unwrap();
        let rhs = faer::Mat::from_fn(f.len(), 1, |i, _| f[i]);
        let sol = lu.solve(rhs);
        DVector::from_fn(f.len(), |i, _| sol[(i, 0)])
    }

    /// Boundary-value recovery: Dirichlet data enters weakly, so the trace
    /// error at boundary midpoints must shrink under refinement.
    #[test]
    fn dirichlet_trace_error_decreases_with_h() {
        let y_db = |x: [f64; 2]| -> f64 {
            if x[1] <= -1.0 + 1e-12 {
                x[0]
            } else if x[1] >= 1.0 - 1e-12 {
                0.0
            } else if x[0] <= -1.0 + 1e-12 {
                -1.0
            } else {
                1.0
            }
        };
        let b = constant_vector([0.0, 1.0]);
        let mut errors = Vec::new();
        for level in [2, 3] {
            let mesh = unit_mesh(level);
            let inflow = classify_inflow(&mesh, &b);
            let k0 = assemble_stiffness(
                &mesh,
                &constant(1.0),
                &b,
                &inflow,
                Some(Penalty::default()),
            )
            .unwrap();
            let f0 = assemble_load(
                &mesh,
                Some(&constant(0.0)),
                &y_db,
                &constant(1.0),
                &b,
                &inflow,
                Some(Penalty::default().boundary),
            )
            .unwrap();
            let y = solve_sparse(&k0, &f0);
            // Length-weighted L² norm over boundary midpoints; the datum is
            // discontinuous at two corners, so pointwise max cannot converge
            // but the trace norm does.
            let mut err: f64 = 0.0;
            for e in &mesh.boundary_edges {
                let (va, vb) = (mesh.vertices[e.verts[0]], mesh.vertices[e.verts[1]]);
                let mid = [0.5 * (va[0] + vb[0]), 0.5 * (va[1] + vb[1])];
                let yh = mesh.eval_dg(y.as_slice(), e.tri, mid);
                err += e.length * (yh - y_db(mid)).powi(2);
            }
            errors.push(err.sqrt());
        }
        assert!(
            errors[1] < 0.8 * errors[0],
            "trace errors did not shrink: {errors:?}"
        );
    }

    /// Full solve against a manufactured smooth solution: the L² error of
    /// the SIPG solution must converge at second order.
    #[test]
    fn manufactured_solution_l2_rate_is_quadratic() {
        use std::f64::consts::PI;
        let exact = |x: [f64; 2]| (PI * x[0]).sin() * (PI * x[1]).sin();
        // -Δy + b·∇y with b = (0,1).
        let source = move |x: [f64; 2]| {
            2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin()
                + PI * (PI * x[0]).sin() * (PI * x[1]).cos()
        };
        let b = constant_vector([0.0, 1.0]);
        let mut errors = Vec::new();
        for level in [2, 3, 4] {
            let mesh = unit_mesh(level);
            let inflow = classify_inflow(&mesh, &b);
            let k0 = assemble_stiffness(
                &mesh,
                &constant(1.0),
                &b,
                &inflow,
                Some(Penalty::default()),
            )
            .unwrap();
            let f0 = assemble_load(
                &mesh,
                Some(&source),
                &constant(0.0),
                &constant(1.0),
                &b,
                &inflow,
                Some(Penalty::default().boundary),
            )
            .unwrap();
            let y = solve_sparse(&k0, &f0);
            let mut e = DVector::zeros(mesh.dof_count());
            for t in 0..mesh.triangle_count() {
                for l in 0..3 {
                    e[mesh.dof(t, l)] = y[mesh.dof(t, l)] - exact(mesh.vertices[mesh.triangles[t][l]]);
                }
            }
            let m = assemble_mass(&mesh);
            let me = to_dense(&m) * &e;
            errors.push(e.dot(&me).sqrt());
        }
        let rate1 = (errors[0] / errors[1]).log2();
        let rate2 = (errors[1] / errors[2]).log2();
        assert!(rate1 > 1.8 && rate2 > 1.8, "L2 rates {rate1:.2}, {rate2:.2} from {errors:?}");
    }

    #[test]
    fn mode_load_vanishes_without_data_and_mean_load_does_not() {
        let mesh = unit_mesh(1);
        let b = constant_vector([0.0, 1.0]);
        let inflow = classify_inflow(&mesh, &b);
        // Homogeneous Dirichlet data with any fields: every load term
        // carries y_DB or f.
        let f_i = assemble_load(&mesh, None, &constant(0.0), &constant(0.3), &b, &inflow, None)
            .unwrap();
        assert_eq!(f_i.amax(), 0.0);
        // Nonzero boundary data produces a load without a volume source.
        let y_db = |x: [f64; 2]| -> f64 {
            if x[1] <= -1.0 + 1e-12 {
                x[0]
            } else if x[1] >= 1.0 - 1e-12 {
                0.0
            } else if x[0] <= -1.0 + 1e-12 {
                -1.0
            } else {
                1.0
            }
        };
        let f0 = assemble_load(
            &mesh,
            Some(&constant(0.0)),
            &y_db,
            &constant(1.0),
            &b,
            &inflow,
            Some(Penalty::default().boundary),
        )
        .unwrap();
        assert!(f0.amax() > 0.1);
    }

    #[test]
    fn non_finite_coefficient_is_reported_with_its_location() {
        let mesh = unit_mesh(0);
        let inflow = classify_inflow(&mesh, &still());
        let bad = |x: [f64; 2]| if x[0] > 0.0 { f64::NAN } else { 1.0 };
        let err = assemble_stiffness(&mesh, &bad, &still(), &inflow, Some(Penalty::default()))
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("quadrature point"), "unexpected message: {msg}");
    }

    #[test]
    fn transposed_matrix_swaps_the_form_arguments() {
        let mesh = unit_mesh(1);
        let b = constant_vector([0.3, 0.9]);
        let inflow = classify_inflow(&mesh, &b);
        let k =
            assemble_stiffness(&mesh, &constant(1.0), &b, &inflow, Some(Penalty::default()))
                .unwrap();
        let kd = to_dense(&k);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let x = DVector::from_fn(kd.nrows(), |_, _| rng.random_range(-1.0..1.0));
            let y = DVector::from_fn(kd.nrows(), |_, _| rng.random_range(-1.0..1.0));
            let lhs = x.dot(&(&kd * &y));
            let rhs = y.dot(&(kd.transpose() * &x));
            assert_relative_eq!(lhs, rhs, epsilon = 1e-12, max_relative = 1e-12);
        }
    }
}
