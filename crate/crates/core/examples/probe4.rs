use faer::dyn_stack::{MemBuffer, MemStack, StackReq};
use faer::reborrow::*;
use faer::sparse::linalg::cholesky::{simplicial, supernodal};
use faer::sparse::linalg::{amd, SymbolicSupernodalParams};
use faer::sparse::{SparseColMat, SymbolicSparseColMat, Triplet};
use faer::Par;
use sgroc_core::chaos::build_gamma_diagonal;

use sgroc_core::problems::{Case, ProblemConfig};
use sgroc_core::Mesh;
use sprs::CsMat;

fn rss() -> usize {
    let status = std::fs::read_to_string("/proc/self/status").unwrap();
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmRSS:") {
            return rest.trim().trim_end_matches(" kB").parse().unwrap();
        }
    }
    0
}

fn csr_transpose(m: &CsMat<f64>) -> CsMat<f64> {
    let mut t = sprs::TriMat::new((m.cols(), m.rows()));
    for (&v, (r, c)) in m.iter() {
        t.add_triplet(c, r, v);
    }
    t.to_csr()
}

fn nd_tris(mesh: &Mesh, ids: Vec<usize>, w: f64, origin: [f64; 2], out: &mut Vec<usize>) {
    if ids.len() <= 8 {
        out.extend(ids.iter());
        return;
    }
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &t in &ids {
        let c = mesh.centroid(t);
        xmin = xmin.min(c[0]);
        xmax = xmax.max(c[0]);
        ymin = ymin.min(c[1]);
        ymax = ymax.max(c[1]);
    }
    let split_x = (xmax - xmin) >= (ymax - ymin);
    let (lo, hi, org) = if split_x {
        (xmin, xmax, origin[0])
    } else {
        (ymin, ymax, origin[1])
    };
    if hi - lo <= 1.5 * w {
        out.extend(ids.iter());
        return;
    }
    let mid = 0.5 * (lo + hi);
    let cut = org + ((mid - org) / w).floor() * w;
    let mut left = Vec::new();
    let mut sep = Vec::new();
    let mut right = Vec::new();
    for &t in &ids {
        let c = mesh.centroid(t);
        let v = if split_x { c[0] } else { c[1] };
        if v < cut {
            left.push(t);
        } else if v < cut + w {
            sep.push(t);
        } else {
            right.push(t);
        }
    }
    if left.is_empty() || right.is_empty() {
        out.extend(ids.iter());
        return;
    }
    nd_tris(mesh, left, w, origin, out);
    nd_tris(mesh, right, w, origin, out);
    out.extend(sep.iter());
}

fn main() {
    let level: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let which = std::env::args().nth(2).unwrap_or_else(|| "kkt".into());
    let ordering = std::env::args().nth(3).unwrap_or_else(|| "amd".into());
    let numeric = std::env::args().nth(4).map(|s| s == "numeric").unwrap_or(false);
    let config = ProblemConfig { level, ..ProblemConfig::example(Case::Diffusion) };
    let problem = sgroc_core::problems::Problem::build(config.clone()).unwrap();
    println!("after prepare: {} MB", rss() / 1024);

    let nd = problem.mesh.dof_count();
    let j = problem.basis.dim();
    let (g_gamma, _) = build_gamma_diagonal(&problem.basis, config.gamma).unwrap();
    let mu = config.mu;

    let t = std::time::Instant::now();
    let mut trips: Vec<Triplet<usize, usize, f64>> = Vec::new();
    let total;
    match which.as_str() {
        "schur" => {
            use sgroc_core::kkt::{Formulation, KktSystem};
            total = nd * j;
            let sys = KktSystem::from_problem(&problem, Formulation::StochasticControl).unwrap();
            let h = sys.materialize_state_schur().unwrap();
            println!("schur nnz {}", h.nnz());
            for (&v, (r, c)) in h.iter() {
                trips.push(Triplet::new(r, c, v));
            }
        }
        "forward" => {
            total = nd * j;
            let a = sgroc_core::kkt::materialize_state_operator(
                &problem.blocks,
                &problem.stochastic,
            )
            .unwrap();
            println!("forward nnz {}", a.nnz());
            for (&v, (r, c)) in a.iter() {
                trips.push(Triplet::new(r, c, v));
            }
        }
        _ => {
            total = 2 * nd * j;
            let index = |block: usize, mode: usize, dof: usize| dof * 2 * j + block * j + mode;
            let mut kron = |g: &CsMat<f64>, k: &CsMat<f64>, br: usize, bc: usize, s: f64| {
                for (&gv, (gr, gc)) in g.iter() {
                    for (&kv, (kr, kc)) in k.iter() {
                        trips.push(Triplet::new(index(br, gr, kr), index(bc, gc, kc), s * gv * kv));
                    }
                }
            };
            let mut gg = sprs::TriMat::new((j, j));
            for (i, &v) in g_gamma.iter().enumerate() {
                gg.add_triplet(i, i, v);
            }
            let gg: CsMat<f64> = gg.to_csr();
            kron(&gg, &problem.blocks.mass, 0, 0, 1.0);
            for (i, k) in problem.blocks.stiffness.iter().enumerate() {
                if k.nnz() == 0 {
                    continue;
                }
                let g = &problem.stochastic.g_mats[i];
                kron(g, k, 1, 0, -1.0);
                let (gt, kt) = (csr_transpose(g), csr_transpose(k));
                kron(&gt, &kt, 0, 1, -1.0);
            }
            let eye_j = CsMat::<f64>::eye(j);
            kron(&eye_j, &problem.blocks.mass, 1, 1, -1.0 / mu);
        }
    }
    let lower: Vec<Triplet<usize, usize, f64>> =
        trips.iter().copied().filter(|t| t.row >= t.col).collect();
    let a_lower = SparseColMat::<usize, f64>::try_new_from_triplets(total, total, &lower).unwrap();
    println!(
        "lower triangle {} rows, {} nnz: {} MB, {:.1}s",
        total,
        a_lower.compute_nnz(),
        rss() / 1024,
        t.elapsed().as_secs_f64()
    );

    let a_nnz = a_lower.compute_nnz();
    let (perm_fwd, perm_inv) = if ordering == "nd" {
        let w = problem.mesh.h() / std::f64::consts::SQRT_2;
        let ids: Vec<usize> = (0..problem.mesh.triangle_count()).collect();
        let mut tri_order = Vec::with_capacity(ids.len());
        nd_tris(&problem.mesh, ids, w, [-1.0, -1.0], &mut tri_order);
        assert_eq!(tri_order.len(), problem.mesh.triangle_count());
        let mut fwd = Vec::with_capacity(total);
        for &t in &tri_order {
            for local in 0..3 {
                let dof = problem.mesh.dof(t, local);
                for b in 0..2 {
                    for m in 0..j {
                        fwd.push(index(b, m, dof));
                    }
                }
            }
        }
        let mut inv = vec![0usize; total];
        for (new, &old) in fwd.iter().enumerate() {
            inv[old] = new;
        }
        (fwd, inv)
    } else {
        let mut fwd = vec![0usize; total];
        let mut inv = vec![0usize; total];
        let mut mem = MemBuffer::new(amd::order_scratch::<usize>(total, a_nnz));
        amd::order(
            &mut fwd,
            &mut inv,
            a_lower.symbolic(),
            amd::Control::default(),
            MemStack::new(&mut mem),
        )
        .unwrap();
        (fwd, inv)
    };
    let perm = unsafe { faer::perm::PermRef::new_unchecked(&perm_fwd, &perm_inv, total) };

    let t = std::time::Instant::now();
    let a_perm_lower = {
        let mut col_ptrs = vec![0usize; total + 1];
        let mut row_indices = vec![0usize; a_nnz];
        let mut values = vec![0.0f64; a_nnz];
        let mut mem =
            MemBuffer::new(faer::sparse::utils::permute_self_adjoint_scratch::<usize>(total));
        faer::sparse::utils::permute_self_adjoint_to_unsorted(
            &mut values,
            &mut col_ptrs,
            &mut row_indices,
            a_lower.rb(),
            perm,
            faer::Side::Lower,
            faer::Side::Lower,
            MemStack::new(&mut mem),
        );
        SparseColMat::<usize, f64>::new(
            unsafe {
                SymbolicSparseColMat::new_unchecked(total, total, col_ptrs, None, row_indices)
            },
            values,
        )
    };
    let a_perm_upper = a_perm_lower.rb().transpose().symbolic().to_col_major().unwrap();

    let symbolic = {
        let mut mem = MemBuffer::new(StackReq::any_of(&[
            simplicial::prefactorize_symbolic_cholesky_scratch::<usize>(total, a_nnz),
            supernodal::factorize_supernodal_symbolic_cholesky_scratch::<usize>(total),
        ]));
        let stack = MemStack::new(&mut mem);
        let mut etree = vec![0isize; total];
        let mut col_counts = vec![0usize; total];
        simplicial::prefactorize_symbolic_cholesky(
            &mut etree,
            &mut col_counts,
            a_perm_upper.rb(),
            stack,
        );
        supernodal::factorize_supernodal_symbolic_cholesky(
            a_perm_upper.rb(),
            unsafe { simplicial::EliminationTreeRef::from_inner(&etree) },
            &col_counts,
            stack,
            SymbolicSupernodalParams { relax: Some(&[(usize::MAX, 1.0)]) },
        )
        .unwrap()
    };
    println!(
        "[{}] symbolic len_val = {} ({} MB of f64), {} MB RSS, {:.1}s",
        ordering,
        symbolic.len_val(),
        symbolic.len_val() * 8 / (1024 * 1024),
        rss() / 1024,
        t.elapsed().as_secs_f64()
    );

    if !numeric {
        return;
    }

    let t = std::time::Instant::now();
    let mut mem = MemBuffer::new(StackReq::any_of(&[
        supernodal::factorize_supernodal_numeric_intranode_lblt_scratch::<usize, f64>(
            &symbolic,
            Par::Seq,
            Default::default(),
        ),
        faer::perm::permute_rows_in_place_scratch::<usize, f64>(total, 1),
        symbolic.solve_in_place_scratch::<f64>(total, Par::Seq),
    ]));
    let stack = MemStack::new(&mut mem);

    let mut l_values = vec![0.0f64; symbolic.len_val()];
    let mut subdiag = vec![0.0f64; total];
    let mut pivot_perm = vec![0usize; total];
    let mut pivot_perm_inv = vec![0usize; total];
    supernodal::factorize_supernodal_numeric_intranode_lblt::<usize, f64>(
        &mut l_values,
        &mut subdiag,
        &mut pivot_perm,
        &mut pivot_perm_inv,
        a_perm_lower.rb(),
        &symbolic,
        Par::Seq,
        stack,
        Default::default(),
    );
    println!("numeric lblt: {} MB RSS, {:.1}s", rss() / 1024, t.elapsed().as_secs_f64());

    let t = std::time::Instant::now();
    let piv_perm =
        unsafe { faer::perm::PermRef::new_unchecked(&pivot_perm, &pivot_perm_inv, total) };
    let lblt = supernodal::SupernodalIntranodeLbltRef::<'_, usize, f64>::new(
        &symbolic, &l_values, &subdiag, piv_perm,
    );
    let rhs: Vec<f64> = (0..total).map(|i| (i as f64 * 0.37).sin()).collect();
    let mut sol = rhs.clone();
    let mut sol = faer::MatMut::from_column_major_slice_mut(&mut sol, total, 1);
    faer::perm::permute_rows_in_place(sol.rb_mut(), perm, stack);
    faer::perm::permute_rows_in_place(sol.rb_mut(), piv_perm, stack);
    lblt.solve_in_place_no_numeric_permute_with_conj(faer::Conj::No, sol.rb_mut(), Par::Seq, stack);
    faer::perm::permute_rows_in_place(sol.rb_mut(), piv_perm.inverse(), stack);
    faer::perm::permute_rows_in_place(sol.rb_mut(), perm.inverse(), stack);

    let a_full = SparseColMat::<usize, f64>::try_new_from_triplets(total, total, &trips).unwrap();
    let residual = &a_full * &sol.rb();
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..total {
        err = err.max((residual[(i, 0)] - rhs[i]).abs());
        scale = scale.max(rhs[i].abs());
    }
    println!(
        "solve residual {:.3e} (rel {:.3e}), {} MB RSS, {:.1}s",
        err,
        err / scale,
        rss() / 1024,
        t.elapsed().as_secs_f64()
    );
}
