use faer::sparse::{SparseColMat, Triplet};
use nalgebra::DVector;
use sgroc_core::chaos::build_gamma_diagonal;
use sgroc_core::postproc::Pipeline;
use sgroc_core::problems::{Case, ProblemConfig};
use sprs::{CsMat, TriMat};

fn rss() -> usize {
    let status = std::fs::read_to_string("/proc/self/status").unwrap();
    status
        .lines()
        .find(|l| l.starts_with("VmRSS"))
        .and_then(|l| l.split_whitespace().nth(1))
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

fn diag_csmat(d: &DVector<f64>) -> CsMat<f64> {
    let mut tri = TriMat::new((d.len(), d.len()));
    for (i, &v) in d.iter().enumerate() {
        tri.add_triplet(i, i, v);
    }
    tri.to_csr()
}

fn scatter(tri: &mut TriMat<f64>, m: &CsMat<f64>, row0: usize, col0: usize, scale: f64) {
    for (&v, (r, c)) in m.iter() {
        tri.add_triplet(row0 + r, col0 + c, scale * v);
    }
}

fn csr_transpose(m: &CsMat<f64>) -> CsMat<f64> {
    let mut t = m.transpose_view().to_owned();
    t = t.to_csr();
    t
}

fn main() {
    let level: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let interleave = std::env::args().nth(2).map(|s| s == "interleaved").unwrap_or(false);
    let config = ProblemConfig { level, ..ProblemConfig::example(Case::Diffusion) };
    let mut pipeline = Pipeline::new();
    let problem = pipeline.prepare(&config).unwrap();
    println!("after prepare: {} MB", rss() / 1024);

    let nd = problem.mesh.dof_count();
    let j = problem.basis.dim();
    let total = 2 * nd * j;
    let (g_gamma, _) = build_gamma_diagonal(&problem.basis, config.gamma).unwrap();
    let mu = config.mu;

    // plain: y block mode-major, then p block. interleaved: all 2J unknowns
    // of one spatial dof adjacent.
    let index = |block: usize, mode: usize, dof: usize| -> usize {
        if interleave {
            dof * 2 * j + block * j + mode
        } else {
            block * nd * j + mode * nd + dof
        }
    };

    let t = std::time::Instant::now();
    let mut tri = TriMat::new((total, total));
    let scatter_kron =
        |tri: &mut TriMat<f64>, g: &CsMat<f64>, k: &CsMat<f64>, br: usize, bc: usize, s: f64| {
            for (&gv, (gr, gc)) in g.iter() {
                for (&kv, (kr, kc)) in k.iter() {
                    tri.add_triplet(index(br, gr, kr), index(bc, gc, kc), s * gv * kv);
                }
            }
        };
    let gg = diag_csmat(&g_gamma);
    scatter_kron(&mut tri, &gg, &problem.blocks.mass, 0, 0, 1.0);
    for (i, k) in problem.blocks.stiffness.iter().enumerate() {
        if k.nnz() == 0 {
            continue;
        }
        let g = &problem.stochastic.g_mats[i];
        scatter_kron(&mut tri, g, k, 1, 0, -1.0);
        let (gt, kt) = (csr_transpose(g), csr_transpose(k));
        scatter_kron(&mut tri, &gt, &kt, 0, 1, -1.0);
    }
    let eye_j = CsMat::<f64>::eye(j);
    scatter_kron(&mut tri, &eye_j, &problem.blocks.mass, 1, 1, -1.0 / mu);
    let reduced: CsMat<f64> = tri.to_csr();
    println!(
        "reduced {} rows, {} nnz (interleave {}): {} MB, {:.1}s",
        total,
        reduced.nnz(),
        interleave,
        rss() / 1024,
        t.elapsed().as_secs_f64()
    );

    let t = std::time::Instant::now();
    let triplets: Vec<Triplet<usize, usize, f64>> =
        reduced.iter().map(|(&v, (r, c))| Triplet::new(r, c, v)).collect();
    let mat = SparseColMat::try_new_from_triplets(total, total, &triplets).unwrap();
    drop(triplets);
    let lu = mat.sp_lu().unwrap();
    println!("after reduced lu: {} MB, {:.1}s", rss() / 1024, t.elapsed().as_secs_f64());
    drop(lu);
}
