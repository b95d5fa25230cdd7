use faer::sparse::SparseColMat;
use sgroc_core::kkt::{Formulation, KktSystem};
use sgroc_core::postproc::Pipeline;
use sgroc_core::problems::{Case, ProblemConfig};

fn rss() -> usize {
    let status = std::fs::read_to_string("/proc/self/status").unwrap();
    status
        .lines()
        .find(|l| l.starts_with("VmRSS"))
        .and_then(|l| l.split_whitespace().nth(1))
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

fn main() {
    let level: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let config = ProblemConfig { level, ..ProblemConfig::example(Case::Diffusion) };
    let mut pipeline = Pipeline::new();
    let problem = pipeline.prepare(&config).unwrap();
    println!("after prepare: {} MB", rss() / 1024);

    let sys = KktSystem::from_problem(&problem, Formulation::StochasticControl).unwrap();
    let t = std::time::Instant::now();
    let full = sys.materialize_full().unwrap();
    println!(
        "after materialize ({} rows, {} nnz): {} MB, {:.1}s",
        full.rows(),
        full.nnz(),
        rss() / 1024,
        t.elapsed().as_secs_f64()
    );

    let t = std::time::Instant::now();
    let triplets: Vec<faer::sparse::Triplet<usize, usize, f64>> = full
        .iter()
        .map(|(&v, (r, c))| faer::sparse::Triplet::new(r, c, v))
        .collect();
    let mat =
        SparseColMat::try_new_from_triplets(full.rows(), full.cols(), &triplets).unwrap();
    drop(triplets);
    println!("after faer convert: {} MB, {:.1}s", rss() / 1024, t.elapsed().as_secs_f64());

    let t = std::time::Instant::now();
    let lu = mat.sp_lu().unwrap();
    println!("after lu: {} MB, {:.1}s", rss() / 1024, t.elapsed().as_secs_f64());
    drop(lu);
}
