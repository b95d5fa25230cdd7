use std::time::Instant;

use sgroc_core::kkt::{Formulation, KktSystem};
use sgroc_core::postproc::Pipeline;
use sgroc_core::problems::{Case, ProblemConfig};
use sgroc_core::solver::{solve_direct, Method, SolverConfig};

fn main() {
    let level: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let stage = std::env::args().nth(2).unwrap_or_else(|| "direct".into());
    let config = ProblemConfig { level, ..ProblemConfig::example(Case::Diffusion) };

    let t0 = Instant::now();
    let mut pipeline = Pipeline::new();
    let problem = pipeline.prepare(&config).unwrap();
    println!("prepare (forward target): {:.1}s", t0.elapsed().as_secs_f64());

    match stage.as_str() {
        "forward" => {}
        "direct" => {
            let sys = KktSystem::from_problem(&problem, Formulation::StochasticControl).unwrap();
            let t1 = Instant::now();
            let (_, report) = solve_direct(&sys).unwrap();
            println!(
                "direct solve {} rows: {:.1}s, residual {:.3e}",
                sys.total_len(),
                t1.elapsed().as_secs_f64(),
                report.residual
            );
        }
        "lowrank" => {
            let cfg = SolverConfig {
                method: Method::LowRank,
                maxit: 60,
                ..SolverConfig::default()
            };
            let t1 = Instant::now();
            let artifacts = pipeline.run(&config, &cfg).unwrap();
            println!(
                "lrpgmres: {:.1}s, {} iters, converged {}, rank {}, residual {:.3e}",
                t1.elapsed().as_secs_f64(),
                artifacts.report.iterations,
                artifacts.report.converged,
                artifacts.report.total_rank(),
                artifacts.report.residual
            );
        }
        other => panic!("unknown stage {other}"),
    }
}
