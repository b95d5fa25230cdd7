//! Executes specs and sweeps: runs the solves, writes the CSV reports,
//! field dumps and logs, and maps outcomes to exit codes.
//!
//! Exit code 0 means the solver reached its tolerance, 2 means it did not
//! (the artifacts are still written, since a non-converged run is a
//! reportable outcome), and 1 is reserved for operational errors.

use std::fmt::Write as _;
use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use log::{info, warn};
use sgroc_core::postproc::{
    csv_header, csv_row, field_dump, manufactured_energy_study, Pipeline, RunArtifacts,
};
use sgroc_core::problems::{Case, ProblemConfig};
use sgroc_core::solver::{Method, SolverConfig};
use sgroc_core::{Error, Mesh, Rect, Result};

use crate::spec::{serialize, RunSpec};

/// The only environment override: where artifacts land.
pub const OUTPUT_DIR_ENV: &str = "SGROC_OUTPUT_DIR";

pub fn resolve_output_dir(fallback: &Path) -> PathBuf {
    override_dir(std::env::var_os(OUTPUT_DIR_ENV), fallback)
}

fn override_dir(var: Option<std::ffi::OsString>, fallback: &Path) -> PathBuf {
    match var {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => fallback.to_path_buf(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    fs::write(path, content).map_err(|e| io_err(path, e))
}

fn run_log(spec: &RunSpec, artifacts: &RunArtifacts) -> String {
    let mut out = String::from("# spec\n");
    out.push_str(&serialize(spec));
    out.push_str("\n# report\n");
    for (key, value) in artifacts.report.record() {
        let _ = writeln!(out, "{key} = {value}");
    }
    out.push_str("\n# objective\n");
    let cost = &artifacts.cost;
    let _ = writeln!(out, "total = {:.6e}", cost.total);
    let _ = writeln!(out, "tracking = {:.6e}", cost.tracking);
    let _ = writeln!(out, "variance = {:.6e}", cost.variance);
    let _ = writeln!(out, "control = {:.6e}", cost.control);
    let _ = writeln!(out, "peak_variance = {:.6e}", artifacts.moments.peak_variance());
    out
}

/// Run a single spec and write `report.csv`, `run.log` and optionally
/// `fields.dat` into its output directory.
pub fn solve(spec: &RunSpec) -> Result<i32> {
    let dir = resolve_output_dir(&spec.output_dir);
    let mut pipeline = Pipeline::new();
    let artifacts = pipeline.run(&spec.problem, &spec.solver)?;

    let mut csv = csv_header();
    csv.push('\n');
    csv.push_str(&csv_row(&artifacts));
    csv.push('\n');
    write_file(&dir.join("report.csv"), &csv)?;
    if spec.dump_fields {
        write_file(&dir.join("fields.dat"), &field_dump(&artifacts))?;
    }
    write_file(&dir.join("run.log"), &run_log(spec, &artifacts))?;

    let report = &artifacts.report;
    if report.converged {
        info!(
            "{} converged in {} iterations, residual {:.3e}",
            report.method.name(),
            report.iterations,
            report.residual
        );
        Ok(0)
    } else {
        warn!(
            "{} stopped without convergence after {} iterations, residual {:.3e}",
            report.method.name(),
            report.iterations,
            report.residual
        );
        Ok(2)
    }
}

/// Which part of the diffusion sweep matrix to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Sweep {
    /// Control cost sweep at fixed variance weight.
    Mu,
    /// Variance weight sweep across noise levels.
    Gamma,
    /// Stochastic dimension sweep for rank growth.
    Modes,
    /// Everything above.
    All,
}

fn bench_matrix(
    example: Option<Case>,
    level: u32,
    method: Method,
    sweep: Sweep,
) -> Vec<(ProblemConfig, SolverConfig)> {
    let mut jobs = Vec::new();
    let cases =
        example.map_or_else(|| vec![Case::Diffusion, Case::Convection, Case::Constrained], |c| vec![c]);
    for case in cases {
        let base = ProblemConfig { level, ..ProblemConfig::example(case) };
        let solver = SolverConfig { method, ..SolverConfig::default() };
        match case {
            Case::Diffusion => {
                if matches!(sweep, Sweep::Mu | Sweep::All) {
                    for mu in [1.0, 1e-2, 1e-4, 1e-6] {
                        jobs.push((ProblemConfig { mu, ..base.clone() }, solver.clone()));
                    }
                }
                if matches!(sweep, Sweep::Gamma | Sweep::All) {
                    for kappa in [0.05, 0.25, 0.5] {
                        for gamma in 0..=4 {
                            let cfg = ProblemConfig {
                                kappa,
                                gamma: f64::from(gamma),
                                ..base.clone()
                            };
                            jobs.push((cfg, solver.clone()));
                        }
                    }
                }
                if matches!(sweep, Sweep::Modes | Sweep::All) {
                    for n_modes in [4, 5, 6] {
                        let cfg = ProblemConfig { n_modes, gamma: 0.0, ..base.clone() };
                        let solver =
                            SolverConfig { method: Method::LowRank, ..SolverConfig::default() };
                        jobs.push((cfg, solver));
                    }
                }
            }
            Case::Convection | Case::Constrained => jobs.push((base, solver)),
        }
    }
    jobs
}

fn run_matrix(
    jobs: &[(ProblemConfig, SolverConfig)],
    workers: usize,
) -> Result<Vec<(String, bool)>> {
    let workers = workers.clamp(1, jobs.len().max(1));
    if workers == 1 {
        let mut pipeline = Pipeline::new();
        return jobs
            .iter()
            .map(|(problem, solver)| {
                let artifacts = pipeline.run(problem, solver)?;
                Ok((csv_row(&artifacts), artifacts.report.converged))
            })
            .collect();
    }

    let mut slots: Vec<Option<Result<(String, bool)>>> = Vec::new();
    slots.resize_with(jobs.len(), || None);
    let batches = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    let mut pipeline = Pipeline::new();
                    let mut rows = Vec::new();
                    for idx in (w..jobs.len()).step_by(workers) {
                        let (problem, solver) = &jobs[idx];
                        let row = pipeline
                            .run(problem, solver)
                            .map(|a| (csv_row(&a), a.report.converged));
                        rows.push((idx, row));
                    }
                    rows
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("a sweep worker panicked"))
            .collect::<Vec<_>>()
    });
    for batch in batches {
        for (idx, row) in batch {
            slots[idx] = Some(row);
        }
    }
    slots.into_iter().map(|slot| slot.expect("every job ran exactly once")).collect()
}

/// Run a benchmark sweep and write all rows as one CSV, in matrix order
/// regardless of the worker count.
pub fn bench(
    example: Option<Case>,
    level: u32,
    method: Method,
    sweep: Sweep,
    workers: usize,
    output_dir: &Path,
) -> Result<i32> {
    let jobs = bench_matrix(example, level, method, sweep);
    info!("running {} benchmark solves on {} worker(s)", jobs.len(), workers.max(1));
    let rows = run_matrix(&jobs, workers)?;

    let mut csv = csv_header();
    csv.push('\n');
    let mut all_converged = true;
    for (row, converged) in &rows {
        csv.push_str(row);
        csv.push('\n');
        all_converged &= converged;
    }
    let dir = resolve_output_dir(output_dir);
    write_file(&dir.join("bench.csv"), &csv)?;
    if all_converged {
        Ok(0)
    } else {
        warn!("at least one sweep entry stopped at its iteration limit");
        Ok(2)
    }
}

/// Mesh refinement study: energy errors of a manufactured smooth problem
/// and the observed rates between consecutive levels.
pub fn converge(levels: RangeInclusive<u32>, output_dir: &Path) -> Result<i32> {
    let rows = manufactured_energy_study(levels)?;
    let mut csv = String::from("level,N_d,h,energy_error,rate\n");
    let mut previous: Option<f64> = None;
    for row in &rows {
        let rate = match previous {
            Some(p) => format!("{:.4}", (p / row.error).log2()),
            None => String::new(),
        };
        let _ = writeln!(csv, "{},{},{:.6e},{:.6e},{}", row.level, row.dofs, row.h, row.error, rate);
        info!("level {}: {} dofs, energy error {:.6e} {}", row.level, row.dofs, row.error, rate);
        previous = Some(row.error);
    }
    let dir = resolve_output_dir(output_dir);
    write_file(&dir.join("converge.csv"), &csv)?;
    Ok(0)
}

/// Write the triangulation at a refinement level, to a file or stdout.
pub fn dump_mesh(level: u32, out: Option<&Path>) -> Result<i32> {
    let mesh = Mesh::uniform(Rect::unit_centered(), level)?;
    let text = mesh.dump();
    match out {
        Some(path) => write_file(path, &text)?,
        None => print!("{text}"),
    }
    Ok(0)
}
