//! `sgroc`: robust optimal control of convection-diffusion problems with
//! random coefficients, from the command line.
//!
//! A config file in the flat `key = value` format is the primary input;
//! every field can also be set or overridden by a flag of the same name.
//! The `SGROC_OUTPUT_DIR` environment variable redirects all artifacts.

mod runner;
mod spec;

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sgroc_core::kkt::{Formulation, MaskRule};
use sgroc_core::problems::{Case, ProblemConfig};
use sgroc_core::solver::Method;
use sgroc_core::{Error, Result};

use runner::Sweep;
use spec::{parse_case, parse_formulation, parse_mask_rule, parse_method, parse_spec, RunSpec};

#[derive(Parser)]
#[command(
    name = "sgroc",
    version,
    about = "Stochastic Galerkin solver for robust optimal control of convection-diffusion equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solve from a config file plus flag overrides.
    Solve(Box<SolveArgs>),
    /// Run the benchmark sweep matrices and collect one CSV.
    Bench(BenchArgs),
    /// Mesh refinement study: energy errors and observed rates.
    Converge(ConvergeArgs),
    /// Write a triangulation as plain text.
    DumpMesh(DumpMeshArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Benchmark family: diffusion, convection or constrained. Resets the
    /// problem block to that family's defaults before other flags apply.
    #[arg(long, value_parser = parse_case)]
    example: Option<Case>,
    /// Mesh refinement level (2^level cells per side).
    #[arg(long)]
    level: Option<u32>,
    /// Number of random modes N.
    #[arg(long)]
    modes: Option<usize>,
    /// Chaos polynomial degree Q.
    #[arg(long)]
    degree: Option<usize>,
    /// Covariance correlation length.
    #[arg(long)]
    correlation: Option<f64>,
    /// Fluctuation amplitude of the random coefficient.
    #[arg(long)]
    kappa: Option<f64>,
    /// Mean diffusion scale.
    #[arg(long)]
    nu: Option<f64>,
    /// Control cost weight.
    #[arg(long)]
    mu: Option<f64>,
    /// Variance penalty weight.
    #[arg(long)]
    gamma: Option<f64>,
    /// Lower control bound.
    #[arg(long)]
    u_a: Option<f64>,
    /// Upper control bound.
    #[arg(long)]
    u_b: Option<f64>,
    /// Inner solver: direct or lrpgmres.
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Relative residual target of the iterative solver.
    #[arg(long)]
    eps_tol: Option<f64>,
    /// Rank truncation tolerance.
    #[arg(long)]
    eps_trunc: Option<f64>,
    /// Iteration cap of the inner solver.
    #[arg(long)]
    maxit: Option<usize>,
    /// Outer active-set iteration cap.
    #[arg(long)]
    pdas_max: Option<usize>,
    /// Control discretization: stochastic or deterministic.
    #[arg(long, value_parser = parse_formulation)]
    formulation: Option<Formulation>,
    /// Active-set update rule: mean or per-mode.
    #[arg(long, value_parser = parse_mask_rule)]
    mask_rule: Option<MaskRule>,
    /// Hard cap on any factor rank.
    #[arg(long)]
    rank_cap: Option<usize>,
    /// Artifact directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Also write per-DOF mean, variance and control values.
    #[arg(long)]
    dump_fields: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Restrict to one benchmark family; all three by default.
    #[arg(long, value_parser = parse_case)]
    example: Option<Case>,
    /// Mesh refinement level for every sweep entry.
    #[arg(long, default_value_t = 4)]
    level: u32,
    /// Inner solver for the parameter sweeps.
    #[arg(long, value_parser = parse_method, default_value = "direct")]
    method: Method,
    /// Which diffusion sweep to run.
    #[arg(long, value_enum, default_value_t = Sweep::All)]
    sweep: Sweep,
    /// Solves to run in parallel.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Artifact directory.
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
}

#[derive(Args)]
struct ConvergeArgs {
    /// Coarsest level of the study.
    #[arg(long, default_value_t = 2)]
    min_level: u32,
    /// Finest level of the study.
    #[arg(long, default_value_t = 5)]
    max_level: u32,
    /// Artifact directory.
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
}

#[derive(Args)]
struct DumpMeshArgs {
    /// Refinement level to triangulate.
    #[arg(long)]
    level: u32,
    /// Destination file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_spec(args: &SolveArgs) -> Result<RunSpec> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
            parse_spec(&text)?
        }
        None => RunSpec::default(),
    };
    if let Some(case) = args.example {
        spec.problem = ProblemConfig::example(case);
    }
    if let Some(v) = args.level {
        spec.problem.level = v;
    }
    if let Some(v) = args.modes {
        spec.problem.n_modes = v;
    }
    if let Some(v) = args.degree {
        spec.problem.degree = v;
    }
    if let Some(v) = args.correlation {
        spec.problem.correlation = v;
    }
    if let Some(v) = args.kappa {
        spec.problem.kappa = v;
    }
    if let Some(v) = args.nu {
        spec.problem.nu = v;
    }
    if let Some(v) = args.mu {
        spec.problem.mu = v;
    }
    if let Some(v) = args.gamma {
        spec.problem.gamma = v;
    }
    if let Some(v) = args.u_a {
        spec.problem.lower = v;
    }
    if let Some(v) = args.u_b {
        spec.problem.upper = v;
    }
    if let Some(v) = args.method {
        spec.solver.method = v;
    }
    if let Some(v) = args.eps_tol {
        spec.solver.eps_tol = v;
    }
    if let Some(v) = args.eps_trunc {
        spec.solver.eps_trunc = v;
    }
    if let Some(v) = args.maxit {
        spec.solver.maxit = v;
    }
    if let Some(v) = args.pdas_max {
        spec.solver.pdas_max = v;
    }
    if let Some(v) = args.formulation {
        spec.solver.formulation = v;
    }
    if let Some(v) = args.mask_rule {
        spec.solver.mask_rule = v;
    }
    if let Some(v) = args.rank_cap {
        spec.solver.rank_cap = v;
    }
    if let Some(v) = &args.output_dir {
        spec.output_dir = v.clone();
    }
    if args.dump_fields {
        spec.dump_fields = true;
    }
    spec.problem.validate()?;
    spec.solver.validate()?;
    Ok(spec)
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve(args) => runner::solve(&build_spec(&args)?),
        Command::Bench(args) => runner::bench(
            args.example,
            args.level,
            args.method,
            args.sweep,
            args.workers,
            &args.output_dir,
        ),
        Command::Converge(args) => {
            if args.min_level > args.max_level {
                return Err(Error::contract(format!(
                    "level range {}..{} is empty",
                    args.min_level, args.max_level
                )));
            }
            runner::converge(args.min_level..=args.max_level, &args.output_dir)
        }
        Command::DumpMesh(args) => runner::dump_mesh(args.level, args.out.as_deref()),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    };
    std::process::exit(code);
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn the_argument_surface_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_the_example_defaults() {
        let cli = Cli::parse_from([
            "sgroc", "solve", "--example", "6.2", "--level", "3", "--mu", "0.5", "--method",
            "direct", "--dump-fields",
        ]);
        let Command::Solve(args) = cli.command else { panic!("expected solve") };
        let spec = build_spec(&args).unwrap();
        assert_eq!(spec.problem.case, Case::Convection);
        assert_eq!(spec.problem.level, 3);
        assert_eq!(spec.problem.mu, 0.5);
        assert_eq!(spec.problem.kappa, 0.05);
        assert_eq!(spec.solver.method, Method::Direct);
        assert!(spec.dump_fields);
    }

    #[test]
    fn config_files_feed_the_spec_and_flags_win() {
        let dir = std::env::temp_dir().join(format!("sgroc-main-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.cfg");
        fs::write(&path, "example = 6.3\nlevel = 3\neps_tol = 0.01\n").unwrap();
        let cli = Cli::parse_from([
            "sgroc",
            "solve",
            "--config",
            path.to_str().unwrap(),
            "--level",
            "2",
        ]);
        let Command::Solve(args) = cli.command else { panic!("expected solve") };
        let spec = build_spec(&args).unwrap();
        assert_eq!(spec.problem.case, Case::Constrained);
        assert_eq!(spec.problem.level, 2);
        assert_eq!(spec.solver.eps_tol, 0.01);
    }

    #[test]
    fn invalid_overrides_are_rejected() {
        let cli = Cli::parse_from(["sgroc", "solve", "--mu", "0"]);
        let Command::Solve(args) = cli.command else { panic!("expected solve") };
        let err = build_spec(&args).unwrap_err().to_string();
        assert!(err.contains("mu"), "{err}");
    }

    #[test]
    fn missing_config_files_surface_their_path() {
        let cli = Cli::parse_from(["sgroc", "solve", "--config", "nowhere/run.cfg"]);
        let Command::Solve(args) = cli.command else { panic!("expected solve") };
        let err = build_spec(&args).unwrap_err().to_string();
        assert!(err.contains("nowhere/run.cfg"), "{err}");
    }
}
