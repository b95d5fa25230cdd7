//! Run specifications and the flat configuration format that carries them.
//!
//! A spec file is a list of `key = value` assignments, one per line, with
//! `#` starting a comment. The `example` key picks the benchmark family
//! and with it every default; all other keys override individual fields
//! regardless of where they appear, and each key may be given at most
//! once. [`serialize`] emits the canonical form, which [`parse_spec`]
//! reads back unchanged.

use std::path::PathBuf;

use sgroc_core::kkt::{Formulation, MaskRule};
use sgroc_core::problems::{Case, ProblemConfig};
use sgroc_core::solver::{Method, SolverConfig};
use sgroc_core::{Error, Result};

/// Everything one solve needs: the problem, the solver, and where the
/// artifacts go.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub problem: ProblemConfig,
    pub solver: SolverConfig,
    pub output_dir: PathBuf,
    pub dump_fields: bool,
}

impl RunSpec {
    pub fn for_case(case: Case) -> RunSpec {
        RunSpec {
            problem: ProblemConfig::example(case),
            solver: SolverConfig::default(),
            output_dir: PathBuf::from("out"),
            dump_fields: false,
        }
    }
}

impl Default for RunSpec {
    fn default() -> RunSpec {
        RunSpec::for_case(Case::Diffusion)
    }
}

const KEYS: [&str; 21] = [
    "example",
    "level",
    "modes",
    "degree",
    "correlation",
    "kappa",
    "nu",
    "mu",
    "gamma",
    "u_a",
    "u_b",
    "method",
    "eps_tol",
    "eps_trunc",
    "maxit",
    "pdas_max",
    "formulation",
    "mask_rule",
    "rank_cap",
    "output_dir",
    "dump_fields",
];

pub fn parse_case(s: &str) -> std::result::Result<Case, String> {
    match s {
        "diffusion" | "6.1" => Ok(Case::Diffusion),
        "convection" | "6.2" => Ok(Case::Convection),
        "constrained" | "6.3" => Ok(Case::Constrained),
        _ => Err(format!("unknown example `{s}` (expected diffusion, convection or constrained)")),
    }
}

pub fn parse_method(s: &str) -> std::result::Result<Method, String> {
    match s {
        "direct" => Ok(Method::Direct),
        "lrpgmres" => Ok(Method::LowRank),
        _ => Err(format!("unknown method `{s}` (expected direct or lrpgmres)")),
    }
}

pub fn parse_formulation(s: &str) -> std::result::Result<Formulation, String> {
    match s {
        "stochastic" => Ok(Formulation::StochasticControl),
        "deterministic" => Ok(Formulation::DeterministicControl),
        _ => Err(format!("unknown formulation `{s}` (expected stochastic or deterministic)")),
    }
}

pub fn parse_mask_rule(s: &str) -> std::result::Result<MaskRule, String> {
    match s {
        "mean" => Ok(MaskRule::MeanAdjoint),
        "per-mode" => Ok(MaskRule::PerMode),
        _ => Err(format!("unknown mask rule `{s}` (expected mean or per-mode)")),
    }
}

fn bad_value(line: usize, key: &str, detail: impl std::fmt::Display) -> Error {
    Error::contract(format!("line {line}: invalid value for `{key}`: {detail}"))
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| bad_value(line, key, e))
}

fn parse_finite(line: usize, key: &str, value: &str) -> Result<f64> {
    let x: f64 = parse_num(line, key, value)?;
    if !x.is_finite() {
        return Err(bad_value(line, key, "must be finite"));
    }
    Ok(x)
}

fn parse_bound(line: usize, key: &str, value: &str) -> Result<f64> {
    let x: f64 = parse_num(line, key, value)?;
    if x.is_nan() {
        return Err(bad_value(line, key, "must not be NaN"));
    }
    Ok(x)
}

fn apply(spec: &mut RunSpec, line: usize, key: &str, value: &str) -> Result<()> {
    match key {
        "example" => unreachable!("handled before field assignments"),
        "level" => spec.problem.level = parse_num(line, key, value)?,
        "modes" => spec.problem.n_modes = parse_num(line, key, value)?,
        "degree" => spec.problem.degree = parse_num(line, key, value)?,
        "correlation" => spec.problem.correlation = parse_finite(line, key, value)?,
        "kappa" => spec.problem.kappa = parse_finite(line, key, value)?,
        "nu" => spec.problem.nu = parse_finite(line, key, value)?,
        "mu" => spec.problem.mu = parse_finite(line, key, value)?,
        "gamma" => spec.problem.gamma = parse_finite(line, key, value)?,
        "u_a" => spec.problem.lower = parse_bound(line, key, value)?,
        "u_b" => spec.problem.upper = parse_bound(line, key, value)?,
        "method" => spec.solver.method = parse_method(value).map_err(|e| bad_value(line, key, e))?,
        "eps_tol" => spec.solver.eps_tol = parse_finite(line, key, value)?,
        "eps_trunc" => spec.solver.eps_trunc = parse_finite(line, key, value)?,
        "maxit" => spec.solver.maxit = parse_num(line, key, value)?,
        "pdas_max" => spec.solver.pdas_max = parse_num(line, key, value)?,
        "formulation" => {
            spec.solver.formulation =
                parse_formulation(value).map_err(|e| bad_value(line, key, e))?
        }
        "mask_rule" => {
            spec.solver.mask_rule = parse_mask_rule(value).map_err(|e| bad_value(line, key, e))?
        }
        "rank_cap" => spec.solver.rank_cap = parse_num(line, key, value)?,
        "output_dir" => spec.output_dir = PathBuf::from(value),
        "dump_fields" => spec.dump_fields = parse_num(line, key, value)?,
        _ => unreachable!("keys are checked before assignment"),
    }
    Ok(())
}

/// Parse the flat configuration format. Unknown and duplicate keys are
/// rejected by name, malformed lines by number, and the assembled spec is
/// validated as a whole.
pub fn parse_spec(text: &str) -> Result<RunSpec> {
    let mut assignments: Vec<(usize, &str, &str)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(Error::contract(format!("line {line}: expected `key = value`")));
        };
        let key = key.trim();
        let value = value.trim();
        if !KEYS.contains(&key) {
            return Err(Error::contract(format!("line {line}: unknown key `{key}`")));
        }
        if value.is_empty() {
            return Err(bad_value(line, key, "empty value"));
        }
        if let Some((_, prev, _)) = assignments.iter().find(|(_, k, _)| *k == key) {
            return Err(Error::contract(format!("line {line}: duplicate key `{prev}`")));
        }
        assignments.push((line, key, value));
    }

    let case = match assignments.iter().find(|(_, k, _)| *k == "example") {
        Some(&(line, key, value)) => parse_case(value).map_err(|e| bad_value(line, key, e))?,
        None => Case::Diffusion,
    };
    let mut spec = RunSpec::for_case(case);
    for (line, key, value) in assignments {
        if key != "example" {
            apply(&mut spec, line, key, value)?;
        }
    }
    spec.problem.validate()?;
    spec.solver.validate()?;
    Ok(spec)
}

/// Canonical text form: every key, one per line, in the fixed key order.
pub fn serialize(spec: &RunSpec) -> String {
    let p = &spec.problem;
    let s = &spec.solver;
    format!(
        "example = {}\nlevel = {}\nmodes = {}\ndegree = {}\ncorrelation = {}\nkappa = {}\n\
         nu = {}\nmu = {}\ngamma = {}\nu_a = {}\nu_b = {}\nmethod = {}\neps_tol = {}\n\
         eps_trunc = {}\nmaxit = {}\npdas_max = {}\nformulation = {}\nmask_rule = {}\n\
         rank_cap = {}\noutput_dir = {}\ndump_fields = {}\n",
        p.case.name(),
        p.level,
        p.n_modes,
        p.degree,
        p.correlation,
        p.kappa,
        p.nu,
        p.mu,
        p.gamma,
        p.lower,
        p.upper,
        s.method.name(),
        s.eps_tol,
        s.eps_trunc,
        s.maxit,
        s.pdas_max,
        s.formulation.name(),
        s.mask_rule.name(),
        s.rank_cap,
        spec.output_dir.display(),
        spec.dump_fields,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_gives_the_unconstrained_defaults() {
        let spec = parse_spec("").unwrap();
        assert_eq!(spec.problem.case, Case::Diffusion);
        assert_eq!(spec.problem.level, 5);
        assert_eq!(spec.problem.n_modes, 3);
        assert_eq!(spec.problem.degree, 3);
        assert_eq!(spec.problem.lower, f64::NEG_INFINITY);
        assert_eq!(spec.problem.upper, f64::INFINITY);
        assert_eq!(spec.solver.eps_tol, 5e-3);
        assert_eq!(spec.solver.eps_trunc, 1e-8);
        assert_eq!(spec.solver.maxit, 250);
        assert_eq!(spec.solver.method, Method::LowRank);
        assert!(!spec.dump_fields);
    }

    #[test]
    fn the_constrained_example_brings_its_parameter_set() {
        let spec = parse_spec("example = 6.3\n").unwrap();
        assert_eq!(spec.problem.case, Case::Constrained);
        assert_eq!(spec.problem.mu, 1e-6);
        assert_eq!(spec.problem.gamma, 0.0);
        assert_eq!(spec.problem.upper, 100.0);
        assert_eq!(spec.problem.lower, f64::NEG_INFINITY);
    }

    #[test]
    fn example_defaults_yield_before_explicit_keys_in_any_order() {
        let spec = parse_spec("mu = 0.25\nexample = 6.3\n").unwrap();
        assert_eq!(spec.problem.case, Case::Constrained);
        assert_eq!(spec.problem.mu, 0.25);
        assert_eq!(spec.problem.upper, 100.0);
    }

    #[test]
    fn zero_mu_is_rejected_by_name() {
        let err = parse_spec("mu = 0\n").unwrap_err().to_string();
        assert!(err.contains("mu"), "{err}");
    }

    #[test]
    fn unknown_keys_are_named_with_their_line() {
        let err = parse_spec("level = 3\npenalty = 7\n").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("penalty"), "{err}");
    }

    #[test]
    fn malformed_lines_are_located() {
        let err = parse_spec("# a comment\nexample diffusion\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let err = parse_spec("mu = 1\nlevel = 2\nmu = 2\n").unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("mu"), "{err}");
    }

    #[test]
    fn unparseable_values_name_line_and_key() {
        let err = parse_spec("\nlevel = coarse\n").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("level"), "{err}");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let spec = parse_spec("# run setup\n\nlevel = 4 # coarse pass\n").unwrap();
        assert_eq!(spec.problem.level, 4);
    }

    #[test]
    fn bounds_accept_infinities_but_not_nan() {
        let spec = parse_spec("u_a = -inf\nu_b = inf\n").unwrap();
        assert_eq!(spec.problem.lower, f64::NEG_INFINITY);
        assert_eq!(spec.problem.upper, f64::INFINITY);
        let err = parse_spec("u_b = NaN\n").unwrap_err().to_string();
        assert!(err.contains("u_b"), "{err}");
    }

    #[test]
    fn finite_parameters_reject_infinities() {
        let err = parse_spec("kappa = inf\n").unwrap_err().to_string();
        assert!(err.contains("kappa") && err.contains("finite"), "{err}");
    }

    #[test]
    fn serialized_specs_parse_back_unchanged() {
        let mut spec = RunSpec::for_case(Case::Constrained);
        spec.problem.level = 3;
        spec.problem.n_modes = 2;
        spec.problem.degree = 2;
        spec.problem.kappa = 0.3;
        spec.problem.lower = -0.5;
        spec.solver.method = Method::Direct;
        spec.solver.eps_tol = 1e-4;
        spec.solver.eps_trunc = 1e-9;
        spec.solver.maxit = 17;
        spec.solver.formulation = Formulation::DeterministicControl;
        spec.solver.mask_rule = MaskRule::PerMode;
        spec.output_dir = PathBuf::from("runs/constrained");
        spec.dump_fields = true;
        let round = parse_spec(&serialize(&spec)).unwrap();
        assert_eq!(round, spec);
    }

    #[test]
    fn every_documented_key_is_assignable() {
        let text = "example = 6.2\nlevel = 2\nmodes = 1\ndegree = 2\ncorrelation = 2\n\
                    kappa = 0.1\nnu = 0.5\nmu = 0.01\ngamma = 1.5\nu_a = -3\nu_b = 3\n\
                    method = direct\neps_tol = 0.001\neps_trunc = 0.000001\nmaxit = 9\n\
                    pdas_max = 5\nformulation = deterministic\nmask_rule = per-mode\n\
                    rank_cap = 40\noutput_dir = elsewhere\ndump_fields = true\n";
        let spec = parse_spec(text).unwrap();
        assert_eq!(spec.problem.case, Case::Convection);
        assert_eq!(spec.problem.correlation, 2.0);
        assert_eq!(spec.solver.rank_cap, 40);
        assert_eq!(spec.solver.pdas_max, 5);
        assert_eq!(spec.output_dir, PathBuf::from("elsewhere"));
        assert!(spec.dump_fields);
        assert_eq!(parse_spec(&serialize(&spec)).unwrap(), spec);
    }
}
