//! Moments, objective values, the discrete energy norm, and the benchmark
//! pipeline that turns a problem description into table rows and field dumps.
//!
//! Everything here consumes solver output; nothing feeds back into the
//! solves except the cached tracking target for the diffusion benchmark,
//! whose desired state is itself a forward solve.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, DVectorView};
use sprs::CsMat;

use crate::assembly::Penalty;
use crate::error::Result;
use crate::fields::{ScalarField, VectorField};
use crate::kkt::KktSystem;
use crate::mesh::Mesh;
use crate::problems::{Case, Problem, ProblemConfig};
use crate::solver::{solve_constrained, solve_forward, Solution, SolverConfig, SolverReport};

/// Pointwise mean, variance and standard deviation of a chaos expansion,
/// one value per spatial degree of freedom.
#[derive(Debug, Clone)]
pub struct MomentFields {
    pub mean: DVector<f64>,
    pub variance: DVector<f64>,
    pub std: DVector<f64>,
}

impl MomentFields {
    pub fn peak_variance(&self) -> f64 {
        self.variance.iter().copied().fold(0.0, f64::max)
    }
}

/// Mean, variance and standard deviation of `modes`, whose columns are the
/// coefficients of an expansion in an orthonormal chaos basis. The mean is
/// the first column and the variance the sum of squares of the rest, so it
/// is non-negative by construction.
pub fn moments(modes: &DMatrix<f64>) -> MomentFields {
    let mean = modes.column(0).clone_owned();
    let mut variance = DVector::zeros(modes.nrows());
    for j in 1..modes.ncols() {
        for (v, m) in variance.iter_mut().zip(modes.column(j).iter()) {
            *v += m * m;
        }
    }
    let std = variance.map(f64::sqrt);
    MomentFields { mean, variance, std }
}

/// The objective value split into its three quadratic terms:
/// `total = tracking / 2 + gamma * variance / 2 + mu * control / 2`.
#[derive(Debug, Clone, Copy)]
pub struct CostBreakdown {
    pub total: f64,
    pub tracking: f64,
    pub variance: f64,
    pub control: f64,
}

fn mass_inner(mass: &CsMat<f64>, x: DVectorView<f64>, y: DVectorView<f64>) -> f64 {
    let mut acc = 0.0;
    for (v, (r, c)) in mass.iter() {
        acc += v * x[r] * y[c];
    }
    acc
}

/// Evaluate the objective from expansion coefficients.
///
/// `tracking` is the expected squared tracking error, which the orthonormal
/// basis turns into a mode sum with `target` subtracted from the mean mode
/// only. `variance` is the integrated variance of the state and `control`
/// the expected squared control norm; a one-column deterministic control is
/// just the single term of that sum.
pub fn cost_functional(
    state: &DMatrix<f64>,
    control: &DMatrix<f64>,
    mass: &CsMat<f64>,
    target: &DVector<f64>,
    gamma: f64,
    mu: f64,
) -> CostBreakdown {
    let deviation = state.column(0) - target;
    let mut tracking = mass_inner(mass, deviation.column(0), deviation.column(0));
    let mut variance = 0.0;
    for j in 1..state.ncols() {
        let term = mass_inner(mass, state.column(j), state.column(j));
        tracking += term;
        variance += term;
    }
    let mut control_energy = 0.0;
    for j in 0..control.ncols() {
        control_energy += mass_inner(mass, control.column(j), control.column(j));
    }
    CostBreakdown {
        total: 0.5 * tracking + 0.5 * gamma * variance + 0.5 * mu * control_energy,
        tracking,
        variance,
        control: control_energy,
    }
}

fn energy_squared(
    mesh: &Mesh,
    diffusion: &dyn ScalarField,
    convection: &dyn VectorField,
    penalty: Penalty,
    coeffs: &DVector<f64>,
    reference: &dyn ScalarField,
    reference_gradient: &dyn VectorField,
) -> f64 {
    let values = coeffs.as_slice();
    let mut acc = 0.0;

    for t in 0..mesh.triangle_count() {
        let area = mesh.area(t);
        let grads = mesh.gradients(t);
        let mut gx = 0.0;
        let mut gy = 0.0;
        for l in 0..3 {
            let c = values[mesh.dof(t, l)];
            gx += c * grads[l][0];
            gy += c * grads[l][1];
        }
        let verts = mesh.triangles[t];
        let p: Vec<[f64; 2]> = verts.iter().map(|&v| mesh.vertices[v]).collect();
        for &(l1, l2, l3, w) in &crate::quadrature::TRIANGLE_6 {
            let x = [
                l1 * p[0][0] + l2 * p[1][0] + l3 * p[2][0],
                l1 * p[0][1] + l2 * p[1][1] + l3 * p[2][1],
            ];
            let rg = reference_gradient.eval(x);
            let dx = gx - rg[0];
            let dy = gy - rg[1];
            acc += area * w * diffusion.eval(x) * (dx * dx + dy * dy);
        }
    }

    for edge in &mesh.interior_edges {
        let a = mesh.vertices[edge.verts[0]];
        let b = mesh.vertices[edge.verts[1]];
        for &(s, w) in &crate::quadrature::EDGE_3 {
            let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            let jump = mesh.eval_dg(values, edge.tris[0], x) - mesh.eval_dg(values, edge.tris[1], x);
            let bn = {
                let v = convection.eval(x);
                v[0] * edge.normal[0] + v[1] * edge.normal[1]
            };
            acc += w * penalty.interior * jump * jump;
            acc += 0.5 * edge.length * w * bn.abs() * jump * jump;
        }
    }

    for edge in &mesh.boundary_edges {
        let a = mesh.vertices[edge.verts[0]];
        let b = mesh.vertices[edge.verts[1]];
        for &(s, w) in &crate::quadrature::EDGE_3 {
            let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            let e = mesh.eval_dg(values, edge.tri, x) - reference.eval(x);
            let bn = {
                let v = convection.eval(x);
                v[0] * edge.normal[0] + v[1] * edge.normal[1]
            };
            acc += w * penalty.boundary * e * e;
            acc += 0.5 * edge.length * w * bn.abs() * e * e;
        }
    }

    acc
}

/// Mesh-dependent energy norm of the error between a piecewise-linear
/// function given by `coeffs` and a smooth reference.
///
/// The square collects the weighted gradient misfit over elements, the
/// scaled squared jumps on interior and boundary edges, and half the
/// convective flux of the squared error through every edge. The reference
/// is assumed continuous, so it drops out of interior jumps.
pub fn energy_norm_error(
    mesh: &Mesh,
    diffusion: &dyn ScalarField,
    convection: &dyn VectorField,
    penalty: Penalty,
    coeffs: &DVector<f64>,
    reference: &dyn ScalarField,
    reference_gradient: &dyn VectorField,
) -> f64 {
    energy_squared(mesh, diffusion, convection, penalty, coeffs, reference, reference_gradient)
        .sqrt()
}

/// Energy norm of a chaos expansion with the weight fields frozen at their
/// mean. Orthonormality reduces the expectation to a plain sum of squared
/// single-mode norms, so no sampling is involved.
pub fn energy_norm_modes(
    mesh: &Mesh,
    diffusion: &dyn ScalarField,
    convection: &dyn VectorField,
    penalty: Penalty,
    modes: &DMatrix<f64>,
) -> f64 {
    let zero = |_x: [f64; 2]| 0.0;
    let zero_grad = |_x: [f64; 2]| [0.0, 0.0];
    let mut acc = 0.0;
    for j in 0..modes.ncols() {
        let col = modes.column(j).clone_owned();
        acc += energy_squared(mesh, diffusion, convection, penalty, &col, &zero, &zero_grad);
    }
    acc.sqrt()
}

/// One row of a mesh refinement study.
#[derive(Debug, Clone, Copy)]
pub struct LevelError {
    pub level: u32,
    pub dofs: usize,
    pub h: f64,
    pub error: f64,
}

/// Energy-norm errors of forward solves against a smooth manufactured
/// solution, one row per refinement level.
///
/// The problem is deterministic with unit diffusion and vertical unit
/// convection; the exact solution is a product of sines vanishing on the
/// whole boundary, and the source is chosen to match it. Successive error
/// ratios give the observed convergence rate.
pub fn manufactured_energy_study(
    levels: std::ops::RangeInclusive<u32>,
) -> Result<Vec<LevelError>> {
    use std::f64::consts::PI;
    let reference = |x: [f64; 2]| (PI * x[0]).sin() * (PI * x[1]).sin();
    let gradient = |x: [f64; 2]| {
        [
            PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
            PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
        ]
    };
    let source = |x: [f64; 2]| {
        2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin()
            + PI * (PI * x[0]).sin() * (PI * x[1]).cos()
    };
    let diffusion = crate::fields::constant(1.0);
    let convection = crate::fields::constant_vector([0.0, 1.0]);
    let dirichlet = crate::fields::zero_scalar();
    let penalty = Penalty::default();

    let mut rows = Vec::new();
    for level in levels {
        let mesh = Mesh::uniform(crate::mesh::Rect::unit_centered(), level)?;
        let inflow = crate::mesh::classify_inflow(&mesh, &convection);
        let stiffness =
            crate::assembly::assemble_stiffness(&mesh, &diffusion, &convection, &inflow, Some(penalty))?;
        let load = crate::assembly::assemble_load(
            &mesh,
            Some(&source),
            &dirichlet,
            &diffusion,
            &convection,
            &inflow,
            Some(penalty.boundary),
        )?;
        let lu = crate::kkt::sparse_lu(&stiffness)?;
        let rhs = DMatrix::from_column_slice(load.len(), 1, load.as_slice());
        let coeffs = crate::kkt::lu_solve_columns(&lu, &rhs, false).column(0).clone_owned();
        let error = energy_norm_error(
            &mesh, &diffusion, &convection, penalty, &coeffs, &reference, &gradient,
        );
        rows.push(LevelError { level, dofs: mesh.dof_count(), h: mesh.h(), error });
    }
    Ok(rows)
}

/// Everything one benchmark run produces: the resolved problem, the solve
/// itself, and the derived statistics.
pub struct RunArtifacts {
    pub config: ProblemConfig,
    pub problem: Problem,
    pub solution: Solution,
    pub report: SolverReport,
    pub moments: MomentFields,
    pub cost: CostBreakdown,
}

#[derive(PartialEq, Eq, Hash, Clone, Copy)]
struct TargetKey {
    level: u32,
    n_modes: usize,
    degree: usize,
    kappa: u64,
    correlation: u64,
    nu: u64,
}

impl TargetKey {
    fn of(config: &ProblemConfig) -> TargetKey {
        TargetKey {
            level: config.level,
            n_modes: config.n_modes,
            degree: config.degree,
            kappa: config.kappa.to_bits(),
            correlation: config.correlation.to_bits(),
            nu: config.nu.to_bits(),
        }
    }
}

/// Builds problems and runs solves, caching the forward solve that defines
/// the diffusion benchmark's tracking target so sweeps over the
/// optimization parameters do not repeat it.
#[derive(Default)]
pub struct Pipeline {
    targets: HashMap<TargetKey, DVector<f64>>,
}

impl Pipeline {
    pub fn new() -> Pipeline {
        Pipeline::default()
    }

    /// Build the problem for `config`. The diffusion case tracks the mean
    /// of the uncontrolled forward solution, computed here (or taken from
    /// the cache) and installed as the target.
    pub fn prepare(&mut self, config: &ProblemConfig) -> Result<Problem> {
        let mut problem = Problem::build(config.clone())?;
        if config.case == Case::Diffusion {
            let key = TargetKey::of(config);
            let coeffs = match self.targets.get(&key) {
                Some(c) => c.clone(),
                None => {
                    let state = solve_forward(&problem.blocks, &problem.stochastic)?;
                    let c = state.column(0).clone_owned();
                    self.targets.insert(key, c.clone());
                    c
                }
            };
            problem.set_target(coeffs);
        }
        Ok(problem)
    }

    /// Run one benchmark: build, solve, and reduce to moments and cost.
    pub fn run(&mut self, config: &ProblemConfig, solver: &SolverConfig) -> Result<RunArtifacts> {
        let problem = self.prepare(config)?;
        let (solution, report) = {
            let mut sys = KktSystem::from_problem(&problem, solver.formulation)?;
            solve_constrained(&mut sys, solver)?
        };
        let moments = moments(&solution.state);
        let cost = cost_functional(
            &solution.state,
            &solution.control,
            &problem.blocks.mass,
            &problem.target,
            config.gamma,
            config.mu,
        );
        Ok(RunArtifacts { config: config.clone(), problem, solution, report, moments, cost })
    }

    #[cfg(test)]
    fn cached_targets(&self) -> usize {
        self.targets.len()
    }
}

const CSV_COLUMNS: [&str; 16] = [
    "example",
    "nu",
    "mu",
    "gamma",
    "kappa",
    "N",
    "Q",
    "N_d",
    "J_cost",
    "tracking",
    "peak_variance",
    "iters",
    "rank",
    "residual",
    "cpu_s",
    "memory_kb",
];

pub fn csv_header() -> String {
    CSV_COLUMNS.join(",")
}

/// One CSV row per run. Every field except `cpu_s` is a deterministic
/// function of the inputs.
pub fn csv_row(artifacts: &RunArtifacts) -> String {
    let c = &artifacts.config;
    let r = &artifacts.report;
    format!(
        "{},{},{},{},{},{},{},{},{:.6e},{:.6e},{:.6e},{},{},{:.3e},{:.3},{}",
        c.case.name(),
        c.nu,
        c.mu,
        c.gamma,
        c.kappa,
        c.n_modes,
        c.degree,
        artifacts.problem.mesh.dof_count(),
        artifacts.cost.total,
        artifacts.cost.tracking,
        artifacts.moments.peak_variance(),
        r.iterations,
        r.total_rank(),
        r.residual,
        r.wall_seconds,
        r.memory_bytes / 1024,
    )
}

/// Plain-text field dump, one row per spatial degree of freedom: position,
/// state mean and variance, and the mean control.
pub fn field_dump(artifacts: &RunArtifacts) -> String {
    let mesh = &artifacts.problem.mesh;
    let moments = &artifacts.moments;
    let control = artifacts.solution.control.column(0);
    let mut out = String::from("x y mean variance control\n");
    for t in 0..mesh.triangle_count() {
        for l in 0..3 {
            let d = mesh.dof(t, l);
            let v = mesh.vertices[mesh.triangles[t][l]];
            writeln!(
                out,
                "{:.9e} {:.9e} {:.9e} {:.9e} {:.9e}",
                v[0], v[1], moments.mean[d], moments.variance[d], control[d]
            )
            .expect("writing to a string cannot fail");
        }
    }
    out
}
