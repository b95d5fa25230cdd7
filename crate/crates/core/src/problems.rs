//! Reference optimal-control configurations: coefficient fields, boundary
//! data, targets and control bounds for the three benchmark setups, wired
//! into the deterministic blocks the Kronecker KKT system consumes.
//!
//! The diffusion case carries the randomness in the diffusion coefficient
//! a = ν·η with η a unit-mean truncated expansion, convects upward and
//! fixes a piecewise boundary datum; its tracking target is the mean of
//! the uncontrolled forward solution and stays empty until a driver fills
//! it in. The convection cases keep a = ν deterministic, push the
//! randomness into the velocity b = (η, η), use homogeneous boundary data
//! and track a Gaussian bump; the constrained variant adds an upper
//! control bound.

use crate::assembly::{
    assemble_load, assemble_mass, assemble_stiffness, assemble_volume_load, DeterministicBlocks,
    Penalty,
};
use crate::chaos::{build_stochastic_matrices, ChaosBasis, StochasticMatrices};
use crate::error::{Error, Result};
use crate::fields::{constant, constant_vector, ScalarField, VectorField};
use crate::kl::KlField;
use crate::mesh::{classify_inflow, Mesh, Rect};
use nalgebra::DVector;

/// Which reference configuration to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    /// Random diffusion, deterministic upward convection, forward-solution
    /// target.
    Diffusion,
    /// Random convection, constant diffusion, Gaussian-bump target.
    Convection,
    /// The convection setup with an upper bound on the control.
    Constrained,
}

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::Diffusion => "diffusion",
            Case::Convection => "convection",
            Case::Constrained => "constrained",
        }
    }
}

/// Full parameter set of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub case: Case,
    pub level: u32,
    /// Number of expansion modes N.
    pub n_modes: usize,
    /// Total chaos degree Q.
    pub degree: usize,
    /// Correlation length ℓ (both directions).
    pub correlation: f64,
    /// Fluctuation amplitude κ.
    pub kappa: f64,
    /// Viscosity ν.
    pub nu: f64,
    /// Control regularization μ.
    pub mu: f64,
    /// Variance penalty γ.
    pub gamma: f64,
    /// Control bounds u_a ≤ u ≤ u_b.
    pub lower: f64,
    pub upper: f64,
}

pub const MAX_LEVEL: u32 = 9;

impl ProblemConfig {
    /// Reference parameters of each benchmark at full resolution.
    pub fn example(case: Case) -> ProblemConfig {
        let common = ProblemConfig {
            case,
            level: 5,
            n_modes: 3,
            degree: 3,
            correlation: 1.0,
            kappa: 0.5,
            nu: 1.0,
            mu: 1.0,
            gamma: 1.0,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        };
        match case {
            Case::Diffusion => common,
            Case::Convection => ProblemConfig {
                kappa: 0.05,
                mu: 1e-6,
                gamma: 0.0,
                ..common
            },
            Case::Constrained => ProblemConfig {
                kappa: 0.05,
                mu: 1e-6,
                gamma: 0.0,
                upper: 100.0,
                ..common
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::contract(format!("mu = {} must be positive", self.mu)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::contract(format!("gamma = {} must be nonnegative", self.gamma)));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::contract(format!("nu = {} must be positive", self.nu)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::contract(format!("kappa = {} must be nonnegative", self.kappa)));
        }
        if !(self.correlation > 0.0 && self.correlation.is_finite()) {
            return Err(Error::contract(format!(
                "correlation length = {} must be positive",
                self.correlation
            )));
        }
        if self.level > MAX_LEVEL {
            return Err(Error::contract(format!(
                "refinement level {} exceeds the maximum {MAX_LEVEL}",
                self.level
            )));
        }
        if self.lower > self.upper {
            return Err(Error::contract(format!(
                "control bounds are crossed: {} > {}",
                self.lower, self.upper
            )));
        }
        Ok(())
    }
}

/// A discretized problem: mesh, chaos basis, stochastic coupling matrices
/// and the spatial blocks, plus the target in DG coefficients.
pub struct Problem {
    pub config: ProblemConfig,
    pub mesh: Mesh,
    pub basis: ChaosBasis,
    pub stochastic: StochasticMatrices,
    pub blocks: DeterministicBlocks,
    /// DG interpolation coefficients of the tracking target; zeros for the
    /// diffusion case until `set_target` installs the forward solution.
    pub target: DVector<f64>,
    /// Guaranteed lower bound of the random diffusion coefficient over all
    /// admissible samples (centroid and vertex scan); `None` when the
    /// diffusion coefficient is deterministic.
    pub coefficient_floor: Option<f64>,
}

struct Scaled<F> {
    factor: f64,
    inner: F,
}

impl<F: ScalarField> ScalarField for Scaled<F> {
    fn eval(&self, x: [f64; 2]) -> f64 {
        self.factor * self.inner.eval(x)
    }
}

struct Isotropic<F> {
    inner: F,
}

impl<F: ScalarField> VectorField for Isotropic<F> {
    fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        let s = self.inner.eval(x);
        [s, s]
    }
}

/// Boundary datum of the diffusion benchmark: x₁ on the bottom edge, 0 on
/// the top, −1 on the left and +1 on the right.
pub fn diffusion_boundary_datum(domain: Rect) -> impl ScalarField {
    let tol = 1e-9 * domain.width().max(domain.height());
    move |x: [f64; 2]| {
        if x[1] <= domain.y0 + tol {
            x[0]
        } else if x[1] >= domain.y1 - tol {
            0.0
        } else if x[0] <= domain.x0 + tol {
            -1.0
        } else {
            1.0
        }
    }
}

/// Tracking target of the convection benchmarks.
pub fn gaussian_bump() -> impl ScalarField {
    |x: [f64; 2]| (-64.0 * ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2))).exp()
}

impl Problem {
    pub fn build(config: ProblemConfig) -> Result<Problem> {
        config.validate()?;
        let domain = Rect::unit_centered();
        let mesh = Mesh::uniform(domain, config.level)?;
        let basis = ChaosBasis::new(config.n_modes, config.degree);
        let stochastic = build_stochastic_matrices(&basis);

        let field = if config.n_modes > 0 {
            Some(KlField::new(
                domain,
                constant(1.0),
                config.kappa,
                [config.correlation; 2],
                config.n_modes,
            )?)
        } else {
            None
        };

        let penalty = Penalty::default();
        let nu = config.nu;
        let n = config.n_modes;
        let mut stiffness = Vec::with_capacity(n + 1);
        let mut loads = Vec::with_capacity(n + 1);

        let (desired_load, target, coefficient_floor) = match config.case {
            Case::Diffusion => {
                let mean_a = constant(nu);
                let mean_b = constant_vector([0.0, 1.0]);
                let datum = diffusion_boundary_datum(domain);
                let inflow = classify_inflow(&mesh, &mean_b);
                stiffness.push(assemble_stiffness(&mesh, &mean_a, &mean_b, &inflow, Some(penalty))?);
                loads.push(assemble_load(
                    &mesh,
                    None,
                    &datum,
                    &mean_a,
                    &mean_b,
                    &inflow,
                    Some(penalty.boundary),
                )?);
                for k in 0..n {
                    let field = field.as_ref().unwrap();
                    let mode = Scaled { factor: nu, inner: field.mode_field(k) };
                    let still = constant_vector([0.0, 0.0]);
                    stiffness.push(assemble_stiffness(&mesh, &mode, &still, &inflow, None)?);
                    loads.push(assemble_load(&mesh, None, &datum, &mode, &still, &inflow, None)?);
                }
                let floor = field.as_ref().map(|f| {
                    let points = mesh
                        .vertices
                        .iter()
                        .copied()
                        .chain((0..mesh.triangle_count()).map(|t| mesh.centroid(t)));
                    nu * f.worst_case_min(points)
                });
                if let Some(floor) = floor {
                    if floor <= 0.0 {
                        log::warn!(
                            "random diffusion coefficient can reach {floor:.3e}; \
                             the worst-case sample loses coercivity"
                        );
                    }
                }
                (DVector::zeros(mesh.dof_count()), DVector::zeros(mesh.dof_count()), floor)
            }
            Case::Convection | Case::Constrained => {
                let mean_a = constant(nu);
                let mean_b = constant_vector([1.0, 1.0]);
                let datum = constant(0.0);
                let inflow = classify_inflow(&mesh, &mean_b);
                stiffness.push(assemble_stiffness(&mesh, &mean_a, &mean_b, &inflow, Some(penalty))?);
                loads.push(assemble_load(
                    &mesh,
                    None,
                    &datum,
                    &mean_a,
                    &mean_b,
                    &inflow,
                    Some(penalty.boundary),
                )?);
                for k in 0..n {
                    let field = field.as_ref().unwrap();
                    let zero_a = constant(0.0);
                    let mode = Isotropic { inner: field.mode_field(k) };
                    stiffness.push(assemble_stiffness(&mesh, &zero_a, &mode, &inflow, None)?);
                    loads.push(assemble_load(&mesh, None, &datum, &zero_a, &mode, &inflow, None)?);
                }
                let bump = gaussian_bump();
                let desired_load = assemble_volume_load(&mesh, &bump)?;
                let mut target = DVector::zeros(mesh.dof_count());
                for t in 0..mesh.triangle_count() {
                    for l in 0..3 {
                        target[mesh.dof(t, l)] = bump.eval(mesh.vertices[mesh.triangles[t][l]]);
                    }
                }
                (desired_load, target, None)
            }
        };

        let blocks = DeterministicBlocks {
            mass: assemble_mass(&mesh),
            stiffness,
            loads,
            desired_load,
            penalty,
            viscosity: nu,
        };

        Ok(Problem {
            config,
            mesh,
            basis,
            stochastic,
            blocks,
            target,
            coefficient_floor,
        })
    }

    /// Install a tracking target given by DG coefficients; the load side
    /// becomes mass times those coefficients so both uses agree.
    pub fn set_target(&mut self, coeffs: DVector<f64>) {
        let mut load = DVector::zeros(coeffs.len());
        for (v, (r, c)) in self.blocks.mass.iter() {
            load[r] += v * coeffs[c];
        }
        self.blocks.desired_load = load;
        self.target = coeffs;
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.config.lower, self.config.upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_parameters_per_case() {
        let d = ProblemConfig::example(Case::Diffusion);
        assert_eq!((d.kappa, d.mu, d.gamma), (0.5, 1.0, 1.0));
        assert_eq!(d.upper, f64::INFINITY);
        let c = ProblemConfig::example(Case::Constrained);
        assert_eq!((c.mu, c.gamma, c.upper), (1e-6, 0.0, 100.0));
        assert_eq!(c.lower, f64::NEG_INFINITY);
        assert_eq!(ProblemConfig::example(Case::Convection).kappa, 0.05);
        for case in [Case::Diffusion, Case::Convection, Case::Constrained] {
            ProblemConfig::example(case).validate().unwrap();
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let mut cfg = ProblemConfig::example(Case::Diffusion);
        cfg.mu = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ProblemConfig::example(Case::Diffusion);
        cfg.level = MAX_LEVEL + 1;
        assert!(cfg.validate().is_err());
        let mut cfg = ProblemConfig::example(Case::Constrained);
        cfg.lower = 200.0;
        assert!(cfg.validate().is_err());
    }

    fn small(case: Case, level: u32, n: usize, q: usize) -> Problem {
        let mut cfg = ProblemConfig::example(case);
        cfg.level = level;
        cfg.n_modes = n;
        cfg.degree = q;
        Problem::build(cfg).unwrap()
    }

    #[test]
    fn block_dimensions_follow_the_configuration() {
        let p = small(Case::Diffusion, 2, 2, 2);
        assert_eq!(p.basis.dim(), 6);
        assert_eq!(p.blocks.n_dofs(), 3 * 32);
        assert_eq!(p.blocks.stiffness.len(), 3);
        assert_eq!(p.blocks.loads.len(), 3);
        assert_eq!(p.stochastic.n_modes(), 2);
        assert_eq!(p.blocks.desired_load.amax(), 0.0);
        assert_eq!(p.target.amax(), 0.0);
    }

    #[test]
    fn diffusion_modes_reach_the_boundary_load() {
        // The boundary datum is nonzero, so each fluctuation mode's
        // consistency term survives in its load vector.
        let p = small(Case::Diffusion, 2, 2, 1);
        for k in 1..=2 {
            assert!(p.blocks.loads[k].amax() > 1e-6, "mode {k} load vanished");
        }
        assert!(p.coefficient_floor.unwrap() > 0.0);
    }

    #[test]
    fn convection_case_has_zero_loads_and_a_bump_target() {
        let p = small(Case::Convection, 5, 2, 1);
        for (k, f) in p.blocks.loads.iter().enumerate() {
            assert_eq!(f.amax(), 0.0, "load {k} should vanish");
        }
        assert!(p.coefficient_floor.is_none());
        // Total load of the target field is its integral.
        let total: f64 = p.blocks.desired_load.iter().sum();
        assert_relative_eq!(total, std::f64::consts::PI / 64.0, epsilon = 1e-5);
        // Nodal coefficients interpolate the bump.
        let t = 0;
        let v = p.mesh.triangles[t][1];
        let x = p.mesh.vertices[v];
        assert_relative_eq!(
            p.target[p.mesh.dof(t, 1)],
            (-64.0 * ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2))).exp(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn vanishing_amplitude_empties_the_mode_matrices() {
        let mut cfg = ProblemConfig::example(Case::Diffusion);
        cfg.level = 1;
        cfg.n_modes = 2;
        cfg.degree = 1;
        cfg.kappa = 0.0;
        let p = Problem::build(cfg).unwrap();
        for k in 1..=2 {
            assert_eq!(p.blocks.stiffness[k].nnz(), 0);
            assert_eq!(p.blocks.loads[k].amax(), 0.0);
        }
    }

    #[test]
    fn large_amplitude_breaks_the_coefficient_floor() {
        let mut cfg = ProblemConfig::example(Case::Diffusion);
        cfg.level = 1;
        cfg.n_modes = 3;
        cfg.degree = 1;
        cfg.kappa = 5.0;
        let p = Problem::build(cfg).unwrap();
        assert!(p.coefficient_floor.unwrap() < 0.0);
    }

    #[test]
    fn deterministic_reduction_keeps_one_mode() {
        let p = small(Case::Convection, 1, 0, 0);
        assert_eq!(p.basis.dim(), 1);
        assert_eq!(p.blocks.stiffness.len(), 1);
        assert_eq!(p.stochastic.n_modes(), 0);
    }

    #[test]
    fn installing_a_target_ties_load_and_coefficients() {
        let mut p = small(Case::Diffusion, 1, 1, 1);
        let coeffs = DVector::from_fn(p.blocks.n_dofs(), |i, _| (i as f64 * 0.37).sin());
        p.set_target(coeffs.clone());
        assert_eq!(p.target, coeffs);
        // Row sums of the load equal the integral of the interpolant.
        let total: f64 = p.blocks.desired_load.iter().sum();
        let mut expect = 0.0;
        for t in 0..p.mesh.triangle_count() {
            let area = p.mesh.area(t);
            for l in 0..3 {
                expect += area / 3.0 * coeffs[p.mesh.dof(t, l)];
            }
        }
        assert_relative_eq!(total, expect, epsilon = 1e-12);
    }
}
