//! Kronecker-structured saddle-point system of the discrete optimality
//! conditions, with matrix-free application, sparse materialization,
//! right-hand-side factors and active-set bookkeeping.
//!
//! Unknowns are state, control and adjoint chaos modes stacked mode-major:
//! entry j·N_d + d of a block is spatial DOF d of mode j. With the sum
//! A = Σ_i G_i ⊗ K_i over the mean and fluctuation matrices, the block
//! rows are
//!
//!   (G_γ⊗M) y            − A* p          = desired load ⊗ g_0
//!   μ(G_0⊗I) u           + (G_0⊗D_I) p   = μ(u_a 1_{A−} + u_b 1_{A+}) ⊗ g_0
//!   −A y + (G_0⊗M) u                     = −Σ_i f_i ⊗ g_i
//!
//! where D_I restricts to control DOFs at neither bound and G_γ adds the
//! variance penalty γ to every mode past the mean. A deterministic-control
//! variant carries the control as a single spatial vector instead: its
//! optimality row reads μu + D_I p_0 and the state equation sees it
//! through g_0 ⊗ M.

use crate::assembly::DeterministicBlocks;
use crate::chaos::{build_gamma_diagonal, ChaosBasis, StochasticMatrices};
use crate::error::{Error, Result};
use crate::lowrank::{BlockTriple, LowRankBlock};
use crate::problems::Problem;
use nalgebra::{DMatrix, DVector};
use sprs::{CsMat, TriMat};

/// Largest stacked system the sparse materialization will build.
pub const MATERIALIZE_GUARD: usize = 500_000;

/// How the control is discretized in the stochastic direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Formulation {
    /// The control carries a full set of chaos modes, like state and
    /// adjoint.
    #[default]
    StochasticControl,
    /// The control is one spatial vector; robustness enters only through
    /// the mean adjoint.
    DeterministicControl,
}

impl Formulation {
    pub fn name(self) -> &'static str {
        match self {
            Formulation::StochasticControl => "stochastic",
            Formulation::DeterministicControl => "deterministic",
        }
    }
}

/// Which adjoint information drives the active-set update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskRule {
    /// Test −p_0 − μ·bound with the mean adjoint mode.
    #[default]
    MeanAdjoint,
    /// Activate a DOF when any adjoint mode crosses its share of the
    /// bound (the bound itself sits in mode 0). Experimental comparison
    /// rule; falls back to the mean test when both sides trigger.
    PerMode,
}

impl MaskRule {
    pub fn name(self) -> &'static str {
        match self {
            MaskRule::MeanAdjoint => "mean",
            MaskRule::PerMode => "per-mode",
        }
    }
}

/// The assembled operator with its optimization parameters and the three
/// control-DOF masks.
pub struct KktSystem<'a> {
    pub blocks: &'a DeterministicBlocks,
    pub stochastic: &'a StochasticMatrices,
    pub gamma: f64,
    pub mu: f64,
    pub lower: f64,
    pub upper: f64,
    pub formulation: Formulation,
    pub(crate) g_gamma: DVector<f64>,
    active_minus: Vec<bool>,
    active_plus: Vec<bool>,
}

impl<'a> KktSystem<'a> {
    pub fn new(
        blocks: &'a DeterministicBlocks,
        stochastic: &'a StochasticMatrices,
        basis: &ChaosBasis,
        gamma: f64,
        mu: f64,
        bounds: (f64, f64),
        formulation: Formulation,
    ) -> Result<KktSystem<'a>> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::contract(format!("mu = {mu} must be positive")));
        }
        if bounds.0 > bounds.1 {
            return Err(Error::contract(format!(
                "control bounds are crossed: {} > {}",
                bounds.0, bounds.1
            )));
        }
        if basis.dim() != stochastic.dim() {
            return Err(Error::contract(format!(
                "basis has {} functions but the coupling matrices have order {}",
                basis.dim(),
                stochastic.dim()
            )));
        }
        if blocks.n_modes() != stochastic.n_modes() {
            return Err(Error::contract(format!(
                "{} fluctuation matrices against {} coupling matrices",
                blocks.n_modes(),
                stochastic.n_modes()
            )));
        }
        let (g_gamma, _) = build_gamma_diagonal(basis, gamma)?;
        let nd = blocks.n_dofs();
        Ok(KktSystem {
            blocks,
            stochastic,
            gamma,
            mu,
            lower: bounds.0,
            upper: bounds.1,
            formulation,
            g_gamma,
            active_minus: vec![false; nd],
            active_plus: vec![false; nd],
        })
    }

    pub fn from_problem(problem: &'a Problem, formulation: Formulation) -> Result<KktSystem<'a>> {
        KktSystem::new(
            &problem.blocks,
            &problem.stochastic,
            &problem.basis,
            problem.config.gamma,
            problem.config.mu,
            problem.bounds(),
            formulation,
        )
    }

    pub fn n_dofs(&self) -> usize {
        self.blocks.n_dofs()
    }

    /// Number of chaos modes J carried by state and adjoint.
    pub fn n_chaos(&self) -> usize {
        self.stochastic.dim()
    }

    /// Number of chaos modes carried by the control.
    pub fn control_modes(&self) -> usize {
        match self.formulation {
            Formulation::StochasticControl => self.n_chaos(),
            Formulation::DeterministicControl => 1,
        }
    }

    /// Length of the stacked unknown vector.
    pub fn total_len(&self) -> usize {
        self.n_dofs() * (2 * self.n_chaos() + self.control_modes())
    }

    pub fn is_inactive(&self, dof: usize) -> bool {
        !self.active_minus[dof] && !self.active_plus[dof]
    }

    pub fn active_minus(&self) -> &[bool] {
        &self.active_minus
    }

    pub fn active_plus(&self) -> &[bool] {
        &self.active_plus
    }

    /// Sizes (|A−|, |A+|).
    pub fn active_counts(&self) -> (usize, usize) {
        let c = |m: &[bool]| m.iter().filter(|&&b| b).count();
        (c(&self.active_minus), c(&self.active_plus))
    }

    pub fn set_active_sets(&mut self, minus: Vec<bool>, plus: Vec<bool>) -> Result<()> {
        let nd = self.n_dofs();
        if minus.len() != nd || plus.len() != nd {
            return Err(Error::contract(format!(
                "mask lengths {}/{} against {nd} DOFs",
                minus.len(),
                plus.len()
            )));
        }
        if minus.iter().zip(&plus).any(|(&a, &b)| a && b) {
            return Err(Error::contract("a DOF cannot sit at both bounds"));
        }
        self.active_minus = minus;
        self.active_plus = plus;
        Ok(())
    }

    /// Recompute the masks from an adjoint iterate. Returns whether any
    /// DOF changed its set.
    pub fn update_active_sets(&mut self, adjoint: &DMatrix<f64>, rule: MaskRule) -> Result<bool> {
        let (nd, j) = (self.n_dofs(), self.n_chaos());
        if adjoint.nrows() != nd || adjoint.ncols() != j {
            return Err(Error::contract(format!(
                "adjoint iterate is {}×{}, the system needs {nd}×{j}",
                adjoint.nrows(),
                adjoint.ncols()
            )));
        }
        let mut changed = false;
        for d in 0..nd {
            let mean_test = |lower: f64, upper: f64| {
                let lam = -adjoint[(d, 0)];
                (lam - self.mu * lower < 0.0, lam - self.mu * upper > 0.0)
            };
            let (mut minus, mut plus) = mean_test(self.lower, self.upper);
            if rule == MaskRule::PerMode {
                for jj in 1..j {
                    let lam = -adjoint[(d, jj)];
                    minus |= lam < 0.0;
                    plus |= lam > 0.0;
                }
                if minus && plus {
                    (minus, plus) = mean_test(self.lower, self.upper);
                }
            }
            changed |= minus != self.active_minus[d] || plus != self.active_plus[d];
            self.active_minus[d] = minus;
            self.active_plus[d] = plus;
        }
        Ok(changed)
    }

    /// Split a stacked vector into (state, control, adjoint) mode matrices.
    pub fn split(&self, x: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let (nd, j, cm) = (self.n_dofs(), self.n_chaos(), self.control_modes());
        let want = self.total_len();
        if x.len() != want {
            return Err(Error::contract(format!(
                "stacked vector has length {}, the system needs {want}",
                x.len()
            )));
        }
        let s = x.as_slice();
        Ok((
            DMatrix::from_column_slice(nd, j, &s[..nd * j]),
            DMatrix::from_column_slice(nd, cm, &s[nd * j..nd * (j + cm)]),
            DMatrix::from_column_slice(nd, j, &s[nd * (j + cm)..]),
        ))
    }

    /// Inverse of `split`.
    pub fn join(&self, y: &DMatrix<f64>, u: &DMatrix<f64>, p: &DMatrix<f64>) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.total_len());
        out.extend_from_slice(y.as_slice());
        out.extend_from_slice(u.as_slice());
        out.extend_from_slice(p.as_slice());
        DVector::from_vec(out)
    }

    /// Apply the block operator to a stacked vector without forming any
    /// Kronecker product.
    pub fn apply_full(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (y, u, p) = self.split(x)?;
        let (nd, j) = (self.n_dofs(), self.n_chaos());
        let mass = &self.blocks.mass;
        let g0 = &self.stochastic.g_mats[0];

        let mut out_y = spmm(mass, &y);
        for jj in 0..j {
            out_y.column_mut(jj).scale_mut(self.g_gamma[jj]);
        }
        for (i, k) in self.blocks.stiffness.iter().enumerate() {
            if k.nnz() == 0 {
                continue;
            }
            out_y -= spmm_t(k, &mul_g(&p, &self.stochastic.g_mats[i]));
        }

        let mut out_u;
        match self.formulation {
            Formulation::StochasticControl => {
                out_u = mul_gt(&u, g0) * self.mu;
                let pg = mul_gt(&p, g0);
                for d in 0..nd {
                    if self.is_inactive(d) {
                        for jj in 0..j {
                            out_u[(d, jj)] += pg[(d, jj)];
                        }
                    }
                }
            }
            Formulation::DeterministicControl => {
                out_u = &u * self.mu;
                let pg = &p * &self.stochastic.g_vecs[0];
                for d in 0..nd {
                    if self.is_inactive(d) {
                        out_u[(d, 0)] += pg[d];
                    }
                }
            }
        }

        let mut out_p = DMatrix::zeros(nd, j);
        for (i, k) in self.blocks.stiffness.iter().enumerate() {
            if k.nnz() == 0 {
                continue;
            }
            out_p -= spmm(k, &mul_gt(&y, &self.stochastic.g_mats[i]));
        }
        match self.formulation {
            Formulation::StochasticControl => out_p += spmm(mass, &mul_gt(&u, g0)),
            Formulation::DeterministicControl => {
                let mu_col = spmm(mass, &u);
                let g0v = &self.stochastic.g_vecs[0];
                for jj in 0..j {
                    if g0v[jj] != 0.0 {
                        out_p.column_mut(jj).axpy(g0v[jj], &mu_col.column(0), 1.0);
                    }
                }
            }
        }

        Ok(self.join(&out_y, &out_u, &out_p))
    }

    /// Build the explicit sparse matrix with the same action as
    /// `apply_full`.
    pub fn materialize_full(&self) -> Result<CsMat<f64>> {
        let (nd, j, cm) = (self.n_dofs(), self.n_chaos(), self.control_modes());
        let total = self.total_len();
        if total > MATERIALIZE_GUARD {
            return Err(Error::resource(format!(
                "materializing a {total}×{total} system exceeds the {MATERIALIZE_GUARD}-row guard"
            )));
        }
        let off_u = nd * j;
        let off_p = nd * (j + cm);
        let mut tri = TriMat::new((total, total));

        let m_gamma = sprs::kronecker_product(diag_csmat(&self.g_gamma).view(), self.blocks.mass.view());
        scatter(&mut tri, &m_gamma, 0, 0, 1.0);

        for (i, k) in self.blocks.stiffness.iter().enumerate() {
            if k.nnz() == 0 {
                continue;
            }
            let g = &self.stochastic.g_mats[i];
            scatter(&mut tri, &sprs::kronecker_product(g.view(), k.view()), off_p, 0, -1.0);
            let (gt, kt) = (csr_transpose(g), csr_transpose(k));
            scatter(&mut tri, &sprs::kronecker_product(gt.view(), kt.view()), 0, off_p, -1.0);
        }

        let d_inactive = {
            let mut t = TriMat::new((nd, nd));
            for d in 0..nd {
                if self.is_inactive(d) {
                    t.add_triplet(d, d, 1.0);
                }
            }
            t.to_csr()
        };
        let g0 = &self.stochastic.g_mats[0];
        match self.formulation {
            Formulation::StochasticControl => {
                let eye = CsMat::eye(nd);
                scatter(&mut tri, &sprs::kronecker_product(g0.view(), eye.view()), off_u, off_u, self.mu);
                scatter(&mut tri, &sprs::kronecker_product(g0.view(), d_inactive.view()), off_u, off_p, 1.0);
                scatter(&mut tri, &sprs::kronecker_product(g0.view(), self.blocks.mass.view()), off_p, off_u, 1.0);
            }
            Formulation::DeterministicControl => {
                for d in 0..nd {
                    tri.add_triplet(off_u + d, off_u + d, self.mu);
                }
                let g0v = &self.stochastic.g_vecs[0];
                for jj in 0..j {
                    if g0v[jj] == 0.0 {
                        continue;
                    }
                    for d in 0..nd {
                        if self.is_inactive(d) {
                            tri.add_triplet(off_u + d, off_p + jj * nd + d, g0v[jj]);
                        }
                    }
                    for (v, (r, c)) in self.blocks.mass.iter() {
                        tri.add_triplet(off_p + jj * nd + r, off_u + c, g0v[jj] * v);
                    }
                }
            }
        }
        Ok(tri.to_csr())
    }

    /// Right-hand side as one low-rank factor pair per block row.
    pub fn build_rhs(&self) -> BlockTriple {
        let (nd, j, cm) = (self.n_dofs(), self.n_chaos(), self.control_modes());
        let g0 = DMatrix::from_column_slice(j, 1, self.stochastic.g_vecs[0].as_slice());

        let b1 = if self.blocks.desired_load.amax() == 0.0 {
            LowRankBlock::zero(nd, j)
        } else {
            let w = DMatrix::from_column_slice(nd, 1, self.blocks.desired_load.as_slice());
            LowRankBlock::from_factors(w, g0.clone()).expect("rank-1 factors")
        };

        let mut bound_w = DMatrix::zeros(nd, 1);
        let mut any = false;
        for d in 0..nd {
            if self.active_minus[d] {
                bound_w[(d, 0)] = self.mu * self.lower;
                any = true;
            } else if self.active_plus[d] {
                bound_w[(d, 0)] = self.mu * self.upper;
                any = true;
            }
        }
        let b2 = if any {
            let v = match self.formulation {
                Formulation::StochasticControl => g0.clone(),
                Formulation::DeterministicControl => DMatrix::from_element(1, 1, 1.0),
            };
            LowRankBlock::from_factors(bound_w, v).expect("rank-1 factors")
        } else {
            LowRankBlock::zero(nd, cm)
        };

        let live: Vec<usize> = (0..self.blocks.loads.len())
            .filter(|&i| self.blocks.loads[i].amax() != 0.0)
            .collect();
        let b3 = if live.is_empty() {
            LowRankBlock::zero(nd, j)
        } else {
            let mut w = DMatrix::zeros(nd, live.len());
            let mut v = DMatrix::zeros(j, live.len());
            for (col, &i) in live.iter().enumerate() {
                w.column_mut(col).copy_from(&(-&self.blocks.loads[i]));
                v.column_mut(col).copy_from(&self.stochastic.g_vecs[i]);
            }
            LowRankBlock::from_factors(w, v).expect("stacked load factors")
        };

        BlockTriple { y: b1, u: b2, p: b3 }
    }

    /// Right-hand side as one stacked dense vector.
    pub fn rhs_dense(&self) -> DVector<f64> {
        self.build_rhs().to_stacked()
    }

    /// With no active bounds and a stochastic control, the control and
    /// adjoint rows eliminate exactly: u = (b_2 − p)/μ and
    /// p = −μ·M⁻¹(b_3 − M b_2/μ + Σ_i K_i y G_i), leaving the positive
    /// definite state operator
    ///
    ///   H = G_γ⊗M + μ·Σ_{i,k} (G_i G_k) ⊗ (K_iᵀ M⁻¹ K_k).
    ///
    /// Its Cholesky factor stays far sparser than an LU of the coupled
    /// saddle system, which is what makes the largest benchmark sizes
    /// solvable in memory.
    pub fn materialize_state_schur(&self) -> Result<CsMat<f64>> {
        let (nd, j) = (self.n_dofs(), self.n_chaos());
        let total = nd * j;
        if total > MATERIALIZE_GUARD {
            return Err(Error::resource(format!(
                "materializing a {total}×{total} state operator exceeds the {MATERIALIZE_GUARD}-row guard"
            )));
        }
        let minv = block_diag_inverse(&self.blocks.mass, 3)?;
        let live: Vec<usize> = (0..self.blocks.stiffness.len())
            .filter(|&i| self.blocks.stiffness[i].nnz() > 0)
            .collect();
        let scaled: Vec<CsMat<f64>> =
            live.iter().map(|&k| &minv * &self.blocks.stiffness[k]).collect();
        let mut h =
            sprs::kronecker_product(diag_csmat(&self.g_gamma).view(), self.blocks.mass.view());
        for &i in &live {
            let kit = csr_transpose(&self.blocks.stiffness[i]);
            let gi = &self.stochastic.g_mats[i];
            for (pos, &k) in live.iter().enumerate() {
                let spatial = &kit * &scaled[pos];
                let coupling = gi * &self.stochastic.g_mats[k];
                let term = sprs::kronecker_product(coupling.view(), spatial.view());
                h = &h + &term.map(|v| v * self.mu);
            }
        }
        Ok(h)
    }
}

/// Forward stochastic Galerkin operator A = Σ_i G_i ⊗ K_i as an explicit
/// sparse matrix, guarded like the full materialization.
pub fn materialize_state_operator(
    blocks: &DeterministicBlocks,
    stochastic: &StochasticMatrices,
) -> Result<CsMat<f64>> {
    let (nd, j) = (blocks.n_dofs(), stochastic.dim());
    let total = nd * j;
    if total > MATERIALIZE_GUARD {
        return Err(Error::resource(format!(
            "materializing a {total}×{total} state operator exceeds the {MATERIALIZE_GUARD}-row guard"
        )));
    }
    if blocks.n_modes() != stochastic.n_modes() {
        return Err(Error::contract(format!(
            "{} fluctuation matrices against {} coupling matrices",
            blocks.n_modes(),
            stochastic.n_modes()
        )));
    }
    let mut tri = TriMat::new((total, total));
    for (i, k) in blocks.stiffness.iter().enumerate() {
        if k.nnz() == 0 {
            continue;
        }
        scatter(&mut tri, &sprs::kronecker_product(stochastic.g_mats[i].view(), k.view()), 0, 0, 1.0);
    }
    Ok(tri.to_csr())
}

/// Stacked forward load Σ_i f_i ⊗ g_i.
pub fn state_load(blocks: &DeterministicBlocks, stochastic: &StochasticMatrices) -> DVector<f64> {
    let (nd, j) = (blocks.n_dofs(), stochastic.dim());
    let mut out = DVector::zeros(nd * j);
    for (i, f) in blocks.loads.iter().enumerate() {
        let g = &stochastic.g_vecs[i];
        for jj in 0..j {
            if g[jj] != 0.0 {
                let mut seg = out.rows_mut(jj * nd, nd);
                seg.axpy(g[jj], f, 1.0);
            }
        }
    }
    out
}

/// Sparse times dense: K·X, column by column.
pub(crate) fn spmm(a: &CsMat<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.rows(), x.ncols());
    for jj in 0..x.ncols() {
        let xc = x.column(jj);
        let mut oc = out.column_mut(jj);
        for (v, (r, c)) in a.iter() {
            oc[r] += v * xc[c];
        }
    }
    out
}

/// Transposed sparse times dense: Kᵀ·X.
pub(crate) fn spmm_t(a: &CsMat<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.cols(), x.ncols());
    for jj in 0..x.ncols() {
        let xc = x.column(jj);
        let mut oc = out.column_mut(jj);
        for (v, (r, c)) in a.iter() {
            oc[c] += v * xc[r];
        }
    }
    out
}

/// Dense times sparse: X·G.
pub(crate) fn mul_g(x: &DMatrix<f64>, g: &CsMat<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), g.cols());
    for (v, (r, c)) in g.iter() {
        let xc = x.column(r);
        let mut oc = out.column_mut(c);
        oc.axpy(*v, &xc, 1.0);
    }
    out
}

/// Dense times transposed sparse: X·Gᵀ.
pub(crate) fn mul_gt(x: &DMatrix<f64>, g: &CsMat<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), g.rows());
    for (v, (r, c)) in g.iter() {
        let xc = x.column(c);
        let mut oc = out.column_mut(r);
        oc.axpy(*v, &xc, 1.0);
    }
    out
}

pub(crate) fn spmv(a: &CsMat<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.rows());
    for (v, (r, c)) in a.iter() {
        out[r] += v * x[c];
    }
    out
}

fn diag_csmat(d: &DVector<f64>) -> CsMat<f64> {
    let mut tri = TriMat::new((d.len(), d.len()));
    for i in 0..d.len() {
        if d[i] != 0.0 {
            tri.add_triplet(i, i, d[i]);
        }
    }
    tri.to_csr()
}

fn csr_transpose(m: &CsMat<f64>) -> CsMat<f64> {
    m.transpose_view().to_csr()
}

fn scatter(tri: &mut TriMat<f64>, m: &CsMat<f64>, row_off: usize, col_off: usize, scale: f64) {
    for (v, (r, c)) in m.iter() {
        tri.add_triplet(r + row_off, c + col_off, scale * v);
    }
}

/// Whether every entry sits inside a `block`-sized diagonal block.
pub(crate) fn is_block_diagonal(m: &CsMat<f64>, block: usize) -> bool {
    m.rows() == m.cols()
        && m.rows() % block == 0
        && m.iter().all(|(_, (r, c))| r / block == c / block)
}

/// Inverse of a matrix made of dense `block`-sized diagonal blocks, such
/// as the DG mass matrix with its per-triangle 3×3 blocks.
pub(crate) fn block_diag_inverse(m: &CsMat<f64>, block: usize) -> Result<CsMat<f64>> {
    let n = m.rows();
    if m.cols() != n || n % block != 0 {
        return Err(Error::contract(format!(
            "a {}×{} matrix cannot split into {block}-sized diagonal blocks",
            n,
            m.cols()
        )));
    }
    let mut tri = TriMat::new((n, n));
    let mut local = DMatrix::zeros(block, block);
    for b in (0..n).step_by(block) {
        local.fill(0.0);
        for r in 0..block {
            if let Some(row) = m.outer_view(b + r) {
                for (c, &v) in row.iter() {
                    if c < b || c >= b + block {
                        return Err(Error::contract(format!(
                            "entry ({}, {c}) falls outside its diagonal block",
                            b + r
                        )));
                    }
                    local[(r, c - b)] = v;
                }
            }
        }
        let inv = local.clone().try_inverse().ok_or_else(|| {
            Error::numeric(format!("singular {block}×{block} diagonal block at row {b}"))
        })?;
        for r in 0..block {
            for c in 0..block {
                tri.add_triplet(b + r, b + c, inv[(r, c)]);
            }
        }
    }
    Ok(tri.to_csr())
}

pub(crate) type SparseLu = faer::sparse::linalg::solvers::Lu<usize, f64>;
pub(crate) type SparseLlt = faer::sparse::linalg::solvers::Llt<usize, f64>;

pub(crate) fn to_faer(m: &CsMat<f64>) -> Result<faer::sparse::SparseColMat<usize, f64>> {
    let trips: Vec<faer::sparse::Triplet<usize, usize, f64>> = m
        .iter()
        .map(|(v, (r, c))| faer::sparse::Triplet::new(r, c, *v))
        .collect();
    faer::sparse::SparseColMat::try_new_from_triplets(m.rows(), m.cols(), &trips)
        .map_err(|e| Error::numeric(format!("sparse conversion failed: {e:?}")))
}

pub(crate) fn sparse_lu(m: &CsMat<f64>) -> Result<SparseLu> {
    to_faer(m)?
        .sp_lu()
        .map_err(|e| Error::numeric(format!("sparse LU factorization failed: {e:?}")))
}

pub(crate) fn sparse_cholesky(m: &CsMat<f64>) -> Result<SparseLlt> {
    to_faer(m)?
        .sp_cholesky(faer::Side::Lower)
        .map_err(|e| Error::numeric(format!("sparse Cholesky factorization failed: {e:?}")))
}

/// Solve with a cached Cholesky factor against every column of a dense
/// block.
pub(crate) fn llt_solve_columns(llt: &SparseLlt, x: &DMatrix<f64>) -> DMatrix<f64> {
    use faer::linalg::solvers::Solve;
    let rhs = faer::Mat::from_fn(x.nrows(), x.ncols(), |r, c| x[(r, c)]);
    let sol = llt.solve(rhs);
    DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| sol[(r, c)])
}

/// Entrywise symmetry test on a sparse matrix.
pub(crate) fn is_symmetric(m: &CsMat<f64>, rel: f64) -> bool {
    if m.rows() != m.cols() {
        return false;
    }
    let t = csr_transpose(m);
    if t.nnz() != m.nnz() {
        return false;
    }
    let scale = m.iter().fold(0.0f64, |acc, (v, _)| acc.max(v.abs())).max(1e-300);
    m.iter().zip(t.iter()).all(|((a, (ra, ca)), (b, (rb, cb)))| {
        ra == rb && ca == cb && (a - b).abs() <= rel * scale
    })
}

/// Solve with a cached LU against every column of a dense block.
pub(crate) fn lu_solve_columns(lu: &SparseLu, x: &DMatrix<f64>, transpose: bool) -> DMatrix<f64> {
    use faer::linalg::solvers::Solve;
    let rhs = faer::Mat::from_fn(x.nrows(), x.ncols(), |r, c| x[(r, c)]);
    let sol = if transpose { lu.solve_transpose(rhs) } else { lu.solve(rhs) };
    DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| sol[(r, c)])
}
