//! Factor-pair matrix algebra: low-rank blocks W·Vᵀ, a relative-tolerance
//! truncation operator, concatenation arithmetic, trace inner products,
//! and the factored application of the saddle-point operator and its
//! mean-based block-diagonal preconditioner.
//!
//! Every operation keeps the represented N_d × J matrix implicit. Addition
//! concatenates factors, products touch only r×r intermediates, and
//! truncation re-compresses through thin QR factors and one small SVD, so
//! the dense matrix is never formed.

use crate::error::{Error, Result};
use crate::kkt::{lu_solve_columns, sparse_lu, spmm, spmm_t, KktSystem, SparseLu};
use nalgebra::{DMatrix, DVector};
use sprs::TriMat;

/// A matrix held as W·Vᵀ with W of size rows × r and V of size cols × r.
#[derive(Debug, Clone)]
pub struct LowRankBlock {
    w: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl LowRankBlock {
    /// The zero matrix as an empty factor pair.
    pub fn zero(rows: usize, cols: usize) -> LowRankBlock {
        LowRankBlock {
            w: DMatrix::zeros(rows, 0),
            v: DMatrix::zeros(cols, 0),
        }
    }

    pub fn from_factors(w: DMatrix<f64>, v: DMatrix<f64>) -> Result<LowRankBlock> {
        if w.ncols() != v.ncols() {
            return Err(Error::contract(format!(
                "factor ranks differ: {} against {}",
                w.ncols(),
                v.ncols()
            )));
        }
        Ok(LowRankBlock { w, v })
    }

    /// Compress a dense matrix, keeping singular values above
    /// `eps`·σ_max.
    pub fn from_dense(m: &DMatrix<f64>, eps: f64) -> LowRankBlock {
        let svd = m.clone().svd(true, true);
        let sv = &svd.singular_values;
        let u = svd.u.expect("left singular vectors");
        let vt = svd.v_t.expect("right singular vectors");
        let mut idx: Vec<usize> = (0..sv.len()).collect();
        idx.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap());
        let smax = sv[idx[0]];
        if !(smax > 0.0) {
            return LowRankBlock::zero(m.nrows(), m.ncols());
        }
        let keep: Vec<usize> = idx.into_iter().filter(|&i| sv[i] > 0.0 && sv[i] >= eps * smax).collect();
        let mut w = DMatrix::zeros(m.nrows(), keep.len());
        let mut v = DMatrix::zeros(m.ncols(), keep.len());
        for (c, &i) in keep.iter().enumerate() {
            w.column_mut(c).copy_from(&(u.column(i) * sv[i]));
            v.column_mut(c).copy_from(&vt.row(i).transpose());
        }
        LowRankBlock { w, v }
    }

    pub fn rows(&self) -> usize {
        self.w.nrows()
    }

    pub fn cols(&self) -> usize {
        self.v.nrows()
    }

    pub fn rank(&self) -> usize {
        self.w.ncols()
    }

    pub fn left(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn right(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        &self.w * self.v.transpose()
    }

    pub fn scale(&self, c: f64) -> LowRankBlock {
        LowRankBlock {
            w: &self.w * c,
            v: self.v.clone(),
        }
    }

    /// Factor concatenation; ranks add, nothing is compressed.
    pub fn add(&self, other: &LowRankBlock) -> Result<LowRankBlock> {
        if self.rows() != other.rows() || self.cols() != other.cols() {
            return Err(Error::contract(format!(
                "adding a {}×{} block to a {}×{} block",
                other.rows(),
                other.cols(),
                self.rows(),
                self.cols()
            )));
        }
        Ok(LowRankBlock {
            w: hcat(&self.w, &other.w),
            v: hcat(&self.v, &other.v),
        })
    }

    pub fn frobenius(&self) -> f64 {
        block_inner(self, self).max(0.0).sqrt()
    }

    /// Re-compress: thin QR on both factors, SVD of the small core, keep
    /// singular values σ_i ≥ `eps`·σ_1. The result is in SVD form: W has
    /// mutually orthogonal columns of norm σ_i, V has orthonormal columns.
    pub fn truncate(&self, eps: f64) -> LowRankBlock {
        if self.rank() == 0 {
            return self.clone();
        }
        let qw = self.w.clone().qr();
        let qv = self.v.clone().qr();
        let core = qw.r() * qv.r().transpose();
        let svd = core.svd(true, true);
        let sv = &svd.singular_values;
        let u = svd.u.as_ref().expect("left singular vectors");
        let vt = svd.v_t.as_ref().expect("right singular vectors");
        let mut idx: Vec<usize> = (0..sv.len()).collect();
        idx.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap());
        let smax = sv[idx[0]];
        // Cancelling factor pairs leave nothing but rounding noise in the
        // core; its scale is ε times the factor norms, and a spectrum at
        // that level means the represented matrix is zero.
        let noise = f64::EPSILON * self.w.norm() * self.v.norm() * self.rank() as f64;
        if !(smax > noise) {
            return LowRankBlock::zero(self.rows(), self.cols());
        }
        let keep: Vec<usize> = idx
            .into_iter()
            .filter(|&i| sv[i] > 0.0 && sv[i] >= eps * smax)
            .collect();
        let mut wk = DMatrix::zeros(u.nrows(), keep.len());
        let mut vk = DMatrix::zeros(vt.ncols(), keep.len());
        for (c, &i) in keep.iter().enumerate() {
            wk.column_mut(c).copy_from(&(u.column(i) * sv[i]));
            vk.column_mut(c).copy_from(&vt.row(i).transpose());
        }
        LowRankBlock {
            w: qw.q() * wk,
            v: qv.q() * vk,
        }
    }
}

fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    out
}

fn block_inner(a: &LowRankBlock, b: &LowRankBlock) -> f64 {
    if a.rank() == 0 || b.rank() == 0 {
        return 0.0;
    }
    let cw = a.w.transpose() * &b.w;
    let cv = a.v.transpose() * &b.v;
    cw.component_mul(&cv).sum()
}

/// State, control and adjoint blocks of one stacked iterate (or the three
/// rows of a right-hand side).
#[derive(Debug, Clone)]
pub struct BlockTriple {
    pub y: LowRankBlock,
    pub u: LowRankBlock,
    pub p: LowRankBlock,
}

impl BlockTriple {
    pub fn zero(nd: usize, j: usize, cm: usize) -> BlockTriple {
        BlockTriple {
            y: LowRankBlock::zero(nd, j),
            u: LowRankBlock::zero(nd, cm),
            p: LowRankBlock::zero(nd, j),
        }
    }

    pub fn add(&self, other: &BlockTriple) -> Result<BlockTriple> {
        Ok(BlockTriple {
            y: self.y.add(&other.y)?,
            u: self.u.add(&other.u)?,
            p: self.p.add(&other.p)?,
        })
    }

    pub fn scale(&self, c: f64) -> BlockTriple {
        BlockTriple {
            y: self.y.scale(c),
            u: self.u.scale(c),
            p: self.p.scale(c),
        }
    }

    pub fn truncate(&self, eps: f64) -> BlockTriple {
        BlockTriple {
            y: self.y.truncate(eps),
            u: self.u.truncate(eps),
            p: self.p.truncate(eps),
        }
    }

    pub fn total_rank(&self) -> usize {
        self.y.rank() + self.u.rank() + self.p.rank()
    }

    /// Bytes held by the factors (8 per entry), the paper-style memory
    /// figure of a truncated iterate.
    pub fn memory_bytes(&self) -> usize {
        let per = |b: &LowRankBlock| 8 * (b.w.len() + b.v.len());
        per(&self.y) + per(&self.u) + per(&self.p)
    }

    pub fn norm(&self) -> f64 {
        trprod(self, self).max(0.0).sqrt()
    }

    /// Densify into the stacked mode-major vector.
    pub fn to_stacked(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(
            self.y.rows() * self.y.cols() + self.u.rows() * self.u.cols() + self.p.rows() * self.p.cols(),
        );
        out.extend_from_slice(self.y.to_dense().as_slice());
        out.extend_from_slice(self.u.to_dense().as_slice());
        out.extend_from_slice(self.p.to_dense().as_slice());
        DVector::from_vec(out)
    }

    /// Compress a stacked vector into factor pairs.
    pub fn from_stacked(
        x: &DVector<f64>,
        nd: usize,
        j: usize,
        cm: usize,
        eps: f64,
    ) -> Result<BlockTriple> {
        let want = nd * (2 * j + cm);
        if x.len() != want {
            return Err(Error::contract(format!(
                "stacked vector has length {}, the blocks need {want}",
                x.len()
            )));
        }
        let s = x.as_slice();
        let dm = |data: &[f64], c: usize| DMatrix::from_column_slice(nd, c, data);
        Ok(BlockTriple {
            y: LowRankBlock::from_dense(&dm(&s[..nd * j], j), eps),
            u: LowRankBlock::from_dense(&dm(&s[nd * j..nd * (j + cm)], cm), eps),
            p: LowRankBlock::from_dense(&dm(&s[nd * (j + cm)..], j), eps),
        })
    }
}

/// Frobenius inner product of two triples through r×r intermediates.
pub fn trprod(a: &BlockTriple, b: &BlockTriple) -> f64 {
    block_inner(&a.y, &b.y) + block_inner(&a.u, &b.u) + block_inner(&a.p, &b.p)
}

fn check_dims(sys: &KktSystem, x: &BlockTriple) -> Result<()> {
    let (nd, j, cm) = (sys.n_dofs(), sys.n_chaos(), sys.control_modes());
    let ok = x.y.rows() == nd
        && x.y.cols() == j
        && x.u.rows() == nd
        && x.u.cols() == cm
        && x.p.rows() == nd
        && x.p.cols() == j;
    if ok {
        Ok(())
    } else {
        Err(Error::contract(format!(
            "triple of shapes {}×{}/{}×{}/{}×{} against a system needing {nd}×{j}/{nd}×{cm}/{nd}×{j}",
            x.y.rows(),
            x.y.cols(),
            x.u.rows(),
            x.u.cols(),
            x.p.rows(),
            x.p.cols()
        )))
    }
}

fn zero_active_rows(sys: &KktSystem, w: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = w.clone();
    for d in 0..out.nrows() {
        if !sys.is_inactive(d) {
            out.row_mut(d).fill(0.0);
        }
    }
    out
}

fn assemble_block(
    rows: usize,
    cols: usize,
    w_parts: Vec<DMatrix<f64>>,
    v_parts: Vec<DMatrix<f64>>,
) -> LowRankBlock {
    let rank: usize = w_parts.iter().map(|m| m.ncols()).sum();
    if rank == 0 {
        return LowRankBlock::zero(rows, cols);
    }
    let mut w = DMatrix::zeros(rows, rank);
    let mut v = DMatrix::zeros(cols, rank);
    let mut at = 0;
    for (wp, vp) in w_parts.iter().zip(&v_parts) {
        w.view_mut((0, at), (rows, wp.ncols())).copy_from(wp);
        v.view_mut((0, at), (cols, vp.ncols())).copy_from(vp);
        at += wp.ncols();
    }
    LowRankBlock { w, v }
}

/// Apply the saddle-point operator to a factored triple, truncating each
/// output block with `eps`.
pub fn apply_operator(sys: &KktSystem, x: &BlockTriple, eps: f64) -> Result<BlockTriple> {
    use crate::kkt::Formulation;
    check_dims(sys, x)?;
    let (nd, j, cm) = (sys.n_dofs(), sys.n_chaos(), sys.control_modes());
    let mass = &sys.blocks.mass;
    let g0 = &sys.stochastic.g_mats[0];
    let g0v = &sys.stochastic.g_vecs[0];

    // Row 1: M_γ y − A* p.
    let mut w1 = Vec::new();
    let mut v1 = Vec::new();
    if x.y.rank() > 0 {
        w1.push(spmm(mass, x.y.left()));
        let mut gv = x.y.right().clone();
        for jj in 0..j {
            gv.row_mut(jj).scale_mut(sys.g_gamma[jj]);
        }
        v1.push(gv);
    }
    if x.p.rank() > 0 {
        for (i, k) in sys.blocks.stiffness.iter().enumerate() {
            if k.nnz() == 0 {
                continue;
            }
            w1.push(-spmm_t(k, x.p.left()));
            v1.push(spmm_t(&sys.stochastic.g_mats[i], x.p.right()));
        }
    }

    // Row 2: μ(G_0⊗I) u + (G_0⊗D_I) p.
    let mut w2 = Vec::new();
    let mut v2 = Vec::new();
    match sys.formulation {
        Formulation::StochasticControl => {
            if x.u.rank() > 0 {
                w2.push(x.u.left() * sys.mu);
                v2.push(spmm(g0, x.u.right()));
            }
            if x.p.rank() > 0 {
                w2.push(zero_active_rows(sys, x.p.left()));
                v2.push(spmm(g0, x.p.right()));
            }
        }
        Formulation::DeterministicControl => {
            if x.u.rank() > 0 {
                w2.push(x.u.left() * sys.mu);
                v2.push(x.u.right().clone());
            }
            if x.p.rank() > 0 {
                let coeff = x.p.right().transpose() * g0v;
                let col = zero_active_rows(sys, x.p.left()) * coeff;
                w2.push(DMatrix::from_column_slice(col.nrows(), 1, col.as_slice()));
                v2.push(DMatrix::from_element(1, 1, 1.0));
            }
        }
    }

    // Row 3: −A y + (G_0⊗M) u.
    let mut w3 = Vec::new();
    let mut v3 = Vec::new();
    if x.y.rank() > 0 {
        for (i, k) in sys.blocks.stiffness.iter().enumerate() {
            if k.nnz() == 0 {
                continue;
            }
            w3.push(-spmm(k, x.y.left()));
            v3.push(spmm(&sys.stochastic.g_mats[i], x.y.right()));
        }
    }
    if x.u.rank() > 0 {
        match sys.formulation {
            Formulation::StochasticControl => {
                w3.push(spmm(mass, x.u.left()));
                v3.push(spmm(g0, x.u.right()));
            }
            Formulation::DeterministicControl => {
                w3.push(spmm(mass, x.u.left()));
                let g0m = DMatrix::from_column_slice(j, 1, g0v.as_slice());
                v3.push(g0m * x.u.right().transpose());
            }
        }
    }

    Ok(BlockTriple {
        y: assemble_block(nd, j, w1, v1).truncate(eps),
        u: assemble_block(nd, cm, w2, v2).truncate(eps),
        p: assemble_block(nd, j, w3, v3).truncate(eps),
    })
}

/// The mean-based block-diagonal preconditioner: mass and variance weights
/// on the state row, the scaled identity on the control row, and an
/// approximate Schur complement built from the shifted mean stiffness
/// K̃_0 = K_0 + √((1+γ)/μ)·M·D_I on the adjoint row. Factorizations are
/// computed once and reused across a solve.
pub struct Preconditioner {
    mass_lu: SparseLu,
    ktilde_lu: SparseLu,
    mass: sprs::CsMat<f64>,
    g_gamma: DVector<f64>,
    mu: f64,
    nd: usize,
    j: usize,
    cm: usize,
}

impl Preconditioner {
    pub fn new(sys: &KktSystem) -> Result<Preconditioner> {
        let nd = sys.n_dofs();
        let shift = ((1.0 + sys.gamma) / sys.mu).sqrt();
        let mut tri = TriMat::new((nd, nd));
        for (v, (r, c)) in sys.blocks.stiffness[0].iter() {
            tri.add_triplet(r, c, *v);
        }
        for (v, (r, c)) in sys.blocks.mass.iter() {
            if sys.is_inactive(c) {
                tri.add_triplet(r, c, shift * v);
            }
        }
        let ktilde = tri.to_csr();
        Ok(Preconditioner {
            mass_lu: sparse_lu(&sys.blocks.mass)?,
            ktilde_lu: sparse_lu(&ktilde)?,
            mass: sys.blocks.mass.clone(),
            g_gamma: sys.g_gamma.clone(),
            mu: sys.mu,
            nd,
            j: sys.n_chaos(),
            cm: sys.control_modes(),
        })
    }

    fn check(&self, x: &BlockTriple) -> Result<()> {
        let ok = x.y.rows() == self.nd
            && x.y.cols() == self.j
            && x.u.rows() == self.nd
            && x.u.cols() == self.cm
            && x.p.rows() == self.nd
            && x.p.cols() == self.j;
        if ok {
            Ok(())
        } else {
            Err(Error::contract("triple shapes do not match the preconditioner"))
        }
    }

    /// Solve P_0 z = x block by block in factored form.
    pub fn apply(&self, x: &BlockTriple, eps: f64) -> Result<BlockTriple> {
        self.check(x)?;
        let y = if x.y.rank() == 0 {
            x.y.clone()
        } else {
            let w = lu_solve_columns(&self.mass_lu, x.y.left(), false);
            let mut v = x.y.right().clone();
            for jj in 0..self.j {
                v.row_mut(jj).unscale_mut(self.g_gamma[jj]);
            }
            LowRankBlock::from_factors(w, v)?.truncate(eps)
        };
        let u = if x.u.rank() == 0 {
            x.u.clone()
        } else {
            x.u.scale(1.0 / self.mu).truncate(eps)
        };
        let p = if x.p.rank() == 0 {
            x.p.clone()
        } else {
            let inner = lu_solve_columns(&self.ktilde_lu, x.p.left(), false);
            let w = lu_solve_columns(&self.ktilde_lu, &spmm(&self.mass, &inner), true);
            let mut v = x.p.right().clone();
            for jj in 0..self.j {
                v.row_mut(jj).scale_mut(self.g_gamma[jj]);
            }
            LowRankBlock::from_factors(w, v)?.truncate(eps)
        };
        Ok(BlockTriple { y, u, p })
    }
}

/// Free-function alias of [`Preconditioner::apply`].
pub fn apply_preconditioner(pre: &Preconditioner, x: &BlockTriple, eps: f64) -> Result<BlockTriple> {
    pre.apply(x, eps)
}
