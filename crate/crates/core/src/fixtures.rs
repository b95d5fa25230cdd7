//! Construction helpers shared by the unit tests: small assembled systems
//! on coarse grids, deliberately oversized blocks for guard tests, and
//! random low-rank triples.

use crate::assembly::{
    assemble_load, assemble_mass, assemble_stiffness, assemble_volume_load, DeterministicBlocks,
    Penalty,
};
use crate::chaos::{build_stochastic_matrices, ChaosBasis, StochasticMatrices};
use crate::fields::{constant, constant_vector};
use crate::lowrank::{BlockTriple, LowRankBlock};
use crate::mesh::{classify_inflow, Mesh, Rect};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use sprs::CsMat;
use std::f64::consts::PI;

/// Blocks whose stacked system crosses the materialization guard.
pub(crate) fn oversized_blocks() -> (DeterministicBlocks, StochasticMatrices, ChaosBasis) {
    let n = 600_000;
    let eye = CsMat::eye(n);
    let basis = ChaosBasis::new(0, 0);
    let stochastic = build_stochastic_matrices(&basis);
    let blocks = DeterministicBlocks {
        mass: eye.clone(),
        stiffness: vec![eye],
        loads: vec![DVector::zeros(n)],
        desired_load: DVector::zeros(n),
        penalty: Penalty::default(),
        viscosity: 1.0,
    };
    (blocks, stochastic, basis)
}

/// Assembled blocks on an nx×ny criss-cross grid with `n_modes` synthetic
/// fluctuation fields in both coefficient slots. Every load and the target
/// load are nonzero, so right-hand sides exercise all factor columns.
pub(crate) fn grid_blocks(nx: usize, ny: usize, n_modes: usize) -> (Mesh, DeterministicBlocks) {
    let mesh = Mesh::grid(Rect::unit_centered(), nx, ny).unwrap();
    let mean_a = |x: [f64; 2]| 1.0 + 0.3 * (PI * x[0]).sin() * (PI * x[1]).cos();
    let mean_b = constant_vector([0.6, 1.0]);
    let datum = |x: [f64; 2]| x[0] + 0.5 * x[1];
    let inflow = classify_inflow(&mesh, &mean_b);
    let pen = Penalty::default();
    let mut stiffness =
        vec![assemble_stiffness(&mesh, &mean_a, &mean_b, &inflow, Some(pen)).unwrap()];
    let mut loads = vec![assemble_load(
        &mesh,
        Some(&constant(1.0)),
        &datum,
        &mean_a,
        &mean_b,
        &inflow,
        Some(pen.boundary),
    )
    .unwrap()];
    for k in 1..=n_modes {
        let kf = k as f64;
        let ak = move |x: [f64; 2]| 0.4 / kf * (kf * PI * x[0]).sin() * (PI * x[1]).sin();
        let bk = move |x: [f64; 2]| {
            let s = 0.3 / kf * (PI * x[0]).cos() * (kf * PI * x[1]).cos();
            [s, -s]
        };
        stiffness.push(assemble_stiffness(&mesh, &ak, &bk, &inflow, None).unwrap());
        loads.push(assemble_load(&mesh, None, &datum, &ak, &bk, &inflow, None).unwrap());
    }
    let bump = |x: [f64; 2]| (-4.0 * (x[0].powi(2) + x[1].powi(2))).exp();
    let desired_load = assemble_volume_load(&mesh, &bump).unwrap();
    let blocks = DeterministicBlocks {
        mass: assemble_mass(&mesh),
        stiffness,
        loads,
        desired_load,
        penalty: pen,
        viscosity: 1.0,
    };
    (mesh, blocks)
}

pub(crate) fn random_block(
    rows: usize,
    cols: usize,
    rank: usize,
    rng: &mut impl Rng,
) -> LowRankBlock {
    let r = rank.min(rows.min(cols));
    LowRankBlock::from_factors(
        DMatrix::from_fn(rows, r, |_, _| rng.random_range(-1.0..1.0)),
        DMatrix::from_fn(cols, r, |_, _| rng.random_range(-1.0..1.0)),
    )
    .unwrap()
}

pub(crate) fn random_triple(
    nd: usize,
    j: usize,
    cm: usize,
    rank: usize,
    rng: &mut impl Rng,
) -> BlockTriple {
    BlockTriple {
        y: random_block(nd, j, rank, rng),
        u: random_block(nd, cm, rank, rng),
        p: random_block(nd, j, rank, rng),
    }
}
