//! Brute-force many-body reference for short chains.
//!
//! The quadratic Hamiltonian
//! `H = Σ c†_i A_ij c_j + ½ Σ (c†_i B_ij c†_j + c_j B_ij c_i)`
//! is written out in the full `2^L` occupation-number basis and diagonalized
//! densely. Nothing here goes through the polar decomposition, which makes it
//! an independent check on the determinant fidelity, the susceptibility
//! estimators and the gap convention.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use serde::Serialize;

use crate::fidelity::{chi_closed_form, fidelity};
use crate::model::{
    build_matrices, build_z, sample_realization, shift_realization, ChainSpec, CouplingMatrices, Direction,
    DisorderRealization,
};
use crate::rng::GaussianStream;

pub const MAX_SITES: usize = 12;

/// Ground states closer than this to the first excited level are treated as
/// degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// Dense Fock-space Hamiltonian. Basis state `s` has mode `i` occupied iff
/// bit `i` of `s` is set; modes are ordered `0..L` for the Jordan–Wigner
/// string.
#[derive(Debug, Clone)]
pub struct FockOperator {
    pub length: usize,
    pub matrix: DMatrix<f64>,
}

impl FockOperator {
    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    /// Largest element connecting opposite fermion parities.
    pub fn cross_parity_max(&self) -> f64 {
        let n = self.dimension();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if (i.count_ones() + j.count_ones()) % 2 == 1 {
                    worst = worst.max(self.matrix[(i, j)].abs());
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub e0: f64,
    pub e1: f64,
    pub vector: DVector<f64>,
    /// Fermion parity of the ground state (0 even, 1 odd).
    pub parity: u32,
    pub degenerate: bool,
}

impl GroundState {
    pub fn gap(&self) -> f64 {
        self.e1 - self.e0
    }
}

#[derive(Clone, Copy)]
enum Ladder {
    Create(usize),
    Annihilate(usize),
}

/// Apply a product of ladder operators, rightmost first.
fn apply(ops: &[Ladder], state: usize) -> Option<(usize, f64)> {
    let mut s = state;
    let mut sign = 1.0;
    for op in ops.iter().rev() {
        let (mode, create) = match *op {
            Ladder::Create(m) => (m, true),
            Ladder::Annihilate(m) => (m, false),
        };
        let bit = 1usize << mode;
        let occupied = s & bit != 0;
        if occupied == create {
            return None;
        }
        if (s & (bit - 1)).count_ones() % 2 == 1 {
            sign = -sign;
        }
        s ^= bit;
    }
    Some((s, sign))
}

pub fn fock_hamiltonian(m: &CouplingMatrices) -> Result<FockOperator> {
    let length = m.a.nrows();
    if length > MAX_SITES {
        return Err(Error::Capacity { length, max: MAX_SITES });
    }
    let dim = 1usize << length;
    let mut h = DMatrix::zeros(dim, dim);
    for s in 0..dim {
        for i in 0..length {
            for j in 0..length {
                let a = m.a[(i, j)];
                if a != 0.0 {
                    if let Some((t, sign)) = apply(&[Ladder::Create(i), Ladder::Annihilate(j)], s) {
                        h[(t, s)] += a * sign;
                    }
                }
                let b = m.b[(i, j)];
                if b != 0.0 {
                    if let Some((t, sign)) = apply(&[Ladder::Create(i), Ladder::Create(j)], s) {
                        h[(t, s)] += 0.5 * b * sign;
                    }
                    if let Some((t, sign)) = apply(&[Ladder::Annihilate(j), Ladder::Annihilate(i)], s) {
                        h[(t, s)] += 0.5 * b * sign;
                    }
                }
            }
        }
    }
    Ok(FockOperator { length, matrix: h })
}

pub fn build_fock_hamiltonian(r: &DisorderRealization) -> Result<FockOperator> {
    if r.len() > MAX_SITES {
        return Err(Error::Capacity {
            length: r.len(),
            max: MAX_SITES,
        });
    }
    fock_hamiltonian(&build_matrices(r))
}

fn parity_block_indices(dim: usize, parity: u32) -> Vec<usize> {
    (0..dim).filter(|s| s.count_ones() % 2 == parity).collect()
}

fn block_eigen(h: &FockOperator, indices: &[usize]) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let n = indices.len();
    let block = DMatrix::from_fn(n, n, |i, j| h.matrix[(indices[i], indices[j])]);
    SymmetricEigen::try_new(block, f64::EPSILON, 1_000_000)
        .ok_or_else(|| Error::Numeric("dense eigensolver did not converge".into()))
}

/// Every eigenvalue of `H`, ascending. Diagonalized block by block in parity.
pub fn fock_spectrum(h: &FockOperator) -> Result<Vec<f64>> {
    let dim = h.dimension();
    let mut all = Vec::with_capacity(dim);
    for parity in 0..2 {
        let eig = block_eigen(h, &parity_block_indices(dim, parity))?;
        all.extend(eig.eigenvalues.iter().copied());
    }
    all.sort_by(f64::total_cmp);
    Ok(all)
}

pub fn exact_ground(h: &FockOperator) -> Result<GroundState> {
    let dim = h.dimension();
    // (energy, parity, column) of the two lowest levels overall
    let mut levels: Vec<(f64, u32, usize)> = Vec::new();
    let mut blocks = Vec::with_capacity(2);
    for parity in 0..2u32 {
        let indices = parity_block_indices(dim, parity);
        let eig = block_eigen(h, &indices)?;
        let mut order: Vec<usize> = (0..indices.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        for &k in order.iter().take(2) {
            levels.push((eig.eigenvalues[k], parity, k));
        }
        blocks.push((indices, eig));
    }
    levels.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (e0, parity, column) = levels[0];
    let e1 = levels[1].0;
    let (indices, eig) = &blocks[parity as usize];
    let mut vector = DVector::zeros(dim);
    for (row, &s) in indices.iter().enumerate() {
        vector[s] = eig.eigenvectors[(row, column)];
    }
    let norm = vector.norm();
    vector /= norm;
    Ok(GroundState {
        e0,
        e1,
        vector,
        parity,
        degenerate: e1 - e0 < DEGENERACY_TOL,
    })
}

fn nondegenerate_ground(r: &DisorderRealization) -> Result<GroundState> {
    let g = exact_ground(&build_fock_hamiltonian(r)?)?;
    if g.degenerate {
        return Err(Error::Degenerate { gap: g.gap() });
    }
    Ok(g)
}

/// `|<ψ0(x)|ψ0(x + dx)>|` from exact ground states.
pub fn exact_fidelity(r: &DisorderRealization, dir: Direction, dx: f64) -> Result<f64> {
    let a = nondegenerate_ground(r)?;
    if dx == 0.0 {
        return Ok(a.vector.norm_squared());
    }
    let b = nondegenerate_ground(&shift_realization(r, dir, dx))?;
    Ok(a.vector.dot(&b.vector).abs())
}

/// `-2 ln |<ψ0(x)|ψ0(x + dx)>| / dx²`.
pub fn exact_log_fidelity_chi(r: &DisorderRealization, dir: Direction, dx: f64) -> Result<f64> {
    let f = exact_fidelity(r, dir, dx)?;
    if f <= 0.0 {
        return Err(Error::StepTooLarge { step: dx });
    }
    Ok(-2.0 * f.ln() / (dx * dx))
}

/// Richardson-extrapolated oracle susceptibility from steps `dx` and `dx/2`.
///
/// The forward difference is accurate to first order in `dx`, so
/// `2 χ(dx/2) - χ(dx)` cancels the leading error.
pub fn exact_chi(r: &DisorderRealization, dir: Direction, dx: f64) -> Result<f64> {
    let coarse = exact_log_fidelity_chi(r, dir, dx)?;
    let fine = exact_log_fidelity_chi(r, dir, dx / 2.0)?;
    Ok(2.0 * fine - coarse)
}

/// Outcome of comparing the determinant fidelity and the closed-form
/// susceptibility with this module on random short chains.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub n_realizations: usize,
    /// Fidelity comparisons made (two directions per realization).
    pub compared: usize,
    /// Comparisons skipped for a degenerate exact ground state.
    pub skipped: usize,
    pub max_fidelity_error: f64,
    pub chi_compared: usize,
    pub max_chi_rel_error: f64,
    pub passed: bool,
}

pub const CHECK_FIDELITY_TOL: f64 = 1e-6;
pub const CHECK_CHI_RTOL: f64 = 1e-3;
/// Minimum share of fidelity comparisons that must be non-degenerate.
pub const CHECK_MIN_COMPARABLE: f64 = 0.95;
/// The finite-difference oracle susceptibility is trusted only above this gap.
const CHECK_MIN_GAP: f64 = 1e-2;
const CHECK_DX: f64 = 0.05;

/// Random chains of 4, 6 and 8 sites at σ = 0.1 and 0.3, means drawn per
/// realization, both directions.
pub fn oracle_check(master_seed: u64, n_realizations: usize) -> Result<OracleCheck> {
    let mut report = OracleCheck {
        n_realizations,
        compared: 0,
        skipped: 0,
        max_fidelity_error: 0.0,
        chi_compared: 0,
        max_chi_rel_error: 0.0,
        passed: false,
    };
    for index in 0..n_realizations as u64 {
        let length = [4, 6, 8][(index % 3) as usize];
        let sigma = if (index / 3) % 2 == 0 { 0.1 } else { 0.3 };
        let mut means = GaussianStream::for_realization(!master_seed, index);
        let spec = ChainSpec::new(length, means.next_normal(0.8, 0.5), means.next_normal(0.4, 0.6), sigma)?;
        let r = sample_realization(&spec, master_seed, index)?;
        let ground = exact_ground(&build_fock_hamiltonian(&r)?)?;
        for dir in [Direction::Field, Direction::Anisotropy] {
            let exact = match exact_fidelity(&r, dir, CHECK_DX) {
                Ok(f) => f,
                Err(Error::Degenerate { .. }) => {
                    report.skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let det = fidelity(&build_z(&r), &build_z(&shift_realization(&r, dir, CHECK_DX)))?.value;
            report.max_fidelity_error = report.max_fidelity_error.max((det - exact).abs());
            report.compared += 1;
            if ground.gap() > CHECK_MIN_GAP {
                let oracle = exact_chi(&r, dir, 1e-3)?;
                let closed = chi_closed_form(&r, dir)?.chi;
                report.max_chi_rel_error = report.max_chi_rel_error.max((oracle - closed).abs() / oracle);
                report.chi_compared += 1;
            }
        }
    }
    let total = report.compared + report.skipped;
    report.passed = report.max_fidelity_error <= CHECK_FIDELITY_TOL
        && report.max_chi_rel_error <= CHECK_CHI_RTOL
        && report.compared as f64 >= CHECK_MIN_COMPARABLE * total as f64;
    Ok(report)
}
