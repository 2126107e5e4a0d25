//! Block-sparse linear systems arising from two- and three-level random effects
//! models, with solvers that return the solution vector together with the
//! sub-blocks of the inverse matching the non-zero blocks of the system matrix.
//!
//! Blocks are stored densely; the global matrix is only ever built by
//! [`TwoLevelSparseSystem::assemble_dense`] and its three-level counterpart,
//! which exist for testing and for the naive reference implementation.

mod three_level;
mod two_level;

pub use three_level::{
    solve_three_level, ThreeLevelFactorization, ThreeLevelGroup, ThreeLevelGroupSolution, ThreeLevelSolution,
    ThreeLevelSparseSystem, ThreeLevelSubgroup, ThreeLevelSubgroupSolution,
};
pub use two_level::{
    solve_two_level, TwoLevelBlock, TwoLevelBlockSolution, TwoLevelFactorization, TwoLevelSolution,
    TwoLevelSparseSystem,
};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

/// Factorization of a small square block. Cholesky is tried first; a
/// partially pivoted LU is used when the block is not numerically SPD.
#[derive(Debug, Clone)]
pub enum Factor {
    Cholesky(Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
}

impl Factor {
    /// Factor `m`. Returns `None` when the matrix is singular to working precision.
    pub fn new(m: &DMatrix<f64>) -> Option<Factor> {
        if !m.is_square() || m.iter().any(|v| !v.is_finite()) {
            return None;
        }
        if m.nrows() == 0 {
            return Cholesky::new(m.clone()).map(Factor::Cholesky);
        }
        if let Some(c) = Cholesky::new(symmetrize(m)) {
            return Some(Factor::Cholesky(c));
        }
        let lu = LU::new(m.clone());
        let diag = lu.u().diagonal();
        let max = diag.amax();
        let min = diag.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
        if max == 0.0 || min <= max * f64::EPSILON * m.nrows() as f64 {
            return None;
        }
        log::warn!("{}x{} block is not positive definite; falling back to LU", m.nrows(), m.ncols());
        Some(Factor::Lu(lu))
    }

    pub fn dim(&self) -> usize {
        match self {
            Factor::Cholesky(c) => c.l_dirty().nrows(),
            Factor::Lu(lu) => lu.l().nrows(),
        }
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Factor::Cholesky(c) => c.solve(b),
            Factor::Lu(lu) => lu.solve(b).expect("LU factor was checked to be invertible"),
        }
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            Factor::Cholesky(c) => c.solve(b),
            Factor::Lu(lu) => lu.solve(b).expect("LU factor was checked to be invertible"),
        }
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        match self {
            Factor::Cholesky(c) => c.inverse(),
            Factor::Lu(lu) => lu.try_inverse().expect("LU factor was checked to be invertible"),
        }
    }

    pub fn cholesky(&self) -> Option<&Cholesky<f64, Dyn>> {
        match self {
            Factor::Cholesky(c) => Some(c),
            Factor::Lu(_) => None,
        }
    }

    /// Draw from N(0, M⁻¹) given standard normal deviates `z`, where M is the
    /// factored matrix. Requires a Cholesky factor.
    pub fn precision_noise(&self, z: &DVector<f64>) -> Option<DVector<f64>> {
        let c = self.cholesky()?;
        let l = c.l();
        l.tr_solve_lower_triangular(z)
    }
}

/// (M + Mᵀ)/2.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Inverse of an SPD matrix, falling back to LU.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    Factor::new(m).map(|f| symmetrize(&f.inverse()))
}

/// Block-diagonal matrix built from square blocks.
pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut at = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((at, at), (k, k)).copy_from(*b);
        at += k;
    }
    out
}

/// Trace of AᵀB without forming the product.
pub fn trace_atb(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
