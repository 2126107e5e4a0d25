use nalgebra::{DMatrix, DVector};

use super::{symmetrize, Factor};
use crate::error::{Error, Result};

/// Per-group blocks of a two-level sparse system.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLevelBlock {
    /// a₂,ᵢ (q)
    pub a2: DVector<f64>,
    /// A₂₂,ᵢ (q×q)
    pub a22: DMatrix<f64>,
    /// A₁₂,ᵢ (p×q)
    pub a12: DMatrix<f64>,
}

/// The system A x = a where A has an arrowhead structure: a dense p×p
/// leading block, dense p×q borders, and a block-diagonal trailing part.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLevelSparseSystem {
    pub a1: DVector<f64>,
    pub a11: DMatrix<f64>,
    pub groups: Vec<TwoLevelBlock>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLevelBlockSolution {
    pub x2: DVector<f64>,
    pub ainv22: DMatrix<f64>,
    pub ainv12: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLevelSolution {
    pub x1: DVector<f64>,
    pub ainv11: DMatrix<f64>,
    pub groups: Vec<TwoLevelBlockSolution>,
}

impl TwoLevelSparseSystem {
    pub fn p(&self) -> usize {
        self.a1.len()
    }

    pub fn q(&self) -> usize {
        self.groups.first().map_or(0, |g| g.a2.len())
    }

    /// Total dimension p + mq.
    pub fn dim(&self) -> usize {
        self.p() + self.groups.len() * self.q()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        let q = self.q();
        if self.a11.shape() != (p, p) {
            return Err(Error::DimensionMismatch(format!("A11 is {:?}, expected ({p}, {p})", self.a11.shape())));
        }
        for (i, g) in self.groups.iter().enumerate() {
            if g.a2.len() != q || g.a22.shape() != (q, q) || g.a12.shape() != (p, q) {
                return Err(Error::DimensionMismatch(format!("blocks of group {i}")));
            }
        }
        Ok(())
    }

    /// Dense (p+mq)×(p+mq) matrix with layout [β, u₁, …, u_m].
    pub fn assemble_dense(&self) -> DMatrix<f64> {
        let p = self.p();
        let q = self.q();
        let n = self.dim();
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (p, p)).copy_from(&self.a11);
        for (i, g) in self.groups.iter().enumerate() {
            let o = p + i * q;
            a.view_mut((0, o), (p, q)).copy_from(&g.a12);
            a.view_mut((o, 0), (q, p)).copy_from(&g.a12.transpose());
            a.view_mut((o, o), (q, q)).copy_from(&g.a22);
        }
        a
    }

    /// Stacked right-hand side [a₁; a₂,₁; …; a₂,m].
    pub fn assemble_rhs(&self) -> DVector<f64> {
        let p = self.p();
        let q = self.q();
        let mut a = DVector::zeros(self.dim());
        a.rows_mut(0, p).copy_from(&self.a1);
        for (i, g) in self.groups.iter().enumerate() {
            a.rows_mut(p + i * q, q).copy_from(&g.a2);
        }
        a
    }

    /// Eliminate the group blocks, leaving the Schur complement factored.
    pub fn factor(&self) -> Result<TwoLevelFactorization> {
        self.validate()?;
        let mut omega = self.a1.clone();
        let mut big_omega = self.a11.clone();
        let mut groups = Vec::with_capacity(self.groups.len());
        for (i, g) in self.groups.iter().enumerate() {
            let f = Factor::new(&g.a22).ok_or(Error::SingularBlock(i))?;
            let a22inv_a2 = f.solve_vec(&g.a2);
            let a22inv_a12t = f.solve(&g.a12.transpose());
            omega -= &g.a12 * &a22inv_a2;
            big_omega -= &g.a12 * &a22inv_a12t;
            groups.push(GroupFactor { a22: f, a22inv_a2, a22inv_a12t });
        }
        let omega_factor = Factor::new(&big_omega).ok_or(Error::SingularSchur)?;
        Ok(TwoLevelFactorization { omega, omega_factor, groups })
    }
}

#[derive(Debug, Clone)]
struct GroupFactor {
    a22: Factor,
    a22inv_a2: DVector<f64>,
    /// A₂₂,ᵢ⁻¹ A₁₂,ᵢᵀ (q×p)
    a22inv_a12t: DMatrix<f64>,
}

/// Forward-elimination state of a two-level system. Used both by the solver
/// and by the Gibbs sampler to draw from N(A⁻¹a, A⁻¹).
#[derive(Debug, Clone)]
pub struct TwoLevelFactorization {
    omega: DVector<f64>,
    omega_factor: Factor,
    groups: Vec<GroupFactor>,
}

impl TwoLevelFactorization {
    pub fn solve(&self) -> TwoLevelSolution {
        let ainv11 = symmetrize(&self.omega_factor.inverse());
        let x1 = &ainv11 * &self.omega;
        let groups = self
            .groups
            .iter()
            .map(|g| {
                let x2 = &g.a22inv_a2 - &g.a22inv_a12t * &x1;
                let ainv12 = -(&g.a22inv_a12t * &ainv11).transpose();
                // A22⁻¹(I − A12ᵀ A¹²) = A22⁻¹ − (A22⁻¹A12ᵀ) A¹²
                let ainv22 = symmetrize(&(g.a22.inverse() - &g.a22inv_a12t * &ainv12));
                TwoLevelBlockSolution { x2, ainv22, ainv12 }
            })
            .collect();
        TwoLevelSolution { x1, ainv11, groups }
    }

    /// One joint draw from N(A⁻¹a, A⁻¹) using `normal` as a source of
    /// independent standard normal deviates. Requires every factor to be a
    /// Cholesky factor.
    pub fn sample(&self, normal: &mut dyn FnMut() -> f64) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
        let p = self.omega.len();
        let z = DVector::from_fn(p, |_, _| normal());
        let mean = self.omega_factor.solve_vec(&self.omega);
        let noise = self
            .omega_factor
            .precision_noise(&z)
            .ok_or_else(|| Error::NumericalBreakdown("Schur complement is not SPD".into()))?;
        let beta = mean + noise;
        let mut us = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let q = g.a22inv_a2.len();
            let z = DVector::from_fn(q, |_, _| normal());
            let noise =
                g.a22.precision_noise(&z).ok_or_else(|| Error::NumericalBreakdown("group block is not SPD".into()))?;
            us.push(&g.a22inv_a2 - &g.a22inv_a12t * &beta + noise);
        }
        Ok((beta, us))
    }
}

/// Solve a two-level sparse matrix problem, returning x = A⁻¹a and the
/// blocks of A⁻¹ at the positions of the non-zero blocks of A.
pub fn solve_two_level(sys: &TwoLevelSparseSystem) -> Result<TwoLevelSolution> {
    Ok(sys.factor()?.solve())
}

impl TwoLevelSolution {
    /// Stacked [x₁; x₂,₁; …; x₂,m].
    pub fn stacked_x(&self) -> DVector<f64> {
        let mut parts: Vec<f64> = self.x1.iter().copied().collect();
        for g in &self.groups {
            parts.extend(g.x2.iter());
        }
        DVector::from_vec(parts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_system(p: usize, q: usize, m: usize) -> TwoLevelSparseSystem {
        TwoLevelSparseSystem {
            a1: DVector::from_fn(p, |i, _| i as f64 + 1.0),
            a11: DMatrix::identity(p, p),
            groups: (0..m)
                .map(|i| TwoLevelBlock {
                    a2: DVector::from_element(q, -(i as f64)),
                    a22: DMatrix::identity(q, q),
                    a12: DMatrix::zeros(p, q),
                })
                .collect(),
        }
    }

    #[test]
    fn identity_case() {
        let sys = identity_system(3, 2, 4);
        let sol = solve_two_level(&sys).unwrap();
        assert_eq!(sol.stacked_x(), sys.assemble_rhs());
        assert_eq!(sol.ainv11, DMatrix::identity(3, 3));
        for g in &sol.groups {
            assert_eq!(g.ainv22, DMatrix::identity(2, 2));
            assert_eq!(g.ainv12, DMatrix::zeros(3, 2));
        }
    }

    #[test]
    fn identity_blocks_assemble_to_identity() {
        let sys = identity_system(2, 3, 3);
        assert_eq!(sys.assemble_dense(), DMatrix::identity(11, 11));
    }

    #[test]
    fn dense_layout_two_groups() {
        let mut sys = identity_system(2, 1, 2);
        sys.groups[1].a12 = DMatrix::from_row_slice(2, 1, &[5.0, 6.0]);
        sys.groups[1].a22 = DMatrix::from_element(1, 1, 7.0);
        let a = sys.assemble_dense();
        assert_eq!(a[(0, 3)], 5.0);
        assert_eq!(a[(1, 3)], 6.0);
        assert_eq!(a[(3, 0)], 5.0);
        assert_eq!(a[(3, 1)], 6.0);
        assert_eq!(a[(3, 3)], 7.0);
        assert_eq!(a[(2, 3)], 0.0);
        assert_eq!(a[(0, 2)], 0.0);
    }

    #[test]
    fn singular_group_block_is_reported() {
        let mut sys = identity_system(2, 2, 3);
        sys.groups[1].a22 = DMatrix::zeros(2, 2);
        assert!(matches!(solve_two_level(&sys), Err(Error::SingularBlock(1))));
    }

    #[test]
    fn singular_schur_is_reported() {
        let mut sys = identity_system(2, 1, 1);
        sys.a11 = DMatrix::zeros(2, 2);
        assert!(matches!(solve_two_level(&sys), Err(Error::SingularSchur)));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut sys = identity_system(2, 2, 2);
        sys.groups[0].a12 = DMatrix::zeros(3, 2);
        assert!(matches!(solve_two_level(&sys), Err(Error::DimensionMismatch(_))));
    }
}
