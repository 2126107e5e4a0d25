use nalgebra::{DMatrix, DVector};

use super::{symmetrize, Factor};
use crate::error::{Error, Result};

/// Blocks attached to subgroup (i, j).
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeLevelSubgroup {
    /// a₂,ᵢⱼ (q₂)
    pub a2: DVector<f64>,
    /// A₂₂,ᵢⱼ (q₂×q₂)
    pub a22: DMatrix<f64>,
    /// A₁₂,ᵢⱼ (p×q₂)
    pub a12: DMatrix<f64>,
    /// A₁₂,ᵢ,ⱼ (q₁×q₂), coupling the group and subgroup effects.
    pub a12_group: DMatrix<f64>,
}

/// Blocks attached to group i and its subgroups.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeLevelGroup {
    /// a₂,ᵢ (q₁)
    pub a2: DVector<f64>,
    /// A₂₂,ᵢ (q₁×q₁)
    pub a22: DMatrix<f64>,
    /// A₁₂,ᵢ (p×q₁)
    pub a12: DMatrix<f64>,
    pub subgroups: Vec<ThreeLevelSubgroup>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreeLevelSparseSystem {
    pub a1: DVector<f64>,
    pub a11: DMatrix<f64>,
    pub groups: Vec<ThreeLevelGroup>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreeLevelSubgroupSolution {
    pub x2: DVector<f64>,
    pub ainv22: DMatrix<f64>,
    /// A¹²,ⁱʲ (p×q₂)
    pub ainv12: DMatrix<f64>,
    /// A¹²,ⁱ,ʲ (q₁×q₂)
    pub ainv12_group: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreeLevelGroupSolution {
    pub x2: DVector<f64>,
    pub ainv22: DMatrix<f64>,
    pub ainv12: DMatrix<f64>,
    pub subgroups: Vec<ThreeLevelSubgroupSolution>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreeLevelSolution {
    pub x1: DVector<f64>,
    pub ainv11: DMatrix<f64>,
    pub groups: Vec<ThreeLevelGroupSolution>,
}

impl ThreeLevelSparseSystem {
    pub fn p(&self) -> usize {
        self.a1.len()
    }

    pub fn q1(&self) -> usize {
        self.groups.first().map_or(0, |g| g.a2.len())
    }

    pub fn q2(&self) -> usize {
        self.groups.iter().flat_map(|g| g.subgroups.first()).next().map_or(0, |s| s.a2.len())
    }

    pub fn dim(&self) -> usize {
        let n2: usize = self.groups.iter().map(|g| g.subgroups.len()).sum();
        self.p() + self.groups.len() * self.q1() + n2 * self.q2()
    }

    pub fn validate(&self) -> Result<()> {
        let (p, q1, q2) = (self.p(), self.q1(), self.q2());
        if self.a11.shape() != (p, p) {
            return Err(Error::DimensionMismatch(format!("A11 is {:?}, expected ({p}, {p})", self.a11.shape())));
        }
        for (i, g) in self.groups.iter().enumerate() {
            if g.a2.len() != q1 || g.a22.shape() != (q1, q1) || g.a12.shape() != (p, q1) {
                return Err(Error::DimensionMismatch(format!("blocks of group {i}")));
            }
            for (j, s) in g.subgroups.iter().enumerate() {
                if s.a2.len() != q2
                    || s.a22.shape() != (q2, q2)
                    || s.a12.shape() != (p, q2)
                    || s.a12_group.shape() != (q1, q2)
                {
                    return Err(Error::DimensionMismatch(format!("blocks of subgroup ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    /// Dense matrix with layout [β, u₁, u₁₁, …, u₁ₙ₁, u₂, u₂₁, …].
    pub fn assemble_dense(&self) -> DMatrix<f64> {
        let (p, q1, q2) = (self.p(), self.q1(), self.q2());
        let n = self.dim();
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (p, p)).copy_from(&self.a11);
        let mut at = p;
        for g in &self.groups {
            let gi = at;
            a.view_mut((0, gi), (p, q1)).copy_from(&g.a12);
            a.view_mut((gi, 0), (q1, p)).copy_from(&g.a12.transpose());
            a.view_mut((gi, gi), (q1, q1)).copy_from(&g.a22);
            at += q1;
            for s in &g.subgroups {
                let sj = at;
                a.view_mut((0, sj), (p, q2)).copy_from(&s.a12);
                a.view_mut((sj, 0), (q2, p)).copy_from(&s.a12.transpose());
                a.view_mut((gi, sj), (q1, q2)).copy_from(&s.a12_group);
                a.view_mut((sj, gi), (q2, q1)).copy_from(&s.a12_group.transpose());
                a.view_mut((sj, sj), (q2, q2)).copy_from(&s.a22);
                at += q2;
            }
        }
        a
    }

    pub fn assemble_rhs(&self) -> DVector<f64> {
        let mut v: Vec<f64> = self.a1.iter().copied().collect();
        for g in &self.groups {
            v.extend(g.a2.iter());
            for s in &g.subgroups {
                v.extend(s.a2.iter());
            }
        }
        DVector::from_vec(v)
    }

    /// Forward elimination: subgroup blocks first, then the group Schur
    /// complements, leaving the fixed-effects Schur complement factored.
    pub fn factor(&self) -> Result<ThreeLevelFactorization<'_>> {
        self.validate()?;
        let mut omega = self.a1.clone();
        let mut big_omega = self.a11.clone();
        let mut groups = Vec::with_capacity(self.groups.len());
        for (i, g) in self.groups.iter().enumerate() {
            let mut h2 = g.a2.clone();
            let mut h12 = g.a12.clone();
            let mut h22 = g.a22.clone();
            let mut subgroups = Vec::with_capacity(g.subgroups.len());
            for (j, s) in g.subgroups.iter().enumerate() {
                let f = Factor::new(&s.a22).ok_or(Error::SingularSubBlock(i, j))?;
                let a22inv_a2 = f.solve_vec(&s.a2);
                let a22inv_a12t = f.solve(&s.a12.transpose());
                let a22inv_a12gt = f.solve(&s.a12_group.transpose());
                h2 -= &s.a12_group * &a22inv_a2;
                h12 -= &s.a12 * &a22inv_a12gt;
                h22 -= &s.a12_group * &a22inv_a12gt;
                omega -= &s.a12 * &a22inv_a2;
                big_omega -= &s.a12 * &a22inv_a12t;
                subgroups.push(SubgroupFactor { a22: f, a22inv_a2, a22inv_a12t, a22inv_a12gt });
            }
            let hf = Factor::new(&h22).ok_or(Error::SingularGroupSchur(i))?;
            let h22inv_h2 = hf.solve_vec(&h2);
            let h22inv_h12t = hf.solve(&h12.transpose());
            omega -= &h12 * &h22inv_h2;
            big_omega -= &h12 * &h22inv_h12t;
            groups.push(GroupFactor { h22: hf, h22inv_h2, h22inv_h12t, subgroups });
        }
        let omega_factor = Factor::new(&big_omega).ok_or(Error::SingularSchur)?;
        Ok(ThreeLevelFactorization { omega, omega_factor, groups, system: self })
    }
}

#[derive(Debug, Clone)]
struct SubgroupFactor {
    a22: Factor,
    a22inv_a2: DVector<f64>,
    /// A₂₂,ᵢⱼ⁻¹ A₁₂,ᵢⱼᵀ (q₂×p)
    a22inv_a12t: DMatrix<f64>,
    /// A₂₂,ᵢⱼ⁻¹ A₁₂,ᵢ,ⱼᵀ (q₂×q₁)
    a22inv_a12gt: DMatrix<f64>,
}

#[derive(Debug, Clone)]
struct GroupFactor {
    h22: Factor,
    h22inv_h2: DVector<f64>,
    /// H₂₂,ᵢ⁻¹ H₁₂,ᵢᵀ (q₁×p)
    h22inv_h12t: DMatrix<f64>,
    subgroups: Vec<SubgroupFactor>,
}

/// Forward-elimination state of a three-level system.
#[derive(Debug, Clone)]
pub struct ThreeLevelFactorization<'a> {
    omega: DVector<f64>,
    omega_factor: Factor,
    groups: Vec<GroupFactor>,
    system: &'a ThreeLevelSparseSystem,
}

impl ThreeLevelFactorization<'_> {
    pub fn solve(&self) -> ThreeLevelSolution {
        let ainv11 = symmetrize(&self.omega_factor.inverse());
        let x1 = &ainv11 * &self.omega;
        let groups = self
            .groups
            .iter()
            .zip(&self.system.groups)
            .map(|(gf, g)| {
                let x2 = &gf.h22inv_h2 - &gf.h22inv_h12t * &x1;
                let ainv12 = -(&gf.h22inv_h12t * &ainv11).transpose();
                let ainv22 = symmetrize(&(gf.h22.inverse() - &gf.h22inv_h12t * &ainv12));
                let subgroups = gf
                    .subgroups
                    .iter()
                    .zip(&g.subgroups)
                    .map(|(sf, s)| {
                        let x2s = &sf.a22inv_a2 - &sf.a22inv_a12t * &x1 - &sf.a22inv_a12gt * &x2;
                        let ainv12s = -(&sf.a22inv_a12t * &ainv11 + &sf.a22inv_a12gt * ainv12.transpose()).transpose();
                        let ainv12g = -(&sf.a22inv_a12t * &ainv12 + &sf.a22inv_a12gt * &ainv22).transpose();
                        let ainv22s = sf.a22.inverse()
                            - sf.a22.solve(&(s.a12.transpose() * &ainv12s + s.a12_group.transpose() * &ainv12g));
                        ThreeLevelSubgroupSolution {
                            x2: x2s,
                            ainv22: symmetrize(&ainv22s),
                            ainv12: ainv12s,
                            ainv12_group: ainv12g,
                        }
                    })
                    .collect();
                ThreeLevelGroupSolution { x2, ainv22, ainv12, subgroups }
            })
            .collect();
        ThreeLevelSolution { x1, ainv11, groups }
    }

    /// One joint draw from N(A⁻¹a, A⁻¹): β from its marginal, each group
    /// effect given β, then each subgroup effect given β and its group effect.
    #[allow(clippy::type_complexity)]
    pub fn sample(
        &self,
        normal: &mut dyn FnMut() -> f64,
    ) -> Result<(DVector<f64>, Vec<(DVector<f64>, Vec<DVector<f64>>)>)> {
        let not_spd = |what: &str| Error::NumericalBreakdown(format!("{what} is not SPD"));
        let p = self.omega.len();
        let z = DVector::from_fn(p, |_, _| normal());
        let beta = self.omega_factor.solve_vec(&self.omega)
            + self.omega_factor.precision_noise(&z).ok_or_else(|| not_spd("Schur complement"))?;
        let mut out = Vec::with_capacity(self.groups.len());
        for gf in &self.groups {
            let q1 = gf.h22inv_h2.len();
            let z = DVector::from_fn(q1, |_, _| normal());
            let u1 = &gf.h22inv_h2 - &gf.h22inv_h12t * &beta
                + gf.h22.precision_noise(&z).ok_or_else(|| not_spd("group Schur complement"))?;
            let mut u2s = Vec::with_capacity(gf.subgroups.len());
            for sf in &gf.subgroups {
                let q2 = sf.a22inv_a2.len();
                let z = DVector::from_fn(q2, |_, _| normal());
                let u2 = &sf.a22inv_a2 - &sf.a22inv_a12t * &beta - &sf.a22inv_a12gt * &u1
                    + sf.a22.precision_noise(&z).ok_or_else(|| not_spd("subgroup block"))?;
                u2s.push(u2);
            }
            out.push((u1, u2s));
        }
        Ok((beta, out))
    }
}

/// Solve a three-level sparse matrix problem, returning x = A⁻¹a and the
/// blocks of A⁻¹ at the positions of the non-zero blocks of A.
pub fn solve_three_level(sys: &ThreeLevelSparseSystem) -> Result<ThreeLevelSolution> {
    Ok(sys.factor()?.solve())
}

impl ThreeLevelSolution {
    pub fn stacked_x(&self) -> DVector<f64> {
        let mut v: Vec<f64> = self.x1.iter().copied().collect();
        for g in &self.groups {
            v.extend(g.x2.iter());
            for s in &g.subgroups {
                v.extend(s.x2.iter());
            }
        }
        DVector::from_vec(v)
    }
}
