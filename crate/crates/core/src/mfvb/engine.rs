//! One coordinate-ascent sweep, in streamlined and naive form.

use nalgebra::{DMatrix, DVector};

use super::prior::{PriorFamily, PriorSpec};
use super::state::{Group3Q, GroupQ, RandomQ, SubgroupQ, VariationalState, ZetaQ};
use crate::data::{Groups, MultilevelDataset};
use crate::error::{Error, Result};
use crate::linalg::{
    spd_inverse, symmetrize, trace_atb, Factor, ThreeLevelGroup, ThreeLevelSparseSystem, ThreeLevelSubgroup,
    TwoLevelBlock, TwoLevelSparseSystem,
};

struct Stats2 {
    xtz: DMatrix<f64>,
    ztz: DMatrix<f64>,
    zty: DVector<f64>,
}

struct StatsSub {
    xtz2: DMatrix<f64>,
    z1tz2: DMatrix<f64>,
    z2tz2: DMatrix<f64>,
    z2ty: DVector<f64>,
}

/// Group-level sums over subgroups.
struct Stats3 {
    xtz1: DMatrix<f64>,
    z1tz1: DMatrix<f64>,
    z1ty: DVector<f64>,
    subs: Vec<StatsSub>,
}

enum Stats {
    Two(Vec<Stats2>),
    Three(Vec<Stats3>),
}

/// Dense C = [X | Z] with the random-effect columns laid out in the order of
/// the assembled sparse system.
struct Dense {
    c: DMatrix<f64>,
    y: DVector<f64>,
    ctc: DMatrix<f64>,
    cty: DVector<f64>,
}

/// The quantities that change between sweeps in the (β, u) system: the
/// error precision, the random-effect precisions, and the global and local
/// scales of the S coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemWeights {
    pub recip_sigsq: f64,
    pub sigma_inv: Vec<DMatrix<f64>>,
    pub recip_tausq: f64,
    pub zeta: DVector<f64>,
}

impl SystemWeights {
    pub fn from_state(state: &VariationalState) -> Self {
        SystemWeights {
            recip_sigsq: state.sigsq.mu_recip,
            sigma_inv: state.cov.iter().map(|c| c.m_sigma_inv.clone()).collect(),
            recip_tausq: state.tausq.mu_recip,
            zeta: state.zeta.mu.clone(),
        }
    }
}

/// Data cross-products and prior constants computed once per fit.
pub struct Engine<'a> {
    ds: &'a MultilevelDataset,
    prior: &'a PriorSpec,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    stats: Stats,
    prior_prec: DMatrix<f64>,
    prior_shift: DVector<f64>,
    dense: Option<Dense>,
}

fn breakdown(what: &str, v: f64) -> Error {
    Error::NumericalBreakdown(format!("{what} = {v}"))
}

fn check_positive(what: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(breakdown(what, v))
    }
}

impl<'a> Engine<'a> {
    pub fn new(ds: &'a MultilevelDataset, prior: &'a PriorSpec) -> Result<Self> {
        ds.validate()?;
        prior.validate(ds)?;
        let p = ds.p();
        let mut xtx = DMatrix::zeros(p, p);
        let mut xty = DVector::zeros(p);
        ds.for_each_block(|y, x| {
            xtx += x.transpose() * x;
            xty += x.transpose() * y;
        });
        let stats = match &ds.groups {
            Groups::Two { groups, .. } => Stats::Two(
                groups
                    .iter()
                    .map(|g| Stats2 {
                        xtz: g.x.transpose() * &g.z,
                        ztz: g.z.transpose() * &g.z,
                        zty: g.z.transpose() * &g.y,
                    })
                    .collect(),
            ),
            Groups::Three { q1, groups, .. } => Stats::Three(
                groups
                    .iter()
                    .map(|g| {
                        let mut st = Stats3 {
                            xtz1: DMatrix::zeros(p, *q1),
                            z1tz1: DMatrix::zeros(*q1, *q1),
                            z1ty: DVector::zeros(*q1),
                            subs: Vec::with_capacity(g.subgroups.len()),
                        };
                        for s in &g.subgroups {
                            st.xtz1 += s.x.transpose() * &s.z1;
                            st.z1tz1 += s.z1.transpose() * &s.z1;
                            st.z1ty += s.z1.transpose() * &s.y;
                            st.subs.push(StatsSub {
                                xtz2: s.x.transpose() * &s.z2,
                                z1tz2: s.z1.transpose() * &s.z2,
                                z2tz2: s.z2.transpose() * &s.z2,
                                z2ty: s.z2.transpose() * &s.y,
                            });
                        }
                        st
                    })
                    .collect(),
            ),
        };
        let (prior_prec, prior_shift) = prior.fixed_precision(ds.p_r, ds.p_a, ds.p_s)?;
        Ok(Engine { ds, prior, xtx, xty, stats, prior_prec, prior_shift, dense: None })
    }

    /// Materialize the dense design needed by naive sweeps.
    pub fn with_dense(mut self) -> Self {
        if self.dense.is_none() {
            let (c, y) = dense_design(self.ds);
            let ctc = c.transpose() * &c;
            let cty = c.transpose() * &y;
            self.dense = Some(Dense { c, y, ctc, cty });
        }
        self
    }

    pub fn dataset(&self) -> &MultilevelDataset {
        self.ds
    }

    /// Prior precision of β at the given local and global scales.
    fn prior_precision(&self, w: &SystemWeights) -> DMatrix<f64> {
        let mut prec = self.prior_prec.clone();
        if self.prior.family.is_global_local() {
            let off = self.ds.p_r + self.ds.p_a;
            for h in 0..self.ds.p_s {
                prec[(off + h, off + h)] += w.recip_tausq * w.zeta[h];
            }
        }
        prec
    }

    /// Leading block of A and its right-hand side.
    fn fixed_block(&self, w: &SystemWeights) -> (DMatrix<f64>, DVector<f64>) {
        let s = w.recip_sigsq;
        let a11 = &self.xtx * s + self.prior_precision(w);
        let a1 = &self.xty * s + &self.prior_shift;
        (a11, a1)
    }

    pub fn build_two_level_system(&self, state: &VariationalState) -> Result<TwoLevelSparseSystem> {
        self.two_level_system(&SystemWeights::from_state(state))
    }

    pub fn build_three_level_system(&self, state: &VariationalState) -> Result<ThreeLevelSparseSystem> {
        self.three_level_system(&SystemWeights::from_state(state))
    }

    pub fn two_level_system(&self, w: &SystemWeights) -> Result<TwoLevelSparseSystem> {
        let Stats::Two(stats) = &self.stats else {
            return Err(Error::InvalidParameter("dataset is three-level".into()));
        };
        let s = w.recip_sigsq;
        let m_inv = &w.sigma_inv[0];
        let (a11, a1) = self.fixed_block(w);
        let groups = stats
            .iter()
            .map(|st| TwoLevelBlock { a2: &st.zty * s, a22: &st.ztz * s + m_inv, a12: &st.xtz * s })
            .collect();
        Ok(TwoLevelSparseSystem { a1, a11, groups })
    }

    pub fn three_level_system(&self, w: &SystemWeights) -> Result<ThreeLevelSparseSystem> {
        let Stats::Three(stats) = &self.stats else {
            return Err(Error::InvalidParameter("dataset is two-level".into()));
        };
        let s = w.recip_sigsq;
        let (m1, m2) = (&w.sigma_inv[0], &w.sigma_inv[1]);
        let (a11, a1) = self.fixed_block(w);
        let groups = stats
            .iter()
            .map(|st| ThreeLevelGroup {
                a2: &st.z1ty * s,
                a22: &st.z1tz1 * s + m1,
                a12: &st.xtz1 * s,
                subgroups: st
                    .subs
                    .iter()
                    .map(|ss| ThreeLevelSubgroup {
                        a2: &ss.z2ty * s,
                        a22: &ss.z2tz2 * s + m2,
                        a12: &ss.xtz2 * s,
                        a12_group: &ss.z1tz2 * s,
                    })
                    .collect(),
            })
            .collect();
        Ok(ThreeLevelSparseSystem { a1, a11, groups })
    }

    /// One sweep using the multilevel sparse solvers.
    pub fn sweep_streamlined(&self, state: &mut VariationalState) -> Result<()> {
        let data_term;
        let mut sums: Vec<DMatrix<f64>> = state.cov.iter().map(|c| DMatrix::zeros(c.q(), c.q())).collect();
        match (&self.stats, &self.ds.groups) {
            (Stats::Two(stats), Groups::Two { groups, .. }) => {
                let sol = self.build_two_level_system(state)?.factor()?.solve();
                state.mu_beta = sol.x1;
                state.sigma_beta = sol.ainv11;
                let mut acc = trace_atb(&self.xtx, &state.sigma_beta);
                let mut qs = Vec::with_capacity(groups.len());
                for ((g, st), b) in groups.iter().zip(stats).zip(sol.groups) {
                    let r = &g.y - &g.x * &state.mu_beta - &g.z * &b.x2;
                    acc += r.norm_squared() + trace_atb(&st.ztz, &b.ainv22) + 2.0 * trace_atb(&st.xtz, &b.ainv12);
                    sums[0] += &b.x2 * b.x2.transpose() + &b.ainv22;
                    qs.push(GroupQ { mu: b.x2, sigma: b.ainv22, cov_beta: b.ainv12 });
                }
                state.random = RandomQ::Two(qs);
                data_term = acc;
            }
            (Stats::Three(stats), Groups::Three { groups, .. }) => {
                let sol = self.build_three_level_system(state)?.factor()?.solve();
                state.mu_beta = sol.x1;
                state.sigma_beta = sol.ainv11;
                let mut acc = trace_atb(&self.xtx, &state.sigma_beta);
                let mut qs = Vec::with_capacity(groups.len());
                for ((g, st), b) in groups.iter().zip(stats).zip(sol.groups) {
                    acc += trace_atb(&st.z1tz1, &b.ainv22) + 2.0 * trace_atb(&st.xtz1, &b.ainv12);
                    sums[0] += &b.x2 * b.x2.transpose() + &b.ainv22;
                    let mut subs = Vec::with_capacity(g.subgroups.len());
                    for ((s, ss), c) in g.subgroups.iter().zip(&st.subs).zip(b.subgroups) {
                        let r = &s.y - &s.x * &state.mu_beta - &s.z1 * &b.x2 - &s.z2 * &c.x2;
                        acc += r.norm_squared()
                            + trace_atb(&ss.z2tz2, &c.ainv22)
                            + 2.0 * trace_atb(&ss.xtz2, &c.ainv12)
                            + 2.0 * trace_atb(&ss.z1tz2, &c.ainv12_group);
                        sums[1] += &c.x2 * c.x2.transpose() + &c.ainv22;
                        subs.push(SubgroupQ {
                            mu: c.x2,
                            sigma: c.ainv22,
                            cov_beta: c.ainv12,
                            cov_group: c.ainv12_group,
                        });
                    }
                    qs.push(Group3Q { mu: b.x2, sigma: b.ainv22, cov_beta: b.ainv12, subgroups: subs });
                }
                state.random = RandomQ::Three(qs);
                data_term = acc;
            }
            _ => unreachable!("statistics always match the dataset depth"),
        }
        self.finish_sweep(state, data_term, sums)
    }

    /// One sweep through the dense (p + dim u)-dimensional precision matrix.
    pub fn sweep_naive(&self, state: &mut VariationalState) -> Result<()> {
        let dense = self
            .dense
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("naive sweeps need Engine::with_dense".into()))?;
        let w = SystemWeights::from_state(state);
        let s = w.recip_sigsq;
        let p = self.ds.p();
        let d = dense.c.ncols();
        let mut prec = &dense.ctc * s;
        let mut rhs = &dense.cty * s;
        {
            let mut v = prec.view_mut((0, 0), (p, p));
            v += self.prior_precision(&w);
        }
        {
            let mut v = rhs.rows_mut(0, p);
            v += &self.prior_shift;
        }
        // E_q(G⁻¹): block diagonal of the level-specific E_q(Σ⁻¹) matrices
        let mut at = p;
        let mut add = |at: usize, m: &DMatrix<f64>| {
            let q = m.nrows();
            let mut v = prec.view_mut((at, at), (q, q));
            v += m;
        };
        match &self.ds.groups {
            Groups::Two { q, groups } => {
                for _ in groups {
                    add(at, &state.cov[0].m_sigma_inv);
                    at += q;
                }
            }
            Groups::Three { q1, q2, groups } => {
                for g in groups {
                    add(at, &state.cov[0].m_sigma_inv);
                    at += q1;
                    for _ in &g.subgroups {
                        add(at, &state.cov[1].m_sigma_inv);
                        at += q2;
                    }
                }
            }
        }
        debug_assert_eq!(at, d);
        let cov = Factor::new(&prec).ok_or(Error::SingularMatrix)?.inverse();
        let cov = symmetrize(&cov);
        let mu = &cov * rhs;
        let data_term = (&dense.y - &dense.c * &mu).norm_squared() + trace_atb(&dense.ctc, &cov);

        state.mu_beta = mu.rows(0, p).into_owned();
        state.sigma_beta = cov.view((0, 0), (p, p)).into_owned();
        let mut sums: Vec<DMatrix<f64>> = state.cov.iter().map(|c| DMatrix::zeros(c.q(), c.q())).collect();
        let block = |at: usize, q: usize| {
            (
                mu.rows(at, q).into_owned(),
                cov.view((at, at), (q, q)).into_owned(),
                cov.view((0, at), (p, q)).into_owned(),
            )
        };
        let mut at = p;
        match &self.ds.groups {
            Groups::Two { q, groups } => {
                let mut qs = Vec::with_capacity(groups.len());
                for _ in groups {
                    let (mu, sigma, cov_beta) = block(at, *q);
                    sums[0] += &mu * mu.transpose() + &sigma;
                    qs.push(GroupQ { mu, sigma, cov_beta });
                    at += q;
                }
                state.random = RandomQ::Two(qs);
            }
            Groups::Three { q1, q2, groups } => {
                let mut qs = Vec::with_capacity(groups.len());
                for g in groups {
                    let gi = at;
                    let (gmu, gsigma, gcov) = block(gi, *q1);
                    sums[0] += &gmu * gmu.transpose() + &gsigma;
                    at += q1;
                    let mut subs = Vec::with_capacity(g.subgroups.len());
                    for _ in &g.subgroups {
                        let (mu, sigma, cov_beta) = block(at, *q2);
                        sums[1] += &mu * mu.transpose() + &sigma;
                        let cov_group = cov.view((gi, at), (*q1, *q2)).into_owned();
                        subs.push(SubgroupQ { mu, sigma, cov_beta, cov_group });
                        at += q2;
                    }
                    qs.push(Group3Q { mu: gmu, sigma: gsigma, cov_beta: gcov, subgroups: subs });
                }
                state.random = RandomQ::Three(qs);
            }
        }
        self.finish_sweep(state, data_term, sums)
    }

    /// Everything after q(β, u): error variance, covariance matrices, global
    /// and local scales, in the order of the streamlined algorithms.
    fn finish_sweep(&self, state: &mut VariationalState, data_term: f64, sums: Vec<DMatrix<f64>>) -> Result<()> {
        let prior = self.prior;
        let off = self.ds.p_r + self.ds.p_a;
        for h in 0..self.ds.p_s {
            state.mu_beta_s_sq[h] = state.sigma_beta[(off + h, off + h)] + state.mu_beta[off + h].powi(2);
        }

        let lam = check_positive("lambda_q(sigma^2)", state.a_sigsq.mu_recip + data_term)?;
        state.sigsq.set_lambda(lam);
        for (c, sum) in state.cov.iter_mut().zip(sums) {
            c.lambda_sigma = symmetrize(&(&c.m_a_inv + sum));
            let inv = spd_inverse(&c.lambda_sigma)
                .ok_or_else(|| Error::NumericalBreakdown("Lambda_q(Sigma) is not SPD".into()))?;
            c.m_sigma_inv = inv * (c.xi_sigma - c.q() as f64 + 1.0);
        }

        let lam = state.sigsq.mu_recip + 1.0 / (prior.nu_sigsq * prior.s_sigsq.powi(2));
        state.a_sigsq.set_lambda(check_positive("lambda_q(a_sigma^2)", lam)?);

        if prior.family.is_global_local() && self.ds.p_s > 0 {
            let lam = state.a_tausq.mu_recip + state.zeta.mu.dot(&state.mu_beta_s_sq);
            state.tausq.set_lambda(check_positive("lambda_q(tau^2)", lam)?);
            let lam = state.tausq.mu_recip + 1.0 / prior.s_tausq.powi(2);
            state.a_tausq.set_lambda(check_positive("lambda_q(a_tau^2)", lam)?);

            let g: Vec<f64> = state.mu_beta_s_sq.iter().map(|b2| 0.5 * state.tausq.mu_recip * b2).collect();
            update_local_scales(prior.family, &mut state.zeta, &g)?;
        }

        for c in state.cov.iter_mut() {
            c.lambda_a = DMatrix::from_diagonal(&c.m_sigma_inv.diagonal()) + &c.lambda_a_prior;
            let inv = DMatrix::from_diagonal(&c.lambda_a.diagonal().map(|v| 1.0 / v));
            c.m_a_inv = inv * c.xi_a;
        }
        Ok(())
    }
}

/// Local-scale updates given g = ½ E(1/τ²) E{(β^S)²}.
pub fn update_local_scales(family: PriorFamily, z: &mut ZetaQ, g: &[f64]) -> Result<()> {
    for (h, &g) in g.iter().enumerate() {
        match family {
            PriorFamily::Laplace => {
                z.mu[h] = (1.0 / (2.0 * g)).sqrt();
            }
            PriorFamily::Horseshoe => {
                z.lambda[h] = z.mu_a[h] + g;
                z.mu[h] = 1.0 / z.lambda[h];
                z.lambda_a[h] = z.mu[h] + 1.0;
                z.mu_a[h] = 1.0 / z.lambda_a[h];
            }
            PriorFamily::Neg { lambda } => {
                z.lambda[h] = 2.0 * z.mu_a[h];
                z.mu[h] = (z.lambda[h] / (2.0 * g)).sqrt();
                z.mu_recip[h] = 1.0 / z.mu[h] + 1.0 / (2.0 * z.mu_a[h]);
                z.lambda_a[h] = z.mu_recip[h] + 1.0;
                z.mu_a[h] = (lambda + 1.0) / z.lambda_a[h];
            }
            PriorFamily::Gaussian => return Ok(()),
        }
        check_positive("mu_q(zeta)", z.mu[h])?;
    }
    Ok(())
}

/// Dense [X | Z] and stacked y, with random-effect columns ordered
/// [u₁, u₂, …] at two levels and [u₁, u₁₁, …, u₁ₙ₁, u₂, …] at three.
fn dense_design(ds: &MultilevelDataset) -> (DMatrix<f64>, DVector<f64>) {
    let p = ds.p();
    let n = ds.n_obs();
    let d = p + crate::mfvb::random_dim(ds);
    let mut c = DMatrix::zeros(n, d);
    let mut y = DVector::zeros(n);
    let mut row = 0;
    let mut col = p;
    match &ds.groups {
        Groups::Two { q, groups } => {
            for g in groups {
                let o = g.y.len();
                c.view_mut((row, 0), (o, p)).copy_from(&g.x);
                c.view_mut((row, col), (o, *q)).copy_from(&g.z);
                y.rows_mut(row, o).copy_from(&g.y);
                row += o;
                col += q;
            }
        }
        Groups::Three { q1, q2, groups } => {
            for g in groups {
                let gcol = col;
                col += q1;
                for s in &g.subgroups {
                    let o = s.y.len();
                    c.view_mut((row, 0), (o, p)).copy_from(&s.x);
                    c.view_mut((row, gcol), (o, *q1)).copy_from(&s.z1);
                    c.view_mut((row, col), (o, *q2)).copy_from(&s.z2);
                    y.rows_mut(row, o).copy_from(&s.y);
                    row += o;
                    col += q2;
                }
            }
        }
    }
    (c, y)
}
