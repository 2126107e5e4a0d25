use nalgebra::{DMatrix, DVector};

use super::prior::PriorSpec;
use crate::data::{Groups, MultilevelDataset};

/// q(u_i) for a two-level group, with its cross-covariance against β.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupQ {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    /// E_q{(β − μ_β)(u_i − μ_ui)ᵀ}, p×q.
    pub cov_beta: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupQ {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    /// p×q₂
    pub cov_beta: DMatrix<f64>,
    /// E_q{(u^L1_i − μ)(u^L2_ij − μ)ᵀ}, q₁×q₂.
    pub cov_group: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group3Q {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub cov_beta: DMatrix<f64>,
    pub subgroups: Vec<SubgroupQ>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RandomQ {
    Two(Vec<GroupQ>),
    Three(Vec<Group3Q>),
}

/// Inverse-χ²(ξ, λ) factor with its cached E(1/x).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarQ {
    pub xi: f64,
    pub lambda: f64,
    pub mu_recip: f64,
}

impl ScalarQ {
    /// Initialized so that E(1/x) = 1.
    fn unit(xi: f64) -> Self {
        ScalarQ { xi, lambda: xi, mu_recip: 1.0 }
    }

    pub(crate) fn set_lambda(&mut self, lambda: f64) {
        self.lambda = lambda;
        self.mu_recip = self.xi / lambda;
    }
}

/// q(Σ) and q(A_Σ) for one random-effects level.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceQ {
    pub xi_sigma: f64,
    pub lambda_sigma: DMatrix<f64>,
    /// E_q(Σ⁻¹)
    pub m_sigma_inv: DMatrix<f64>,
    pub xi_a: f64,
    pub lambda_a: DMatrix<f64>,
    /// E_q(A_Σ⁻¹)
    pub m_a_inv: DMatrix<f64>,
    /// Prior Λ_A = {ν diag(s²)}⁻¹.
    pub lambda_a_prior: DMatrix<f64>,
}

impl CovarianceQ {
    pub fn q(&self) -> usize {
        self.lambda_sigma.nrows()
    }
}

/// Per-coefficient local-scale factors. Unused entries keep their initial
/// values for families that do not update them.
#[derive(Debug, Clone, PartialEq)]
pub struct ZetaQ {
    pub mu: DVector<f64>,
    pub lambda: DVector<f64>,
    pub mu_recip: DVector<f64>,
    pub lambda_a: DVector<f64>,
    pub mu_a: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    pub mu_beta: DVector<f64>,
    pub sigma_beta: DMatrix<f64>,
    pub random: RandomQ,
    pub sigsq: ScalarQ,
    pub a_sigsq: ScalarQ,
    pub tausq: ScalarQ,
    pub a_tausq: ScalarQ,
    /// One entry per random-effects level, outermost first.
    pub cov: Vec<CovarianceQ>,
    pub zeta: ZetaQ,
    /// E_q{(β^S_h)²}
    pub mu_beta_s_sq: DVector<f64>,
}

/// Starting state: every E(1/·) is 1, local scales are 1, every E(M⁻¹) is
/// the identity and the ξ's take their fixed values.
pub fn init_state(ds: &MultilevelDataset, prior: &PriorSpec) -> VariationalState {
    let p = ds.p();
    let n = ds.n_obs() as f64;
    let m = ds.m() as f64;
    let cov_q = |nu: f64, count: f64, q: usize, lambda_a_prior: DMatrix<f64>| {
        let xi_sigma = nu + count + 2.0 * q as f64 - 2.0;
        let xi_a = nu + q as f64;
        let eye = DMatrix::identity(q, q);
        CovarianceQ {
            xi_sigma,
            lambda_sigma: &eye * (xi_sigma - q as f64 + 1.0),
            m_sigma_inv: eye.clone(),
            xi_a,
            lambda_a: &eye * xi_a,
            m_a_inv: eye,
            lambda_a_prior,
        }
    };
    let (random, cov) = match &ds.groups {
        Groups::Two { q, groups } => (
            RandomQ::Two(
                groups
                    .iter()
                    .map(|_| GroupQ {
                        mu: DVector::zeros(*q),
                        sigma: DMatrix::identity(*q, *q),
                        cov_beta: DMatrix::zeros(p, *q),
                    })
                    .collect(),
            ),
            vec![cov_q(prior.cov[0].nu, m, *q, prior.cov[0].lambda_a())],
        ),
        Groups::Three { q1, q2, groups } => {
            let n_sub: usize = groups.iter().map(|g| g.subgroups.len()).sum();
            (
                RandomQ::Three(
                    groups
                        .iter()
                        .map(|g| Group3Q {
                            mu: DVector::zeros(*q1),
                            sigma: DMatrix::identity(*q1, *q1),
                            cov_beta: DMatrix::zeros(p, *q1),
                            subgroups: g
                                .subgroups
                                .iter()
                                .map(|_| SubgroupQ {
                                    mu: DVector::zeros(*q2),
                                    sigma: DMatrix::identity(*q2, *q2),
                                    cov_beta: DMatrix::zeros(p, *q2),
                                    cov_group: DMatrix::zeros(*q1, *q2),
                                })
                                .collect(),
                        })
                        .collect(),
                ),
                vec![
                    cov_q(prior.cov[0].nu, m, *q1, prior.cov[0].lambda_a()),
                    cov_q(prior.cov[1].nu, n_sub as f64, *q2, prior.cov[1].lambda_a()),
                ],
            )
        }
    };
    let ones = DVector::from_element(ds.p_s, 1.0);
    VariationalState {
        mu_beta: DVector::zeros(p),
        sigma_beta: DMatrix::identity(p, p),
        random,
        sigsq: ScalarQ::unit(prior.nu_sigsq + n),
        a_sigsq: ScalarQ::unit(prior.nu_sigsq + 1.0),
        tausq: ScalarQ::unit(ds.p_s as f64 + 1.0),
        a_tausq: ScalarQ::unit(2.0),
        cov,
        zeta: ZetaQ {
            mu: ones.clone(),
            lambda: ones.clone(),
            mu_recip: ones.clone(),
            lambda_a: ones.clone(),
            mu_a: ones.clone(),
        },
        mu_beta_s_sq: ones,
    }
}

impl VariationalState {
    /// Every updated variational parameter, grouped into named blocks in a
    /// fixed order. Used for convergence checks and cross-implementation
    /// comparisons.
    pub fn parameter_blocks(&self) -> Vec<(String, Vec<f64>)> {
        let v = |x: &DVector<f64>| x.as_slice().to_vec();
        let mm = |x: &DMatrix<f64>| x.as_slice().to_vec();
        let mut out = vec![("mu_beta".to_string(), v(&self.mu_beta)), ("sigma_beta".to_string(), mm(&self.sigma_beta))];
        match &self.random {
            RandomQ::Two(groups) => {
                for (i, g) in groups.iter().enumerate() {
                    out.push((format!("mu_u[{i}]"), v(&g.mu)));
                    out.push((format!("sigma_u[{i}]"), mm(&g.sigma)));
                    out.push((format!("cov_beta_u[{i}]"), mm(&g.cov_beta)));
                }
            }
            RandomQ::Three(groups) => {
                for (i, g) in groups.iter().enumerate() {
                    out.push((format!("mu_u1[{i}]"), v(&g.mu)));
                    out.push((format!("sigma_u1[{i}]"), mm(&g.sigma)));
                    out.push((format!("cov_beta_u1[{i}]"), mm(&g.cov_beta)));
                    for (j, s) in g.subgroups.iter().enumerate() {
                        out.push((format!("mu_u2[{i},{j}]"), v(&s.mu)));
                        out.push((format!("sigma_u2[{i},{j}]"), mm(&s.sigma)));
                        out.push((format!("cov_beta_u2[{i},{j}]"), mm(&s.cov_beta)));
                        out.push((format!("cov_u1_u2[{i},{j}]"), mm(&s.cov_group)));
                    }
                }
            }
        }
        for (name, s) in
            [("sigsq", &self.sigsq), ("a_sigsq", &self.a_sigsq), ("tausq", &self.tausq), ("a_tausq", &self.a_tausq)]
        {
            out.push((format!("lambda_{name}"), vec![s.lambda]));
        }
        for (l, c) in self.cov.iter().enumerate() {
            out.push((format!("lambda_sigma[{l}]"), mm(&c.lambda_sigma)));
            out.push((format!("lambda_a_sigma[{l}]"), mm(&c.lambda_a)));
        }
        out.push(("mu_zeta".into(), v(&self.zeta.mu)));
        out.push(("lambda_zeta".into(), v(&self.zeta.lambda)));
        out.push(("mu_recip_zeta".into(), v(&self.zeta.mu_recip)));
        out.push(("lambda_a_zeta".into(), v(&self.zeta.lambda_a)));
        out.push(("mu_a_zeta".into(), v(&self.zeta.mu_a)));
        out
    }

    /// max |new − old| / (|new| + 1e-12) over every scalar parameter.
    pub fn max_relative_change(&self, previous: &VariationalState) -> f64 {
        let new = self.parameter_blocks();
        let old = previous.parameter_blocks();
        new.iter()
            .zip(&old)
            .flat_map(|((_, a), (_, b))| a.iter().zip(b))
            .map(|(a, b)| (a - b).abs() / (a.abs() + 1e-12))
            .fold(0.0, f64::max)
    }

    /// The ξ constants, in a fixed order.
    pub fn xi_constants(&self) -> Vec<f64> {
        let mut out = vec![self.sigsq.xi, self.a_sigsq.xi, self.tausq.xi, self.a_tausq.xi];
        for c in &self.cov {
            out.push(c.xi_sigma);
            out.push(c.xi_a);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::tiny_two_level;
    use crate::mfvb::PriorFamily;

    #[test]
    fn xi_values_follow_preamble() {
        let ds = tiny_two_level();
        let prior = PriorSpec::diffuse(&ds, PriorFamily::Horseshoe);
        let s = init_state(&ds, &prior);
        assert_eq!(s.sigsq.xi, 1.0 + 3.0);
        assert_eq!(s.tausq.xi, 2.0);
        assert_eq!(s.a_tausq.xi, 2.0);
        assert_eq!(s.cov[0].xi_sigma, 2.0 + 2.0 + 2.0 - 2.0);
        assert_eq!(s.cov[0].xi_a, 3.0);
        assert_eq!(s.sigsq.mu_recip, 1.0);
        assert_eq!(s.cov[0].m_sigma_inv, DMatrix::identity(1, 1));
    }
}
