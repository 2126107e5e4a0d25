use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Depth, Group2, Group3, Groups, MultilevelDataset, Subgroup};
use crate::distributions::sample::{normal, wishart};
use crate::error::{Error, Result};

/// Group or subgroup size: fixed, or uniform on {lo, …, hi}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SizeRule {
    Fixed(usize),
    Uniform { lo: usize, hi: usize },
}

impl SizeRule {
    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        match *self {
            SizeRule::Fixed(k) => k,
            SizeRule::Uniform { lo, hi } => rng.random_range(lo..=hi),
        }
    }

    fn min(&self) -> usize {
        match *self {
            SizeRule::Fixed(k) => k,
            SizeRule::Uniform { lo, .. } => lo,
        }
    }
}

/// Simulation design. The R block is an intercept plus one standard-normal
/// slope column, which also forms every random-effects design. Rows of the
/// A and S blocks are zero-mean Gaussian with covariance matrices drawn per
/// dataset from Wishart(p_A, I) and Wishart(p_S, I).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub depth: Depth,
    pub m: usize,
    /// Subgroups per group (three-level only).
    pub n: SizeRule,
    /// Observations per subgroup (or per group at two levels).
    pub o: SizeRule,
    pub beta_r: Vec<f64>,
    pub beta_a: Vec<f64>,
    pub beta_s: Vec<f64>,
    pub sigsq: f64,
    /// Group-level covariance (the only one at two levels).
    pub sigma_l1: Vec<Vec<f64>>,
    pub sigma_l2: Vec<Vec<f64>>,
    pub seed: u64,
}

/// True S coefficients of the simulation study: ten signals then zeros.
pub const STUDY_BETA_S_SIGNALS: [f64; 10] = [1.91, 1.96, -0.10, 1.62, -1.45, -1.53, 0.24, 1.76, 1.79, -0.15];

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::study(20, SizeRule::Fixed(5), SizeRule::Fixed(10), 50)
    }
}

impl SimConfig {
    /// The three-level study design with its reference true values, at a
    /// chosen size; S coefficients beyond the ten signals are zero.
    pub fn study(m: usize, n: SizeRule, o: SizeRule, p_s: usize) -> Self {
        let mut beta_s = vec![0.0; p_s];
        for (b, v) in beta_s.iter_mut().zip(STUDY_BETA_S_SIGNALS) {
            *b = v;
        }
        SimConfig {
            depth: Depth::Three,
            m,
            n,
            o,
            beta_r: vec![0.58, 1.98],
            beta_a: vec![0.7, -0.9, 1.8],
            beta_s,
            sigsq: 0.7,
            sigma_l1: vec![vec![0.42, -0.09], vec![-0.09, 0.52]],
            sigma_l2: vec![vec![0.80, -0.24], vec![-0.24, 0.75]],
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.m == 0 || self.o.min() == 0 || (self.depth == Depth::Three && self.n.min() == 0) {
            return bad("m, n and o must be at least 1".into());
        }
        for rule in [self.n, self.o] {
            if let SizeRule::Uniform { lo, hi } = rule {
                if lo > hi {
                    return bad(format!("empty size range {lo}..={hi}"));
                }
            }
        }
        if self.beta_r.len() != 2 {
            return bad("beta_r must have an intercept and one slope".into());
        }
        if !(self.sigsq >= 0.0) {
            return bad("sigsq must be nonnegative".into());
        }
        let levels = if self.depth == Depth::Three { 2 } else { 1 };
        for s in [&self.sigma_l1, &self.sigma_l2].into_iter().take(levels) {
            let m = to_matrix(s)?;
            if m.shape() != (2, 2) {
                return bad("random-effect covariances must be 2x2".into());
            }
            if !is_psd(&m) {
                return bad("random-effect covariance must be positive semidefinite".into());
            }
        }
        Ok(())
    }
}

/// Values used to generate a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// [β^R | β^A | β^S]
    pub beta: DVector<f64>,
    pub sigsq: f64,
    /// One covariance per level, outermost first.
    pub sigma: Vec<DMatrix<f64>>,
    pub u1: Vec<DVector<f64>>,
    /// Subgroup effects (empty at two levels).
    pub u2: Vec<Vec<DVector<f64>>>,
}

fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config("covariance matrix must be square".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn is_psd(m: &DMatrix<f64>) -> bool {
    (m - m.transpose()).abs().max() <= 1e-12 * m.abs().max().max(1.0)
        && m.clone().symmetric_eigenvalues().iter().all(|&e| e >= -1e-12)
}

/// Lower factor L with LLᵀ = m, allowing a singular (e.g. zero) m.
fn root(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(c) = nalgebra::Cholesky::new(m.clone()) {
        return c.l();
    }
    let e = m.clone().symmetric_eigen();
    let d = e.eigenvalues.map(|v| v.max(0.0).sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&d)
}

fn draw<R: Rng>(rng: &mut R, l: &DMatrix<f64>) -> DVector<f64> {
    let z = DVector::from_fn(l.ncols(), |_, _| normal(rng));
    l * z
}

pub fn simulate(cfg: &SimConfig) -> Result<(MultilevelDataset, GroundTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (p_a, p_s) = (cfg.beta_a.len(), cfg.beta_s.len());
    let root_a = if p_a > 0 {
        root(&wishart(&mut rng, p_a as f64, &DMatrix::identity(p_a, p_a))?)
    } else {
        DMatrix::zeros(0, 0)
    };
    let root_s = if p_s > 0 {
        root(&wishart(&mut rng, p_s as f64, &DMatrix::identity(p_s, p_s))?)
    } else {
        DMatrix::zeros(0, 0)
    };
    let sigma1 = to_matrix(&cfg.sigma_l1)?;
    let sigma2 = to_matrix(&cfg.sigma_l2)?;
    let (l1, l2) = (root(&sigma1), root(&sigma2));
    let beta = DVector::from_iterator(2 + p_a + p_s, cfg.beta_r.iter().chain(&cfg.beta_a).chain(&cfg.beta_s).copied());
    let sd = cfg.sigsq.sqrt();
    let p = beta.len();

    let block = |rng: &mut ChaCha8Rng, o: usize| {
        let mut x = DMatrix::zeros(o, p);
        for r in 0..o {
            x[(r, 0)] = 1.0;
            x[(r, 1)] = normal(rng);
            x.view_mut((r, 2), (1, p_a)).copy_from(&draw(rng, &root_a).transpose());
            x.view_mut((r, 2 + p_a), (1, p_s)).copy_from(&draw(rng, &root_s).transpose());
        }
        let eps = DVector::from_fn(o, |_, _| sd * normal(rng));
        let z = x.columns(0, 2).into_owned();
        (x, z, eps)
    };

    let mut u1s = Vec::with_capacity(cfg.m);
    let mut u2s = Vec::new();
    let groups = match cfg.depth {
        Depth::Two => {
            let mut groups = Vec::with_capacity(cfg.m);
            for i in 0..cfg.m {
                let u = draw(&mut rng, &l1);
                let o = cfg.o.draw(&mut rng);
                let (x, z, eps) = block(&mut rng, o);
                let y = &x * &beta + &z * &u + eps;
                groups.push(Group2 { id: (i + 1).to_string(), y, x, z });
                u1s.push(u);
            }
            Groups::Two { q: 2, groups }
        }
        Depth::Three => {
            let mut groups = Vec::with_capacity(cfg.m);
            for i in 0..cfg.m {
                let u1 = draw(&mut rng, &l1);
                let n_i = cfg.n.draw(&mut rng);
                let mut subs = Vec::with_capacity(n_i);
                let mut us = Vec::with_capacity(n_i);
                for j in 0..n_i {
                    let u2 = draw(&mut rng, &l2);
                    let o = cfg.o.draw(&mut rng);
                    let (x, z, eps) = block(&mut rng, o);
                    let y = &x * &beta + &z * &u1 + &z * &u2 + eps;
                    subs.push(Subgroup { id: (j + 1).to_string(), y, x, z1: z.clone(), z2: z });
                    us.push(u2);
                }
                groups.push(Group3 { id: (i + 1).to_string(), subgroups: subs });
                u1s.push(u1);
                u2s.push(us);
            }
            Groups::Three { q1: 2, q2: 2, groups }
        }
    };

    let mut names = vec!["(Intercept)".to_string(), "x".to_string()];
    names.extend((1..=p_a).map(|k| format!("A{k}")));
    names.extend((1..=p_s).map(|k| format!("S{k}")));
    let ds = MultilevelDataset { p_r: 2, p_a, p_s, names, intercept: true, groups };
    let sigma = match cfg.depth {
        Depth::Two => vec![sigma1],
        Depth::Three => vec![sigma1, sigma2],
    };
    Ok((ds, GroundTruth { beta, sigsq: cfg.sigsq, sigma, u1: u1s, u2: u2s }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_limit_is_exact() {
        let mut cfg = SimConfig::study(3, SizeRule::Fixed(2), SizeRule::Fixed(4), 12);
        cfg.sigsq = 0.0;
        cfg.sigma_l1 = vec![vec![0.0; 2]; 2];
        cfg.sigma_l2 = vec![vec![0.0; 2]; 2];
        let (ds, truth) = simulate(&cfg).unwrap();
        ds.for_each_block(|y, x| assert!((y - x * &truth.beta).abs().max() < 1e-12));
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = SimConfig::study(4, SizeRule::Uniform { lo: 1, hi: 3 }, SizeRule::Uniform { lo: 2, hi: 5 }, 15);
        assert_eq!(simulate(&cfg).unwrap().0, simulate(&cfg).unwrap().0);
        let other = SimConfig { seed: 2, ..cfg.clone() };
        assert_ne!(simulate(&cfg).unwrap().0, simulate(&other).unwrap().0);
    }

    #[test]
    fn study_truths_loaded() {
        let cfg = SimConfig::default();
        assert_eq!(cfg.beta_s.len(), 50);
        assert_eq!(&cfg.beta_s[..3], &[1.91, 1.96, -0.10]);
        assert!(cfg.beta_s[10..].iter().all(|b| *b == 0.0));
        assert_eq!(cfg.sigsq, 0.7);
    }
}
