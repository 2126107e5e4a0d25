use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Groups, MultilevelDataset};
use crate::error::{Error, Result};

/// Prior placed on the S coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "family")]
pub enum PriorFamily {
    Gaussian,
    Laplace,
    Horseshoe,
    Neg { lambda: f64 },
}

impl PriorFamily {
    pub fn name(&self) -> &'static str {
        match self {
            PriorFamily::Gaussian => "gaussian",
            PriorFamily::Laplace => "laplace",
            PriorFamily::Horseshoe => "horseshoe",
            PriorFamily::Neg { .. } => "neg",
        }
    }

    pub fn is_global_local(&self) -> bool {
        !matches!(self, PriorFamily::Gaussian)
    }
}

/// Half-t style hierarchy on one random-effects covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePrior {
    pub nu: f64,
    /// Per-dimension scales s_k.
    pub s: Vec<f64>,
}

impl CovariancePrior {
    /// Λ_A = {ν diag(s_k²)}⁻¹.
    pub fn lambda_a(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(self.s.len(), self.s.iter().map(|s| 1.0 / (self.nu * s * s))))
    }
}

/// Full hyperparameter set. `mu_beta_s`/`sigma_beta_s` are used only by the
/// Gaussian family; `cov` has one entry per random-effects level.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub family: PriorFamily,
    pub mu_beta_r: DVector<f64>,
    pub sigma_beta_r: DMatrix<f64>,
    pub mu_beta_a: DVector<f64>,
    pub sigma_beta_a: DMatrix<f64>,
    pub mu_beta_s: DVector<f64>,
    pub sigma_beta_s: DMatrix<f64>,
    pub nu_sigsq: f64,
    pub s_sigsq: f64,
    pub s_tausq: f64,
    pub cov: Vec<CovariancePrior>,
}

/// Scalar description of a diffuse prior, as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    pub family: String,
    pub neg_lambda: f64,
    /// Prior variance of every unpenalized coefficient (and of the S
    /// coefficients under the Gaussian family).
    pub beta_variance: f64,
    pub nu_sigsq: f64,
    pub s_sigsq: f64,
    pub s_tausq: f64,
    pub nu_sigma: f64,
    pub s_sigma: f64,
    pub nu_sigma_l2: f64,
    pub s_sigma_l2: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            family: "horseshoe".into(),
            neg_lambda: 0.25,
            beta_variance: 1e10,
            nu_sigsq: 1.0,
            s_sigsq: 1e5,
            s_tausq: 1e5,
            nu_sigma: 2.0,
            s_sigma: 1e5,
            nu_sigma_l2: 2.0,
            s_sigma_l2: 1e5,
        }
    }
}

impl PriorConfig {
    pub fn family(&self) -> Result<PriorFamily> {
        Ok(match self.family.to_ascii_lowercase().as_str() {
            "gaussian" => PriorFamily::Gaussian,
            "laplace" => PriorFamily::Laplace,
            "horseshoe" => PriorFamily::Horseshoe,
            "neg" => PriorFamily::Neg { lambda: self.neg_lambda },
            other => return Err(Error::Config(format!("unknown prior family `{other}`"))),
        })
    }

    /// Expand to a full specification sized for `ds`.
    pub fn build(&self, ds: &MultilevelDataset) -> Result<PriorSpec> {
        let diffuse = |k: usize| DMatrix::identity(k, k) * self.beta_variance;
        let cov = match &ds.groups {
            Groups::Two { q, .. } => {
                vec![CovariancePrior { nu: self.nu_sigma, s: vec![self.s_sigma; *q] }]
            }
            Groups::Three { q1, q2, .. } => vec![
                CovariancePrior { nu: self.nu_sigma, s: vec![self.s_sigma; *q1] },
                CovariancePrior { nu: self.nu_sigma_l2, s: vec![self.s_sigma_l2; *q2] },
            ],
        };
        let spec = PriorSpec {
            family: self.family()?,
            mu_beta_r: DVector::zeros(ds.p_r),
            sigma_beta_r: diffuse(ds.p_r),
            mu_beta_a: DVector::zeros(ds.p_a),
            sigma_beta_a: diffuse(ds.p_a),
            mu_beta_s: DVector::zeros(ds.p_s),
            sigma_beta_s: diffuse(ds.p_s),
            nu_sigsq: self.nu_sigsq,
            s_sigsq: self.s_sigsq,
            s_tausq: self.s_tausq,
            cov,
        };
        spec.validate(ds)?;
        Ok(spec)
    }
}

impl PriorSpec {
    /// The diffuse defaults used throughout the simulation study.
    pub fn diffuse(ds: &MultilevelDataset, family: PriorFamily) -> PriorSpec {
        let mut cfg = PriorConfig { family: family.name().into(), ..PriorConfig::default() };
        if let PriorFamily::Neg { lambda } = family {
            cfg.neg_lambda = lambda;
        }
        cfg.build(ds).expect("default prior is valid")
    }

    pub fn validate(&self, ds: &MultilevelDataset) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        let dims = [
            ("mu_beta_r", self.mu_beta_r.len(), ds.p_r),
            ("mu_beta_a", self.mu_beta_a.len(), ds.p_a),
            ("sigma_beta_r", self.sigma_beta_r.nrows(), ds.p_r),
            ("sigma_beta_a", self.sigma_beta_a.nrows(), ds.p_a),
        ];
        for (name, got, want) in dims {
            if got != want {
                return Err(Error::DimensionMismatch(format!("{name} has {got} rows, expected {want}")));
            }
        }
        if self.family == PriorFamily::Gaussian
            && (self.mu_beta_s.len() != ds.p_s || self.sigma_beta_s.nrows() != ds.p_s)
        {
            return Err(Error::DimensionMismatch("Gaussian prior on S has wrong size".into()));
        }
        for (name, m) in [("sigma_beta_r", &self.sigma_beta_r), ("sigma_beta_a", &self.sigma_beta_a)] {
            if !m.is_square() || (m.nrows() > 0 && nalgebra::Cholesky::new(m.clone()).is_none()) {
                return bad(format!("{name} must be symmetric positive definite"));
            }
        }
        if self.family == PriorFamily::Gaussian
            && ds.p_s > 0
            && nalgebra::Cholesky::new(self.sigma_beta_s.clone()).is_none()
        {
            return bad("sigma_beta_s must be symmetric positive definite".into());
        }
        for (name, v) in [("nu_sigsq", self.nu_sigsq), ("s_sigsq", self.s_sigsq), ("s_tausq", self.s_tausq)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if let PriorFamily::Neg { lambda } = self.family {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return bad(format!("NEG shape must be positive, got {lambda}"));
            }
        }
        let qs: Vec<usize> = match &ds.groups {
            Groups::Two { q, .. } => vec![*q],
            Groups::Three { q1, q2, .. } => vec![*q1, *q2],
        };
        if self.cov.len() != qs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} covariance priors for {} levels",
                self.cov.len(),
                qs.len()
            )));
        }
        for (c, q) in self.cov.iter().zip(qs) {
            if c.s.len() != q {
                return Err(Error::DimensionMismatch(format!("{} scales for q = {q}", c.s.len())));
            }
            if !(c.nu > 0.0) || c.s.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return bad("covariance hyperparameters must be positive".into());
            }
        }
        Ok(())
    }

    /// Fixed part of the prior precision of β (the S block is filled only for
    /// the Gaussian family) and the matching prior shift Σ⁻¹μ.
    pub(crate) fn fixed_precision(&self, p_r: usize, p_a: usize, p_s: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let p = p_r + p_a + p_s;
        let mut prec = DMatrix::zeros(p, p);
        let mut shift = DVector::zeros(p);
        let mut put = |at: usize, sigma: &DMatrix<f64>, mu: &DVector<f64>| -> Result<()> {
            let k = mu.len();
            if k == 0 {
                return Ok(());
            }
            let inv = crate::linalg::spd_inverse(sigma).ok_or(Error::NonSpd)?;
            shift.rows_mut(at, k).copy_from(&(&inv * mu));
            prec.view_mut((at, at), (k, k)).copy_from(&inv);
            Ok(())
        };
        put(0, &self.sigma_beta_r, &self.mu_beta_r)?;
        put(p_r, &self.sigma_beta_a, &self.mu_beta_a)?;
        if self.family == PriorFamily::Gaussian {
            put(p_r + p_a, &self.sigma_beta_s, &self.mu_beta_s)?;
        }
        Ok((prec, shift))
    }
}
