//! Densities, expectations and samplers for the distributions used by the
//! variational updates and by the Gibbs sampler.
//!
//! Parameterizations:
//! * Gamma(α, β): rate β, density βᵅ/Γ(α) xᵅ⁻¹ e^{−βx}.
//! * Inverse-Gamma(α, β): density βᵅ/Γ(α) x^{−α−1} e^{−β/x}.
//! * Inverse-χ²(ξ, λ): identical to Inverse-Gamma(ξ/2, λ/2).
//! * Inverse-Gaussian(μ, λ): mean μ, shape λ.
//! * Inverse-G-Wishart(G, ξ, Λ): density ∝ |X|^{−(ξ+2)/2} exp{−tr(ΛX⁻¹)/2},
//!   with X⁻¹ full (`Graph::Full`) or diagonal (`Graph::Diag`).

pub mod sample;
pub mod special;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::Factor;

fn require(cond: bool, what: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(what.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvChiSqParams {
    pub xi: f64,
    pub lambda: f64,
}

impl InvChiSqParams {
    pub fn new(xi: f64, lambda: f64) -> Result<Self> {
        require(xi > 0.0 && lambda > 0.0, "Inverse-chi-squared needs xi > 0 and lambda > 0")?;
        Ok(Self { xi, lambda })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvGaussianParams {
    pub mu: f64,
    pub lam: f64,
}

impl InvGaussianParams {
    pub fn new(mu: f64, lam: f64) -> Result<Self> {
        require(mu > 0.0 && lam > 0.0, "Inverse-Gaussian needs mu > 0 and lambda > 0")?;
        Ok(Self { mu, lam })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl GammaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        require(alpha > 0.0 && beta > 0.0, "Gamma needs alpha > 0 and beta > 0")?;
        Ok(Self { alpha, beta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Graph {
    Full,
    Diag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvGWishartParams {
    pub graph: Graph,
    pub xi: f64,
    pub lambda: DMatrix<f64>,
}

/// E[1/x] for x ~ Inverse-χ²(ξ, λ).
pub fn inv_chisq_mean_reciprocal(p: &InvChiSqParams) -> f64 {
    p.xi / p.lambda
}

/// E[X⁻¹] for X ~ Inverse-G-Wishart(G, ξ, Λ) of dimension d:
/// (ξ − d + 1)Λ⁻¹ for the full graph, ξΛ⁻¹ for the diagonal graph.
pub fn igw_mean_inverse(p: &InvGWishartParams) -> Result<DMatrix<f64>> {
    let d = p.lambda.nrows();
    if p.lambda.ncols() != d {
        return Err(Error::DimensionMismatch("Lambda must be square".into()));
    }
    match p.graph {
        Graph::Full => {
            let f = Factor::new(&p.lambda).filter(|f| f.cholesky().is_some()).ok_or(Error::NonSpd)?;
            Ok(crate::linalg::symmetrize(&f.inverse()) * (p.xi - d as f64 + 1.0))
        }
        Graph::Diag => {
            let mut out = DMatrix::zeros(d, d);
            for k in 0..d {
                let v = p.lambda[(k, k)];
                if v <= 0.0 {
                    return Err(Error::NonSpd);
                }
                out[(k, k)] = p.xi / v;
            }
            Ok(out)
        }
    }
}

/// (E[x], E[1/x]) for x ~ Inverse-Gaussian(μ, λ).
pub fn inv_gaussian_moments(p: &InvGaussianParams) -> (f64, f64) {
    (p.mu, 1.0 / p.mu + 1.0 / p.lam)
}

/// Univariate distributions with a closed-form (or special-function) density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Density {
    Normal { mu: f64, sigma: f64 },
    Laplace { mu: f64, sigma: f64 },
    Horseshoe { mu: f64, sigma: f64 },
    Neg { mu: f64, sigma: f64, lambda: f64 },
    Gamma(GammaParams),
    InvGamma { alpha: f64, beta: f64 },
    InvChiSq(InvChiSqParams),
    InvGaussian(InvGaussianParams),
    HalfT { sigma: f64, nu: f64 },
}

impl Density {
    /// Whether `x` lies in the support.
    pub fn in_support(&self, x: f64) -> bool {
        match self {
            Density::Normal { .. } | Density::Laplace { .. } | Density::Horseshoe { .. } | Density::Neg { .. } => {
                x.is_finite()
            }
            Density::HalfT { .. } => x >= 0.0 && x.is_finite(),
            _ => x > 0.0 && x.is_finite(),
        }
    }

    /// Density at `x`. The Horseshoe density is unbounded at its centre and
    /// returns +∞ there.
    pub fn pdf(&self, x: f64) -> Result<f64> {
        if !self.in_support(x) {
            return Err(Error::OutOfSupport(x));
        }
        Ok(match *self {
            Density::Normal { mu, sigma } => {
                let z = (x - mu) / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
            }
            Density::Laplace { mu, sigma } => (-(x - mu).abs() / sigma).exp() / (2.0 * sigma),
            Density::Horseshoe { mu, sigma } => {
                let z = (x - mu) * (x - mu) / (2.0 * sigma * sigma);
                if z == 0.0 {
                    f64::INFINITY
                } else {
                    special::exp_e1(z) / ((2.0 * PI.powi(3)).sqrt() * sigma)
                }
            }
            Density::Neg { mu, sigma, lambda } => {
                let z = ((x - mu) / sigma).abs();
                let log_c = -0.5 * PI.ln() - sigma.ln() + lambda.ln() + lambda * 2f64.ln() + ln_gamma(lambda + 0.5);
                log_c.exp() * special::scaled_parabolic_cylinder_d(-2.0 * lambda - 1.0, z)
            }
            Density::Gamma(GammaParams { alpha, beta }) => {
                (alpha * beta.ln() - ln_gamma(alpha) + (alpha - 1.0) * x.ln() - beta * x).exp()
            }
            Density::InvGamma { alpha, beta } => inv_gamma_pdf(alpha, beta, x),
            Density::InvChiSq(InvChiSqParams { xi, lambda }) => {
                let h = 0.5 * lambda;
                (0.5 * xi * h.ln() - ln_gamma(0.5 * xi) - (0.5 * xi + 1.0) * x.ln() - h / x).exp()
            }
            Density::InvGaussian(InvGaussianParams { mu, lam }) => {
                (lam / (2.0 * PI * x.powi(3))).sqrt() * (-lam * (x - mu) * (x - mu) / (2.0 * mu * mu * x)).exp()
            }
            Density::HalfT { sigma, nu } => {
                let log_c =
                    2f64.ln() + ln_gamma(0.5 * (nu + 1.0)) - 0.5 * (PI * nu).ln() - ln_gamma(0.5 * nu) - sigma.ln();
                let r = x / sigma;
                (log_c - 0.5 * (nu + 1.0) * (1.0 + r * r / nu).ln()).exp()
            }
        })
    }
}

fn inv_gamma_pdf(alpha: f64, beta: f64, x: f64) -> f64 {
    (alpha * beta.ln() - ln_gamma(alpha) - (alpha + 1.0) * x.ln() - beta / x).exp()
}

/// Convenience wrapper for [`Density::pdf`].
pub fn density(kind: &Density, x: f64) -> Result<f64> {
    kind.pdf(x)
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile function.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}
