//! Random variate generators. All take an explicitly passed RNG.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// N(mean, cov) via the Cholesky factor of `cov`.
pub fn mvn<R: Rng + ?Sized>(rng: &mut R, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<DVector<f64>> {
    let chol = nalgebra::Cholesky::new(symmetrize(cov)).ok_or(Error::NonSpd)?;
    let z = DVector::from_fn(mean.len(), |_, _| normal(rng));
    Ok(mean + chol.l() * z)
}

/// Gamma(α, β) with rate β.
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, alpha: f64, beta: f64) -> f64 {
    Gamma::new(alpha, 1.0 / beta).expect("gamma parameters must be positive").sample(rng)
}

/// Inverse-Gamma(α, β).
pub fn inv_gamma<R: Rng + ?Sized>(rng: &mut R, alpha: f64, beta: f64) -> f64 {
    1.0 / gamma(rng, alpha, beta)
}

/// Inverse-χ²(ξ, λ).
pub fn inv_chisq<R: Rng + ?Sized>(rng: &mut R, xi: f64, lambda: f64) -> f64 {
    inv_gamma(rng, 0.5 * xi, 0.5 * lambda)
}

/// Inverse-Gaussian(μ, λ) by transformation with rejection: one normal and
/// one uniform deviate per draw. The smaller root of the quadratic is formed
/// as μ/(1 + r + √(r² + 2r)) to stay accurate when μ/λ is large.
pub fn inv_gaussian<R: Rng + ?Sized>(rng: &mut R, mu: f64, lam: f64) -> f64 {
    let z = normal(rng);
    let y = z * z;
    let r = mu * y / (2.0 * lam);
    let x = mu / (1.0 + r + (r * r + 2.0 * r).sqrt());
    let u: f64 = rng.random();
    if u <= mu / (mu + x) {
        x
    } else {
        mu * (mu / x)
    }
}

/// Wishart(ν, S) via the Bartlett decomposition; requires ν > d − 1.
pub fn wishart<R: Rng + ?Sized>(rng: &mut R, nu: f64, scale: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = scale.nrows();
    if nu <= d as f64 - 1.0 {
        return Err(Error::InvalidParameter(format!("Wishart needs nu > {}", d - 1)));
    }
    let l = nalgebra::Cholesky::new(symmetrize(scale)).ok_or(Error::NonSpd)?.l();
    let mut a = DMatrix::zeros(d, d);
    for i in 0..d {
        let chi: f64 = ChiSquared::new(nu - i as f64).expect("positive dof").sample(rng);
        a[(i, i)] = chi.sqrt();
        for j in 0..i {
            a[(i, j)] = normal(rng);
        }
    }
    let la = l * a;
    Ok(symmetrize(&(&la * la.transpose())))
}

/// Inverse-Wishart(ν, Ψ): the inverse of a Wishart(ν, Ψ⁻¹) draw. Mean Ψ/(ν − d − 1).
pub fn inverse_wishart<R: Rng + ?Sized>(rng: &mut R, nu: f64, psi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let psi_inv = crate::linalg::spd_inverse(psi).ok_or(Error::NonSpd)?;
    let w = wishart(rng, nu, &psi_inv)?;
    crate::linalg::spd_inverse(&w).ok_or(Error::NonSpd)
}
