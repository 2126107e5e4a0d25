//! Signal adaptive variable selection: a deterministic soft-thresholding of
//! posterior means that needs no tuning parameter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub gamma: Vec<bool>,
    /// Sparsified estimates; zero exactly where `gamma` is false.
    pub mu_star: Vec<f64>,
    /// ‖x_h‖² used for each coefficient.
    pub norm_sq: Vec<f64>,
}

impl SelectionResult {
    pub fn selected(&self) -> usize {
        self.gamma.iter().filter(|g| **g).count()
    }
}

/// Coefficient h is dropped when ‖x_h‖² ≤ |μ_h|⁻³; otherwise its estimate is
/// sign(μ_h)(|μ_h|‖x_h‖² − μ_h⁻²)/‖x_h‖². A zero mean is always dropped.
pub fn savs(mu: &[f64], norm_sq: &[f64]) -> Result<SelectionResult> {
    if mu.len() != norm_sq.len() {
        return Err(Error::DimensionMismatch(format!("{} means for {} column norms", mu.len(), norm_sq.len())));
    }
    let mut gamma = Vec::with_capacity(mu.len());
    let mut mu_star = Vec::with_capacity(mu.len());
    for (&m, &x2) in mu.iter().zip(norm_sq) {
        if m == 0.0 || x2 <= m.abs().powi(-3) {
            gamma.push(false);
            mu_star.push(0.0);
        } else {
            gamma.push(true);
            mu_star.push(m.signum() * (m.abs() * x2 - m.powi(-2)) / x2);
        }
    }
    Ok(SelectionResult { gamma, mu_star, norm_sq: norm_sq.to_vec() })
}
