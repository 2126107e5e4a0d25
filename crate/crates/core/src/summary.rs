//! Marginal posterior summaries.

use serde::{Deserialize, Serialize};

use crate::distributions::normal_quantile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

impl CoefficientSummary {
    /// Central interval of a Gaussian marginal at credible `level`; for a
    /// Gaussian the equal-tail and highest-density intervals coincide.
    pub fn gaussian(name: impl Into<String>, mean: f64, sd: f64, level: f64) -> Self {
        let z = normal_quantile(0.5 + 0.5 * level);
        CoefficientSummary { name: name.into(), mean, sd, lower: mean - z * sd, upper: mean + z * sd }
    }
}
