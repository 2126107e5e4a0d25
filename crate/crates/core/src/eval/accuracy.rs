use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};

use crate::distributions::{Density, InvChiSqParams};
use crate::error::{Error, Result};
use crate::gibbs::kde_marginal;

/// Minimum mass each density must place on the grid.
pub const MIN_GRID_MASS: f64 = 0.999;
const GRID_POINTS: usize = 4001;

/// Trapezoidal integral of `f` sampled on an increasing `grid`.
pub fn trapezoid(grid: &[f64], f: &[f64]) -> f64 {
    grid.windows(2).zip(f.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

/// 100(1 − ½∫|a − b|) for two densities tabulated on a common grid.
pub fn accuracy_index(grid: &[f64], a: &[f64], b: &[f64]) -> Result<f64> {
    if grid.len() != a.len() || grid.len() != b.len() || grid.len() < 2 {
        return Err(Error::DimensionMismatch("grid and densities must align".into()));
    }
    for f in [a, b] {
        let mass = trapezoid(grid, f);
        if mass < MIN_GRID_MASS {
            return Err(Error::GridTooNarrow(mass));
        }
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    Ok((100.0 * (1.0 - 0.5 * trapezoid(grid, &diff))).clamp(0.0, 100.0))
}

/// Closed-form variational marginal of a scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Marginal {
    Normal { mean: f64, sd: f64 },
    InvChiSq { xi: f64, lambda: f64 },
}

impl Marginal {
    pub fn pdf(&self, x: f64) -> f64 {
        let d = match *self {
            Marginal::Normal { mean, sd } => Density::Normal { mu: mean, sigma: sd },
            Marginal::InvChiSq { xi, lambda } => Density::InvChiSq(InvChiSqParams { xi, lambda }),
        };
        d.pdf(x).unwrap_or(0.0)
    }

    /// Interval holding all but a negligible fraction of the mass.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            Marginal::Normal { mean, sd } => (mean - 8.0 * sd, mean + 8.0 * sd),
            Marginal::InvChiSq { xi, lambda } => {
                // 1/x ~ Gamma(ξ/2, rate λ/2)
                let g = Gamma::new(0.5 * xi, 0.5 * lambda).expect("valid inverse chi-squared");
                (1.0 / g.inverse_cdf(1.0 - 1e-9), 1.0 / g.inverse_cdf(1e-9))
            }
        }
    }
}

/// Accuracy of a variational marginal against a kernel density estimate
/// from posterior draws, on a grid spanning both.
pub fn accuracy_against_draws(q: &Marginal, draws: &[f64]) -> Result<f64> {
    let (lo_q, hi_q) = q.range();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &d in draws {
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let pad = 0.25 * (hi - lo).max(1e-12);
    let lo = lo_q.min(lo - pad);
    let hi = hi_q.max(hi + pad);
    let grid: Vec<f64> = (0..GRID_POINTS).map(|k| lo + (hi - lo) * k as f64 / (GRID_POINTS - 1) as f64).collect();
    let kde = kde_marginal(draws, &grid)?;
    let qv: Vec<f64> = grid.iter().map(|&x| q.pdf(x)).collect();
    accuracy_index(&grid, &qv, &kde)
}
