use serde::{Deserialize, Serialize};

use super::{Groups, MultilevelDataset};
use crate::error::{Error, Result};
use crate::summary::CoefficientSummary;

/// Pooled mean and population standard deviation of each S column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationRecord {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl StandardizationRecord {
    pub fn identity(names: Vec<String>) -> Self {
        let n = names.len();
        StandardizationRecord { names, mean: vec![0.0; n], sd: vec![1.0; n] }
    }
}

/// Center and scale every S column to pooled mean 0 and variance 1, dividing
/// by N rather than N − 1.
pub fn standardize_selection_columns(ds: &MultilevelDataset) -> Result<(MultilevelDataset, StandardizationRecord)> {
    let range = ds.selection_range();
    let n = ds.n_obs() as f64;
    let mut sum = vec![0.0; ds.p_s];
    ds.for_each_block(|_, x| {
        for (h, c) in range.clone().enumerate() {
            sum[h] += x.column(c).sum();
        }
    });
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let mut ss = vec![0.0; ds.p_s];
    ds.for_each_block(|_, x| {
        for (h, c) in range.clone().enumerate() {
            ss[h] += x.column(c).iter().map(|v| (v - mean[h]).powi(2)).sum::<f64>();
        }
    });
    let sd: Vec<f64> = ss.iter().map(|s| (s / n).sqrt()).collect();
    let names = ds.selection_names().to_vec();
    for (h, s) in sd.iter().enumerate() {
        if !(*s > 0.0 && s.is_finite()) {
            return Err(Error::ConstantColumn(names[h].clone()));
        }
    }

    let mut out = ds.clone();
    let scale = |x: &mut nalgebra::DMatrix<f64>| {
        for (h, c) in range.clone().enumerate() {
            x.column_mut(c).apply(|v| *v = (*v - mean[h]) / sd[h]);
        }
    };
    match &mut out.groups {
        Groups::Two { groups, .. } => groups.iter_mut().for_each(|g| scale(&mut g.x)),
        Groups::Three { groups, .. } => {
            groups.iter_mut().flat_map(|g| g.subgroups.iter_mut()).for_each(|s| scale(&mut s.x))
        }
    }
    Ok((out, StandardizationRecord { names, mean, sd }))
}

/// Map S-coefficient summaries on the standardized scale back to the original
/// covariate scale. Centering only moves the intercept; see [`intercept_shift`].
pub fn destandardize_coefficients(
    summary: &[CoefficientSummary],
    record: &StandardizationRecord,
) -> Result<Vec<CoefficientSummary>> {
    if summary.len() != record.sd.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for a record of {} columns",
            summary.len(),
            record.sd.len()
        )));
    }
    Ok(summary
        .iter()
        .zip(&record.sd)
        .map(|(c, s)| CoefficientSummary {
            name: c.name.clone(),
            mean: c.mean / s,
            sd: c.sd / s,
            lower: c.lower / s,
            upper: c.upper / s,
        })
        .collect())
}

/// Amount to add to the intercept when S coefficients estimated on the
/// standardized scale are reported on the original scale.
pub fn intercept_shift(beta_s_standardized: &[f64], record: &StandardizationRecord) -> f64 {
    beta_s_standardized.iter().zip(record.mean.iter().zip(&record.sd)).map(|(b, (m, s))| -b * m / s).sum()
}
