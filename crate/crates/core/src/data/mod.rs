//! Nested two- and three-level datasets with the fixed-effects design split
//! into unpenalized random-effect columns (R), additional unpenalized columns
//! (A) and columns subject to selection (S).

mod csv_io;
mod standardize;

pub use csv_io::{load_csv, write_csv, CsvSchema};
pub use standardize::{
    destandardize_coefficients, intercept_shift, standardize_selection_columns, StandardizationRecord,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Depth {
    Two,
    Three,
}

/// One group of a two-level design. `x` holds the columns [R | A | S].
#[derive(Debug, Clone, PartialEq)]
pub struct Group2 {
    pub id: String,
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

/// One subgroup (i, j) of a three-level design.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgroup {
    pub id: String,
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub z1: DMatrix<f64>,
    pub z2: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group3 {
    pub id: String,
    pub subgroups: Vec<Subgroup>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Groups {
    Two { q: usize, groups: Vec<Group2> },
    Three { q1: usize, q2: usize, groups: Vec<Group3> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultilevelDataset {
    pub p_r: usize,
    pub p_a: usize,
    pub p_s: usize,
    /// Column names of [R | A | S], in design order.
    pub names: Vec<String>,
    /// Whether the first R column is an intercept added by the loader.
    pub intercept: bool,
    pub groups: Groups,
}

impl MultilevelDataset {
    pub fn depth(&self) -> Depth {
        match self.groups {
            Groups::Two { .. } => Depth::Two,
            Groups::Three { .. } => Depth::Three,
        }
    }

    pub fn p(&self) -> usize {
        self.p_r + self.p_a + self.p_s
    }

    /// Number of top-level groups.
    pub fn m(&self) -> usize {
        match &self.groups {
            Groups::Two { groups, .. } => groups.len(),
            Groups::Three { groups, .. } => groups.len(),
        }
    }

    pub fn n_obs(&self) -> usize {
        match &self.groups {
            Groups::Two { groups, .. } => groups.iter().map(|g| g.y.len()).sum(),
            Groups::Three { groups, .. } => groups.iter().flat_map(|g| g.subgroups.iter()).map(|s| s.y.len()).sum(),
        }
    }

    pub fn selection_names(&self) -> &[String] {
        &self.names[self.p_r + self.p_a..]
    }

    /// Index range of the S columns within [R | A | S].
    pub fn selection_range(&self) -> std::ops::Range<usize> {
        self.p_r + self.p_a..self.p()
    }

    /// Visit every leaf block as (y, x) in storage order.
    pub fn for_each_block<F: FnMut(&DVector<f64>, &DMatrix<f64>)>(&self, mut f: F) {
        match &self.groups {
            Groups::Two { groups, .. } => groups.iter().for_each(|g| f(&g.y, &g.x)),
            Groups::Three { groups, .. } => groups.iter().flat_map(|g| g.subgroups.iter()).for_each(|s| f(&s.y, &s.x)),
        }
    }

    /// Squared Euclidean norms of each pooled S column.
    pub fn selection_column_norms_sq(&self) -> Vec<f64> {
        let range = self.selection_range();
        let mut out = vec![0.0; self.p_s];
        self.for_each_block(|_, x| {
            for (h, c) in range.clone().enumerate() {
                out[h] += x.column(c).norm_squared();
            }
        });
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if self.names.len() != p {
            return Err(Error::DimensionMismatch(format!("{} column names for p = {p}", self.names.len())));
        }
        if self.m() == 0 {
            return Err(Error::RaggedGroup("dataset has no groups".into()));
        }
        let check = |what: &str, y: &DVector<f64>, mats: &[(&DMatrix<f64>, usize)]| -> Result<()> {
            if y.is_empty() {
                return Err(Error::RaggedGroup(format!("{what} has no observations")));
            }
            for (mat, cols) in mats {
                if mat.shape() != (y.len(), *cols) {
                    return Err(Error::DimensionMismatch(format!(
                        "{what}: block is {:?}, expected ({}, {cols})",
                        mat.shape(),
                        y.len()
                    )));
                }
            }
            Ok(())
        };
        match &self.groups {
            Groups::Two { q, groups } => {
                for g in groups {
                    check(&format!("group {}", g.id), &g.y, &[(&g.x, p), (&g.z, *q)])?;
                }
            }
            Groups::Three { q1, q2, groups } => {
                for g in groups {
                    if g.subgroups.is_empty() {
                        return Err(Error::RaggedGroup(format!("group {} has no subgroups", g.id)));
                    }
                    for s in &g.subgroups {
                        check(
                            &format!("subgroup ({}, {})", g.id, s.id),
                            &s.y,
                            &[(&s.x, p), (&s.z1, *q1), (&s.z2, *q2)],
                        )?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Read a three-level dataset with one subgroup per group as a two-level
/// dataset whose random-effects design is [Z^L1 | Z^L2]. Nothing is lost: the
/// three-level sparse system of the original has the same unknowns and the
/// same nonzero entries as the two-level system of the result.
pub fn three_to_two(ds: &MultilevelDataset) -> Result<MultilevelDataset> {
    let Groups::Three { q1, q2, groups } = &ds.groups else {
        return Err(Error::InvalidParameter("dataset is already two-level".into()));
    };
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        if g.subgroups.len() != 1 {
            return Err(Error::RaggedGroup(format!(
                "group {} has {} subgroups; the conversion needs exactly one",
                g.id,
                g.subgroups.len()
            )));
        }
        let s = &g.subgroups[0];
        let o = s.y.len();
        let mut z = DMatrix::zeros(o, q1 + q2);
        z.columns_mut(0, *q1).copy_from(&s.z1);
        z.columns_mut(*q1, *q2).copy_from(&s.z2);
        out.push(Group2 { id: g.id.clone(), y: s.y.clone(), x: s.x.clone(), z });
    }
    Ok(MultilevelDataset { groups: Groups::Two { q: q1 + q2, groups: out }, ..ds.clone_header() })
}

/// Embed a two-level dataset into three levels with one subgroup per group,
/// Z^L1 = Z and Z^L2 = 0 (q2 = q). The two-level fit's q-parameters appear
/// unchanged in the three-level fit's group level.
pub fn two_to_three(ds: &MultilevelDataset) -> Result<MultilevelDataset> {
    let Groups::Two { q, groups } = &ds.groups else {
        return Err(Error::InvalidParameter("dataset is already three-level".into()));
    };
    let out = groups
        .iter()
        .map(|g| Group3 {
            id: g.id.clone(),
            subgroups: vec![Subgroup {
                id: "1".into(),
                y: g.y.clone(),
                x: g.x.clone(),
                z1: g.z.clone(),
                z2: DMatrix::zeros(g.y.len(), *q),
            }],
        })
        .collect();
    Ok(MultilevelDataset { groups: Groups::Three { q1: *q, q2: *q, groups: out }, ..ds.clone_header() })
}

impl MultilevelDataset {
    fn clone_header(&self) -> MultilevelDataset {
        MultilevelDataset {
            p_r: self.p_r,
            p_a: self.p_a,
            p_s: self.p_s,
            names: self.names.clone(),
            intercept: self.intercept,
            groups: Groups::Two { q: 0, groups: Vec::new() },
        }
    }
}

/// Sort ids numerically when every id parses as a number, else lexically.
pub(crate) fn sort_ids(ids: &mut [String]) {
    let numeric: Option<Vec<f64>> = ids.iter().map(|s| s.trim().parse::<f64>().ok()).collect();
    match numeric {
        Some(_) => ids.sort_by(|a, b| {
            let (x, y) = (a.trim().parse::<f64>().unwrap(), b.trim().parse::<f64>().unwrap());
            x.total_cmp(&y).then_with(|| a.cmp(b))
        }),
        None => ids.sort(),
    }
}
