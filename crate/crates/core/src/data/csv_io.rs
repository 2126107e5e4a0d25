use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{sort_ids, Group2, Group3, Groups, MultilevelDataset, Subgroup};
use crate::error::{Error, Result};

pub const INTERCEPT: &str = "(Intercept)";

/// Column roles of a long-format CSV file. A `subgroup_id` makes the design
/// three-level. Random-effect designs default to the R columns (with the
/// intercept when one is added); the name `(Intercept)` in a Z list stands for
/// a column of ones unless the file has a column of that name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub response: String,
    pub group_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgroup_id: Option<String>,
    #[serde(rename = "R", default)]
    pub r: Vec<String>,
    #[serde(rename = "A", default)]
    pub a: Vec<String>,
    #[serde(rename = "S", default)]
    pub s: Vec<String>,
    #[serde(rename = "Z", default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<String>>,
    #[serde(rename = "ZL1", default, skip_serializing_if = "Option::is_none")]
    pub zl1: Option<Vec<String>>,
    #[serde(rename = "ZL2", default, skip_serializing_if = "Option::is_none")]
    pub zl2: Option<Vec<String>>,
    #[serde(default = "default_true")]
    pub intercept: bool,
}

fn default_true() -> bool {
    true
}

struct Table {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn index(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    fn numeric(&self, name: &str) -> Result<Vec<f64>> {
        if name == INTERCEPT && !self.headers.iter().any(|h| h == INTERCEPT) {
            return Ok(vec![1.0; self.rows.len()]);
        }
        let c = self.index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, rec)| {
                let v = rec.get(c).unwrap_or("").trim();
                v.parse::<f64>().map_err(|_| Error::NonNumeric {
                    column: name.to_string(),
                    row: r + 1,
                    value: v.to_string(),
                })
            })
            .collect()
    }

    fn ids(&self, name: &str) -> Result<Vec<String>> {
        let c = self.index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, rec)| {
                let v = rec.get(c).unwrap_or("").trim();
                if v.is_empty() {
                    Err(Error::RaggedGroup(format!("empty `{name}` at data row {}", r + 1)))
                } else {
                    Ok(v.to_string())
                }
            })
            .collect()
    }
}

fn gather(cols: &[Vec<f64>], rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| cols[j][rows[i]])
}

/// Group row indices by id, keeping file order within each group.
fn partition(ids: &[String], rows: impl Iterator<Item = usize>) -> Vec<(String, Vec<usize>)> {
    let mut map: HashMap<&str, Vec<usize>> = HashMap::new();
    for r in rows {
        map.entry(ids[r].as_str()).or_default().push(r);
    }
    let mut keys: Vec<String> = map.keys().map(|k| k.to_string()).collect();
    sort_ids(&mut keys);
    keys.into_iter()
        .map(|k| {
            let rows = map.remove(k.as_str()).unwrap();
            (k, rows)
        })
        .collect()
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<MultilevelDataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::Headers).from_path(path)?;
    let headers = reader.headers()?.iter().map(str::to_string).collect();
    let rows = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
    let table = Table { headers, rows };
    if table.rows.is_empty() {
        return Err(Error::RaggedGroup("file has no data rows".into()));
    }

    let mut r_names: Vec<String> = Vec::new();
    if schema.intercept {
        r_names.push(INTERCEPT.to_string());
    }
    r_names.extend(schema.r.iter().cloned());
    let mut names = r_names.clone();
    names.extend(schema.a.iter().cloned());
    names.extend(schema.s.iter().cloned());

    let y = table.numeric(&schema.response)?;
    let x_cols = names.iter().map(|n| table.numeric(n)).collect::<Result<Vec<_>>>()?;
    let load_z = |given: &Option<Vec<String>>| -> Result<Vec<Vec<f64>>> {
        given.as_ref().unwrap_or(&r_names).iter().map(|n| table.numeric(n)).collect()
    };
    let group_ids = table.ids(&schema.group_id)?;
    let y_of = |rows: &[usize]| DVector::from_iterator(rows.len(), rows.iter().map(|&r| y[r]));

    let groups = match &schema.subgroup_id {
        None => {
            let z_cols = load_z(&schema.z)?;
            let groups = partition(&group_ids, 0..table.rows.len())
                .into_iter()
                .map(|(id, rows)| Group2 { id, y: y_of(&rows), x: gather(&x_cols, &rows), z: gather(&z_cols, &rows) })
                .collect();
            Groups::Two { q: z_cols.len(), groups }
        }
        Some(sub) => {
            let sub_ids = table.ids(sub)?;
            let z1 = load_z(&schema.zl1)?;
            let z2 = load_z(&schema.zl2)?;
            let groups = partition(&group_ids, 0..table.rows.len())
                .into_iter()
                .map(|(id, rows)| Group3 {
                    id,
                    subgroups: partition(&sub_ids, rows.into_iter())
                        .into_iter()
                        .map(|(sid, rows)| Subgroup {
                            id: sid,
                            y: y_of(&rows),
                            x: gather(&x_cols, &rows),
                            z1: gather(&z1, &rows),
                            z2: gather(&z2, &rows),
                        })
                        .collect(),
                })
                .collect();
            Groups::Three { q1: z1.len(), q2: z2.len(), groups }
        }
    };

    let ds = MultilevelDataset {
        p_r: r_names.len(),
        p_a: schema.a.len(),
        p_s: schema.s.len(),
        names,
        intercept: schema.intercept,
        groups,
    };
    ds.validate()?;
    Ok(ds)
}

/// Write `ds` in long format and return the schema that reads it back. Every
/// random-effect column is written explicitly, so loading the file with the
/// returned schema reproduces `ds` exactly.
pub fn write_csv(ds: &MultilevelDataset, path: impl AsRef<Path>) -> Result<CsvSchema> {
    let skip = usize::from(ds.intercept);
    let (z1_names, z2_names): (Vec<String>, Vec<String>) = match &ds.groups {
        Groups::Two { q, .. } => ((1..=*q).map(|k| format!("Z_{k}")).collect(), Vec::new()),
        Groups::Three { q1, q2, .. } => {
            ((1..=*q1).map(|k| format!("ZL1_{k}")).collect(), (1..=*q2).map(|k| format!("ZL2_{k}")).collect())
        }
    };
    let three = matches!(ds.groups, Groups::Three { .. });
    let schema = CsvSchema {
        response: "y".into(),
        group_id: "group".into(),
        subgroup_id: three.then(|| "subgroup".into()),
        r: ds.names[skip..ds.p_r].to_vec(),
        a: ds.names[ds.p_r..ds.p_r + ds.p_a].to_vec(),
        s: ds.names[ds.p_r + ds.p_a..].to_vec(),
        z: (!three).then(|| z1_names.clone()),
        zl1: three.then(|| z1_names.clone()),
        zl2: three.then(|| z2_names.clone()),
        intercept: ds.intercept,
    };

    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["group".to_string()];
    if three {
        header.push("subgroup".into());
    }
    header.push("y".into());
    header.extend(ds.names[skip..].iter().cloned());
    header.extend(z1_names);
    header.extend(z2_names);
    w.write_record(&header)?;

    let mut write_rows = |ids: &[&str], y: &DVector<f64>, x: &DMatrix<f64>, zs: &[&DMatrix<f64>]| {
        for r in 0..y.len() {
            let mut rec: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
            rec.push(y[r].to_string());
            rec.extend((skip..x.ncols()).map(|c| x[(r, c)].to_string()));
            for z in zs {
                rec.extend((0..z.ncols()).map(|c| z[(r, c)].to_string()));
            }
            w.write_record(&rec)?;
        }
        Ok::<(), Error>(())
    };
    match &ds.groups {
        Groups::Two { groups, .. } => {
            for g in groups {
                write_rows(&[&g.id], &g.y, &g.x, &[&g.z])?;
            }
        }
        Groups::Three { groups, .. } => {
            for g in groups {
                for s in &g.subgroups {
                    write_rows(&[&g.id, &s.id], &s.y, &s.x, &[&s.z1, &s.z2])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(schema)
}
