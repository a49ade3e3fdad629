//! CSV datasets, belief files and recourse tables.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::synthetic::{ShiftKind, ShiftedDataset};
use crate::error::{Error, Result};
use crate::estimation::LabeledDataset;
use crate::model::{ComponentMoments, FeatureVector, Matrix, MixtureBelief, RecourseResult, Vector};

/// Per-column min-max scaling to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalization {
    pub fn fit(features: &Matrix) -> Self {
        let mut min = Vec::with_capacity(features.ncols());
        let mut max = Vec::with_capacity(features.ncols());
        for col in features.column_iter() {
            min.push(col.min());
            max.push(col.max());
        }
        Self { min, max }
    }

    /// Constant columns map to 0.
    pub fn apply_value(&self, j: usize, v: f64) -> f64 {
        let range = self.max[j] - self.min[j];
        if range > 0.0 {
            (v - self.min[j]) / range
        } else {
            0.0
        }
    }

    pub fn invert_value(&self, j: usize, z: f64) -> f64 {
        self.min[j] + z * (self.max[j] - self.min[j])
    }

    pub fn apply(&self, features: &Matrix) -> Result<Matrix> {
        if features.ncols() != self.min.len() {
            return Err(Error::DimensionMismatch {
                what: "normalization".into(),
                expected: self.min.len(),
                got: features.ncols(),
            });
        }
        Ok(Matrix::from_fn(features.nrows(), features.ncols(), |i, j| {
            self.apply_value(j, features[(i, j)])
        }))
    }

    pub fn apply_dataset(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        LabeledDataset::new(self.apply(data.features())?, data.labels().to_vec())
    }
}

/// A parsed CSV: header and string cells, with the 1-based file line of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    pub fn parse(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse {
                line: 1,
                message: e.to_string(),
            })?
            .iter()
            .map(str::to_string)
            .collect::<Vec<_>>();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(Error::EmptyInput("missing header row".into()));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            rows.push((line, rec.iter().map(str::to_string).collect()));
        }
        Ok(Self { headers, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(file)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn number(&self, line: usize, j: usize, cell: &str) -> Result<f64> {
        cell.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::NonNumeric {
                line,
                column: self.headers[j].clone(),
                value: cell.to_string(),
            })
    }
}

/// Positive iff the cell is `true`/`yes` or a number `> 0`; `false`/`no` or a
/// number `<= 0` is negative.
pub fn parse_label(cell: &str) -> Option<bool> {
    match cell.to_ascii_lowercase().as_str() {
        "true" | "yes" => Some(true),
        "false" | "no" => Some(false),
        other => other.parse::<f64>().ok().filter(|v| v.is_finite()).map(|v| v > 0.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub dataset: LabeledDataset,
    pub feature_names: Vec<String>,
    /// Set when the features were normalised.
    pub normalization: Option<Normalization>,
}

fn table_to_dataset(table: &Table, label_column: &str, skip: &[&str]) -> Result<(LabeledDataset, Vec<String>)> {
    let label = table
        .column(label_column)
        .ok_or_else(|| Error::MissingLabel(label_column.to_string()))?;
    let feature_cols: Vec<usize> = (0..table.headers.len())
        .filter(|&j| j != label && !skip.contains(&table.headers[j].as_str()))
        .collect();
    if table.rows.is_empty() {
        return Err(Error::EmptyInput("no data rows".into()));
    }
    let mut values = Vec::with_capacity(table.rows.len() * feature_cols.len());
    let mut labels = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        for &j in &feature_cols {
            values.push(table.number(*line, j, &row[j])?);
        }
        labels.push(parse_label(&row[label]).ok_or_else(|| Error::NonNumeric {
            line: *line,
            column: label_column.to_string(),
            value: row[label].clone(),
        })?);
    }
    let names = feature_cols.iter().map(|&j| table.headers[j].clone()).collect();
    let features = Matrix::from_row_slice(table.rows.len(), feature_cols.len(), &values);
    Ok((LabeledDataset::new(features, labels)?, names))
}

/// Reads a dataset with a header row. With `normalize`, features are min-max
/// scaled and the scaling is returned; constant columns become zeros (with a
/// warning).
pub fn load_csv(path: &Path, label_column: &str, normalize: bool) -> Result<LoadedData> {
    load_table(&Table::read(path)?, label_column, normalize)
}

pub fn load_table(table: &Table, label_column: &str, normalize: bool) -> Result<LoadedData> {
    let (dataset, feature_names) = table_to_dataset(table, label_column, &[])?;
    if !normalize {
        return Ok(LoadedData {
            dataset,
            feature_names,
            normalization: None,
        });
    }
    let norm = Normalization::fit(dataset.features());
    for (j, name) in feature_names.iter().enumerate() {
        if norm.max[j] == norm.min[j] {
            log::warn!("column `{name}` is constant; normalised to 0");
        }
    }
    Ok(LoadedData {
        dataset: norm.apply_dataset(&dataset)?,
        feature_names,
        normalization: Some(norm),
    })
}

/// Rows of `table` as instances, keyed by 0-based data row. The label column,
/// if present, is ignored.
pub fn load_instances(
    table: &Table,
    label_column: &str,
    normalization: Option<&Normalization>,
) -> Result<Vec<(usize, FeatureVector)>> {
    let cols: Vec<usize> = (0..table.headers.len())
        .filter(|&j| table.headers[j] != label_column)
        .collect();
    if table.rows.is_empty() {
        return Err(Error::EmptyInput("no instance rows".into()));
    }
    if let Some(n) = normalization {
        if n.min.len() != cols.len() {
            return Err(Error::DimensionMismatch {
                what: "instance features".into(),
                expected: n.min.len(),
                got: cols.len(),
            });
        }
    }
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, (line, row))| {
            let f = cols
                .iter()
                .enumerate()
                .map(|(k, &j)| {
                    let v = table.number(*line, j, &row[j])?;
                    Ok(normalization.map_or(v, |n| n.apply_value(k, v)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((i, FeatureVector::from_features(&f)?))
        })
        .collect()
}

pub fn dataset_to_csv(data: &LabeledDataset) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=data.n_features()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header).expect("in-memory write");
    for i in 0..data.len() {
        let mut rec: Vec<String> = data.features().row(i).iter().map(|v| v.to_string()).collect();
        rec.push(if data.labels()[i] { "1" } else { "0" }.into());
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

pub fn shifted_to_csv(shifted: &[ShiftedDataset]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let d = shifted.first().map_or(0, |s| s.data.n_features());
    let mut header: Vec<String> = vec!["shift".into(), "kind".into(), "iter".into()];
    header.extend((1..=d).map(|j| format!("x{j}")));
    header.push("label".into());
    w.write_record(&header).expect("in-memory write");
    for (s, sd) in shifted.iter().enumerate() {
        for i in 0..sd.data.len() {
            let mut rec = vec![s.to_string(), sd.kind.as_str().to_string(), sd.iter.to_string()];
            rec.extend(sd.data.features().row(i).iter().map(|v| v.to_string()));
            rec.push(if sd.data.labels()[i] { "1" } else { "0" }.into());
            w.write_record(&rec).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

/// Inverse of [`shifted_to_csv`]; rows are grouped by the `shift` column.
pub fn load_shifted(table: &Table) -> Result<Vec<ShiftedDataset>> {
    let shift = table
        .column("shift")
        .ok_or_else(|| Error::MissingLabel("shift".into()))?;
    let kind = table.column("kind").ok_or_else(|| Error::MissingLabel("kind".into()))?;
    let iter = table.column("iter").ok_or_else(|| Error::MissingLabel("iter".into()))?;
    let mut groups: std::collections::BTreeMap<usize, (ShiftKind, usize, Vec<(usize, Vec<String>)>)> =
        Default::default();
    for (line, row) in &table.rows {
        let id: usize = row[shift].parse().map_err(|_| Error::NonNumeric {
            line: *line,
            column: "shift".into(),
            value: row[shift].clone(),
        })?;
        let k = match row[kind].as_str() {
            "mean" => ShiftKind::Mean,
            "cov" => ShiftKind::Cov,
            "both" => ShiftKind::Both,
            other => {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("unknown shift kind `{other}`"),
                })
            }
        };
        let it: usize = row[iter].parse().map_err(|_| Error::NonNumeric {
            line: *line,
            column: "iter".into(),
            value: row[iter].clone(),
        })?;
        groups
            .entry(id)
            .or_insert_with(|| (k, it, Vec::new()))
            .2
            .push((*line, row.clone()));
    }
    if groups.is_empty() {
        return Err(Error::EmptyInput("no shifted rows".into()));
    }
    groups
        .into_values()
        .map(|(kind, iter, rows)| {
            let sub = Table {
                headers: table.headers.clone(),
                rows,
            };
            let (data, _) = table_to_dataset(&sub, "label", &["shift", "kind", "iter"])?;
            Ok(ShiftedDataset { kind, iter, data })
        })
        .collect()
}

/// JSON form of a belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeliefFile {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
    pub radii: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
}

impl BeliefFile {
    pub fn from_belief(belief: &MixtureBelief, normalization: Option<Normalization>) -> Self {
        let comps = belief.components();
        Self {
            weights: belief.weights().to_vec(),
            means: comps.iter().map(|c| c.mean().iter().copied().collect()).collect(),
            covariances: comps
                .iter()
                .map(|c| c.covariance().row_iter().map(|r| r.iter().copied().collect()).collect())
                .collect(),
            radii: comps.iter().map(|c| c.radius()).collect(),
            normalization,
        }
    }

    pub fn to_belief(&self) -> Result<MixtureBelief> {
        let k = self.weights.len();
        if self.means.len() != k || self.covariances.len() != k || self.radii.len() != k {
            return Err(Error::InvalidWeights(format!(
                "belief file lists {k} weights but {} means, {} covariances, {} radii",
                self.means.len(),
                self.covariances.len(),
                self.radii.len()
            )));
        }
        let comps = (0..k)
            .map(|i| {
                let d = self.means[i].len();
                let rows = &self.covariances[i];
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::DimensionMismatch {
                        what: format!("covariance {i}"),
                        expected: d,
                        got: rows.len(),
                    });
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                ComponentMoments::new(
                    Vector::from_vec(self.means[i].clone()),
                    Matrix::from_row_slice(d, d, &flat),
                    self.radii[i],
                )
                .map_err(|e| match e {
                    Error::NotPositiveDefinite { min_eigenvalue, .. } => Error::NotPositiveDefinite {
                        component: i,
                        min_eigenvalue,
                    },
                    Error::NotSymmetric { asymmetry, .. } => Error::NotSymmetric {
                        component: i,
                        asymmetry,
                    },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MixtureBelief::new(comps, self.weights.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serialises") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Outcome of one recourse solve, kept even when it failed.
#[derive(Debug, Clone, PartialEq)]
pub struct RecourseRecord {
    /// Row of the instance in its source table.
    pub id: usize,
    pub x0: FeatureVector,
    pub outcome: std::result::Result<RecourseResult, String>,
}

impl RecourseRecord {
    /// The recourse, or `x0` (no action) if the solve failed.
    pub fn action(&self) -> &FeatureVector {
        match &self.outcome {
            Ok(r) => &r.action,
            Err(_) => &self.x0,
        }
    }
}

/// Recourse table. Coordinates are given in model units (`x*`) and, through
/// `normalization`, in original units (`raw_x*`); failed rows leave them empty.
pub fn recourses_to_csv(records: &[RecourseRecord], k: usize, normalization: Option<&Normalization>) -> String {
    let m = records.first().map_or(0, |r| r.x0.dim() - 1);
    let mut header = vec!["id".to_string()];
    header.extend((1..=m).map(|j| format!("x{j}")));
    header.extend((1..=m).map(|j| format!("raw_x{j}")));
    header.push("objective".into());
    header.extend((1..=k).map(|j| format!("prob_{j}")));
    header.extend(["stationarity", "iterations", "converged", "delta_min", "status"].map(String::from));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for r in records {
        let mut rec = vec![r.id.to_string()];
        match &r.outcome {
            Ok(res) => {
                let f = res.action.features();
                rec.extend(f.iter().map(|v| v.to_string()));
                rec.extend(
                    f.iter()
                        .enumerate()
                        .map(|(j, &v)| normalization.map_or(v, |n| n.invert_value(j, v)).to_string()),
                );
                rec.push(res.objective.to_string());
                rec.extend((0..k).map(|j| res.component_probs.get(j).map_or(String::new(), |p| p.to_string())));
                rec.push(res.stationarity.to_string());
                rec.push(res.iterations.to_string());
                rec.push(res.converged.to_string());
                rec.push(res.delta_min.to_string());
                rec.push("ok".into());
            }
            Err(msg) => {
                rec.extend(std::iter::repeat_n(String::new(), 2 * m + 1 + k + 4));
                rec.push(format!("error: {msg}"));
            }
        }
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

/// Reads `id` and the model-unit coordinates back; `None` marks a failed row.
pub fn load_recourses(table: &Table) -> Result<Vec<(usize, Option<Vec<f64>>)>> {
    let id = table.column("id").ok_or_else(|| Error::MissingLabel("id".into()))?;
    let coords: Vec<usize> = (1..).map_while(|j| table.column(&format!("x{j}"))).collect();
    if coords.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no coordinate columns x1, x2, ...".into(),
        });
    }
    table
        .rows
        .iter()
        .map(|(line, row)| {
            let rid = row[id].parse().map_err(|_| Error::NonNumeric {
                line: *line,
                column: "id".into(),
                value: row[id].clone(),
            })?;
            if row[coords[0]].is_empty() {
                return Ok((rid, None));
            }
            let x = coords
                .iter()
                .map(|&j| table.number(*line, j, &row[j]))
                .collect::<Result<Vec<_>>>()?;
            Ok((rid, Some(x)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_row_toy_file() {
        let t = Table::parse("a,b,label\n1,2,0\n3,4,1\n5,6,1\n".as_bytes()).unwrap();
        let d = load_table(&t, "label", false).unwrap();
        assert_eq!(d.dataset.len(), 3);
        assert_eq!(d.feature_names, vec!["a", "b"]);
        assert_eq!(d.dataset.labels(), &[false, true, true]);
    }

    #[test]
    fn constant_column_normalises_to_zero() {
        let t = Table::parse("a,b,label\n1,7,0\n3,7,1\n5,7,1\n".as_bytes()).unwrap();
        let d = load_table(&t, "label", true).unwrap();
        let f = d.dataset.features();
        assert_eq!(f.column(1).iter().copied().collect::<Vec<_>>(), vec![0.0; 3]);
        assert_eq!(f.column(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.5, 1.0]);
        let n = d.normalization.unwrap();
        assert_eq!(n.invert_value(0, 0.5), 3.0);
    }

    #[test]
    fn malformed_row_names_its_line() {
        let t = Table::parse("a,b,label\n1,2,0\n3,4\n".as_bytes());
        assert!(matches!(t, Err(Error::Parse { line: 3, .. })), "{t:?}");
    }

    #[test]
    fn non_numeric_and_missing_label() {
        let t = Table::parse("a,label\n1,0\nfoo,1\n".as_bytes()).unwrap();
        assert_eq!(
            load_table(&t, "label", false),
            Err(Error::NonNumeric {
                line: 3,
                column: "a".into(),
                value: "foo".into()
            })
        );
        assert_eq!(load_table(&t, "y", false), Err(Error::MissingLabel("y".into())));
    }

    #[test]
    fn belief_round_trip() {
        let c = ComponentMoments::new(
            Vector::from_row_slice(&[1.0, -0.5]),
            Matrix::from_row_slice(2, 2, &[0.2, 0.01, 0.01, 0.1]),
            0.3,
        )
        .unwrap();
        let b = MixtureBelief::single(c);
        let f = BeliefFile::from_belief(&b, None);
        let back = BeliefFile::from_json(&f.to_json()).unwrap();
        assert_eq!(back.to_belief().unwrap(), b);
    }

    #[test]
    fn belief_file_rejects_unknown_keys() {
        assert!(BeliefFile::from_json(
            r#"{"weights":[1],"means":[[1,1]],"covariances":[[[1,0],[0,1]]],"radii":[0],"extra":1}"#
        )
        .is_err());
    }
}
