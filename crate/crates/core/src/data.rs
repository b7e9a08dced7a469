//! Observed data containers and CSV input.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// Confounders Z = (L, A, R, D) as seen by estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confounders {
    /// Natural-log LDL.
    pub l: f64,
    /// Age in years.
    pub a: f64,
    /// Risk score in (0, 1).
    pub r: f64,
    /// Diabetes indicator.
    pub d: f64,
}

/// One observed row (X, Y, Z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub z: Confounders,
    pub x: u8,
    pub y: u8,
}

/// An observed dataset of binary treatment, binary outcome and confounders.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    rows: Vec<Observation>,
}

impl Dataset {
    pub fn new(rows: Vec<Observation>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.x > 1 || row.y > 1 {
                return Err(Error::InvalidInput(format!(
                    "row {i}: treatment and outcome must be 0 or 1"
                )));
            }
            let z = row.z;
            if ![z.l, z.a, z.r, z.d].iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "row {i}: non-finite confounder"
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn treatment(&self) -> Vec<f64> {
        self.rows.iter().map(|r| f64::from(r.x)).collect()
    }

    pub fn outcome(&self) -> Vec<f64> {
        self.rows.iter().map(|r| f64::from(r.y)).collect()
    }

    /// Rows at `indices`, in that order (duplicates allowed).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            rows: indices.iter().map(|&i| self.rows[i]).collect(),
        }
    }

    pub fn treated_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            return f64::NAN;
        }
        self.rows.iter().map(|r| f64::from(r.x)).sum::<f64>() / self.rows.len() as f64
    }

    /// Reads a CSV file with (at least) the columns `A,L,D,R,X,Y`.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = csv
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .clone();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let (ia, il, id, ir, ix, iy) = (
            col("A")?,
            col("L")?,
            col("D")?,
            col("R")?,
            col("X")?,
            col("Y")?,
        );

        let mut rows = Vec::new();
        for (line, record) in csv.records().enumerate() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            let field = |idx: usize, name: &str| -> Result<f64> {
                let raw = record.get(idx).ok_or_else(|| {
                    Error::Parse(format!("record {}: missing field {name}", line + 1))
                })?;
                raw.trim().parse::<f64>().map_err(|_| {
                    Error::Parse(format!(
                        "record {}: column {name}: cannot parse {raw:?}",
                        line + 1
                    ))
                })
            };
            let binary = |idx: usize, name: &str| -> Result<u8> {
                let v = field(idx, name)?;
                if v == 0.0 {
                    Ok(0)
                } else if v == 1.0 {
                    Ok(1)
                } else {
                    Err(Error::Parse(format!(
                        "record {}: column {name} must be 0 or 1, got {v}",
                        line + 1
                    )))
                }
            };
            let z = Confounders {
                l: field(il, "L")?,
                a: field(ia, "A")?,
                r: field(ir, "R")?,
                d: f64::from(binary(id, "D")?),
            };
            rows.push(Observation {
                z,
                x: binary(ix, "X")?,
                y: binary(iy, "Y")?,
            });
        }
        if rows.is_empty() {
            return Err(Error::Parse("no data rows".into()));
        }
        Dataset::new(rows)
    }
}

/// Row-major design matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    names: Vec<String>,
    n_rows: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, data: Vec<f64>) -> Result<Self> {
        let p = names.len();
        if p == 0 {
            return Err(Error::InvalidInput(
                "feature matrix needs at least one column".into(),
            ));
        }
        if !data.len().is_multiple_of(p) {
            return Err(Error::InvalidInput(format!(
                "data length {} is not a multiple of {p} columns",
                data.len()
            )));
        }
        let n_rows = data.len() / p;
        if n_rows == 0 {
            return Err(Error::InvalidInput(
                "feature matrix needs at least one row".into(),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value in column `{}` at row {}",
                names[pos % p],
                pos / p
            )));
        }
        Ok(Self {
            names,
            n_rows,
            data,
        })
    }

    /// Builds a matrix from per-row closures; `names` fixes the column order.
    pub fn from_rows<I>(names: &[&str], rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = Vec<f64>>,
    {
        let mut data = Vec::new();
        for row in rows {
            debug_assert_eq!(row.len(), names.len());
            data.extend(row);
        }
        Self::new(names.iter().map(|s| s.to_string()).collect(), data)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols());
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            names: self.names.clone(),
            n_rows: indices.len(),
            data,
        }
    }

    /// True when every value of column `j` is exactly 0 or 1.
    pub fn is_binary_column(&self, j: usize) -> bool {
        (0..self.n_rows).all(|i| {
            let v = self.get(i, j);
            v == 0.0 || v == 1.0
        })
    }

    pub(crate) fn check_schema(&self, expected: &[String]) -> Result<()> {
        if self.names != expected {
            return Err(Error::SchemaMismatch {
                expected: expected.to_vec(),
                found: self.names.clone(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_missing_column_is_named() {
        let text = "A,L,D,R,X\n50,4.6,0,0.1,1\n";
        match Dataset::from_csv_reader(text.as_bytes()) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "Y"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_columns_in_any_order() {
        let text = "Y,X,R,D,L,A,extra\n1,0,0.2,1,4.7,61,9\n";
        let data = Dataset::from_csv_reader(text.as_bytes()).unwrap();
        let row = data.rows()[0];
        assert_eq!((row.x, row.y), (0, 1));
        assert_eq!(
            row.z,
            Confounders {
                l: 4.7,
                a: 61.0,
                r: 0.2,
                d: 1.0
            }
        );
    }

    #[test]
    fn csv_rejects_non_binary_treatment() {
        let text = "A,L,D,R,X,Y\n50,4.6,0,0.1,2,1\n";
        assert!(matches!(
            Dataset::from_csv_reader(text.as_bytes()),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn feature_matrix_rejects_non_finite() {
        let err = FeatureMatrix::new(vec!["a".into(), "b".into()], vec![1.0, 2.0, f64::NAN, 0.0]);
        assert!(err.is_err());
    }

    #[test]
    fn schema_check() {
        let m = FeatureMatrix::from_rows(&["a", "b"], vec![vec![1.0, 0.0]]).unwrap();
        assert!(m.check_schema(&["a".to_string(), "b".to_string()]).is_ok());
        assert!(m.check_schema(&["b".to_string(), "a".to_string()]).is_err());
        assert!(m.is_binary_column(0) && m.is_binary_column(1));
    }
}
