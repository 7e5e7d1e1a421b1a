//! Observational data: covariates, a binary treatment, an outcome and,
//! for simulated data, both potential outcomes.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Column-major covariates: `features[j][i]` is feature `j` of row `i`.
    features: Vec<Vec<f64>>,
    feature_names: Vec<String>,
    treatment: Vec<bool>,
    outcome: Vec<f64>,
    potential_outcomes: Option<(Vec<f64>, Vec<f64>)>,
    row_ids: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset from feature columns, checking every invariant.
    /// Row ids default to `0..n`.
    pub fn new(
        features: Vec<Vec<f64>>,
        feature_names: Vec<String>,
        treatment: Vec<bool>,
        outcome: Vec<f64>,
        potential_outcomes: Option<(Vec<f64>, Vec<f64>)>,
    ) -> Result<Self> {
        let n = treatment.len();
        Self::with_row_ids(
            features,
            feature_names,
            treatment,
            outcome,
            potential_outcomes,
            (0..n).collect(),
        )
    }

    pub fn with_row_ids(
        features: Vec<Vec<f64>>,
        feature_names: Vec<String>,
        treatment: Vec<bool>,
        outcome: Vec<f64>,
        potential_outcomes: Option<(Vec<f64>, Vec<f64>)>,
        row_ids: Vec<usize>,
    ) -> Result<Self> {
        let n = treatment.len();
        if features.len() != feature_names.len() {
            return Err(Error::InvalidData(format!(
                "{} feature columns but {} names",
                features.len(),
                feature_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidData(format!("duplicate feature name `{name}`")));
            }
        }
        let check_len = |what: &str, len: usize| {
            if len != n {
                Err(Error::InvalidData(format!("{what} has {len} rows, expected {n}")))
            } else {
                Ok(())
            }
        };
        for (name, col) in feature_names.iter().zip(&features) {
            check_len(name, col.len())?;
            if col.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidData(format!("feature `{name}` has non-finite values")));
            }
        }
        check_len("outcome", outcome.len())?;
        check_len("row_ids", row_ids.len())?;
        if outcome.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidData("outcome has non-finite values".into()));
        }
        if let Some((y0, y1)) = &potential_outcomes {
            check_len("y0", y0.len())?;
            check_len("y1", y1.len())?;
            if y0.iter().chain(y1).any(|y| !y.is_finite()) {
                return Err(Error::InvalidData("potential outcomes have non-finite values".into()));
            }
        }
        Ok(Self {
            features,
            feature_names,
            treatment,
            outcome,
            potential_outcomes,
            row_ids,
        })
    }

    pub fn n(&self) -> usize {
        self.treatment.len()
    }

    pub fn d(&self) -> usize {
        self.features.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.features[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.features.iter().map(|c| c[i]).collect()
    }

    pub fn treatment(&self) -> &[bool] {
        &self.treatment
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn potential_outcomes(&self) -> Option<(&[f64], &[f64])> {
        self.potential_outcomes
            .as_ref()
            .map(|(y0, y1)| (y0.as_slice(), y1.as_slice()))
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn n_treated(&self) -> usize {
        self.treatment.iter().filter(|&&t| t).count()
    }

    /// Returns an error unless both arms have at least one row.
    pub fn require_both_arms(&self) -> Result<()> {
        let nt = self.n_treated();
        match (nt, self.n() - nt) {
            (0, 0) => Err(Error::InvalidData("dataset has no rows".into())),
            (0, n) => Err(Error::SingleArm(n, 0)),
            (n, 0) => Err(Error::SingleArm(n, 1)),
            _ => Ok(()),
        }
    }

    /// Rows at the given positions, in the given order, keeping their row ids.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Dataset {
            features: self.features.iter().map(|c| pick(c)).collect(),
            feature_names: self.feature_names.clone(),
            treatment: rows.iter().map(|&i| self.treatment[i]).collect(),
            outcome: pick(&self.outcome),
            potential_outcomes: self
                .potential_outcomes
                .as_ref()
                .map(|(y0, y1)| (pick(y0), pick(y1))),
            row_ids: rows.iter().map(|&i| self.row_ids[i]).collect(),
        }
    }

    /// Appends feature columns. Names must not collide with existing ones.
    pub fn with_extra_features(&self, names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Dataset> {
        let mut features = self.features.clone();
        features.extend(columns);
        let mut feature_names = self.feature_names.clone();
        feature_names.extend(names);
        Dataset::with_row_ids(
            features,
            feature_names,
            self.treatment.clone(),
            self.outcome.clone(),
            self.potential_outcomes.clone(),
            self.row_ids.clone(),
        )
    }

    /// Same rows with the treatment labels flipped.
    pub fn with_treatment(&self, treatment: Vec<bool>) -> Result<Dataset> {
        Dataset::with_row_ids(
            self.features.clone(),
            self.feature_names.clone(),
            treatment,
            self.outcome.clone(),
            self.potential_outcomes.clone(),
            self.row_ids.clone(),
        )
    }

    /// Same rows with a different outcome vector.
    pub fn with_outcome(&self, outcome: Vec<f64>) -> Result<Dataset> {
        Dataset::with_row_ids(
            self.features.clone(),
            self.feature_names.clone(),
            self.treatment.clone(),
            outcome,
            self.potential_outcomes.clone(),
            self.row_ids.clone(),
        )
    }

    pub fn load_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<Dataset> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, schema)
    }

    /// Parses comma-separated text with a header row.
    pub fn from_csv_reader<R: Read>(reader: R, schema: &ColumnSchema) -> Result<Dataset> {
        schema.validate()?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let index_of = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };

        let t_idx = index_of(&schema.treatment_column)?;
        let y_idx = index_of(&schema.outcome_column)?;
        let y0_idx = schema.y0_column.as_deref().map(index_of).transpose()?;
        let y1_idx = schema.y1_column.as_deref().map(index_of).transpose()?;
        let reserved: Vec<usize> = [Some(t_idx), Some(y_idx), y0_idx, y1_idx]
            .into_iter()
            .flatten()
            .collect();
        let feature_idx: Vec<usize> = match &schema.feature_columns {
            FeatureColumns::AllRemaining => (0..header.len()).filter(|i| !reserved.contains(i)).collect(),
            FeatureColumns::Explicit(names) => {
                let idx = names.iter().map(|n| index_of(n)).collect::<Result<Vec<_>>>()?;
                if let Some(clash) = idx.iter().find(|i| reserved.contains(i)) {
                    return Err(Error::Schema(format!(
                        "column `{}` cannot be both a feature and treatment/outcome",
                        header[*clash]
                    )));
                }
                idx
            }
        };
        let feature_names: Vec<String> = feature_idx.iter().map(|&i| header[i].clone()).collect();

        let mut features = vec![Vec::new(); feature_idx.len()];
        let mut treatment = Vec::new();
        let mut outcome = Vec::new();
        let mut y0 = Vec::new();
        let mut y1 = Vec::new();

        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            let row = r + 1;
            let cell = |i: usize| record.get(i).unwrap_or("").trim();
            let number = |i: usize| -> Result<f64> {
                let raw = cell(i);
                match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(Error::BadNumber {
                        row,
                        column: header[i].clone(),
                        value: raw.to_string(),
                    }),
                }
            };
            for (col, &i) in features.iter_mut().zip(&feature_idx) {
                col.push(number(i)?);
            }
            let t_raw = cell(t_idx);
            let t = match t_raw.parse::<f64>() {
                Ok(0.0) => false,
                Ok(1.0) => true,
                _ => {
                    return Err(Error::NonBinaryTreatment {
                        row,
                        value: t_raw.to_string(),
                    })
                }
            };
            treatment.push(t);
            outcome.push(number(y_idx)?);
            if let Some(i) = y0_idx {
                y0.push(number(i)?);
            }
            if let Some(i) = y1_idx {
                y1.push(number(i)?);
            }
        }

        let potential_outcomes = match (y0_idx, y1_idx) {
            (Some(_), Some(_)) => Some((y0, y1)),
            _ => None,
        };
        Dataset::new(features, feature_names, treatment, outcome, potential_outcomes)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file)
    }

    /// Writes `features..., T, Y[, y0, y1]`. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.extend(["T", "Y"]);
        if self.potential_outcomes.is_some() {
            header.extend(["y0", "y1"]);
        }
        wtr.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.n() {
            record.clear();
            record.extend(self.features.iter().map(|c| c[i].to_string()));
            record.push(if self.treatment[i] { "1".into() } else { "0".into() });
            record.push(self.outcome[i].to_string());
            if let Some((y0, y1)) = &self.potential_outcomes {
                record.push(y0[i].to_string());
                record.push(y1[i].to_string());
            }
            wtr.write_record(&record)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureColumns {
    AllRemaining,
    Explicit(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub treatment_column: String,
    pub outcome_column: String,
    pub y0_column: Option<String>,
    pub y1_column: Option<String>,
    pub feature_columns: FeatureColumns,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            treatment_column: "T".into(),
            outcome_column: "Y".into(),
            y0_column: None,
            y1_column: None,
            feature_columns: FeatureColumns::AllRemaining,
        }
    }
}

impl ColumnSchema {
    pub fn new(treatment: impl Into<String>, outcome: impl Into<String>) -> Self {
        Self {
            treatment_column: treatment.into(),
            outcome_column: outcome.into(),
            ..Default::default()
        }
    }

    /// Also read `y0`/`y1` potential-outcome columns.
    pub fn with_potential_outcomes(mut self, y0: impl Into<String>, y1: impl Into<String>) -> Self {
        self.y0_column = Some(y0.into());
        self.y1_column = Some(y1.into());
        self
    }

    pub fn with_features(mut self, names: Vec<String>) -> Self {
        self.feature_columns = FeatureColumns::Explicit(names);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.treatment_column == self.outcome_column {
            return Err(Error::Schema(
                "treatment and outcome columns must be distinct".into(),
            ));
        }
        if self.y0_column.is_some() != self.y1_column.is_some() {
            return Err(Error::Schema("y0 and y1 columns must be given together".into()));
        }
        Ok(())
    }
}

/// Seeded disjoint train/test partition. The train part has
/// `round(n * train_fraction)` rows (clamped so neither side is empty);
/// both parts keep the original row order.
pub fn split_train_test(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = ds.n();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 rows to split".into()));
    }
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let mut perm: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut perm);
    let mut train = perm[..n_train].to_vec();
    let mut test = perm[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train), ds.subset(&test)))
}
