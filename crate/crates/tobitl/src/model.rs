//! Canonical data model: validated datasets, first-stage instrument designs,
//! and the control-function augmented design.
//!
//! The model under study is a Tobit (left-censored at zero) regression
//!
//! ```text
//! y_i = max(0, x̃_i'α + w_i γ + ε_i)
//! ```
//!
//! with `p` exogenous regressors `x̃` (first component 1), one endogenous
//! regressor `w`, and one excluded instrument `z1`. The second stage runs on
//! the augmented design `x̂_i = [x̃_i', w_i, e_i]'` where `e` are first-stage
//! residuals, so the last coefficient is always the control-function
//! coefficient ρ₁.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw tabular records, as read from a CSV file: a header row plus string
/// cells. Parsing to numbers happens in [`validate_dataset`] so that errors
/// can point at the offending row and column.
#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Read a UTF-8 CSV file with a header row and `.` decimal separator.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Table> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader(reader: impl Read) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Csv(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
            rows.push(rec.iter().map(|c| c.trim().to_string()).collect());
        }
        Ok(Table { headers, rows })
    }
}

/// Column-role map: which named columns play which role in the model.
///
/// Exactly one response, at least one exogenous regressor (an intercept is
/// auto-prepended if the listed block has no constant column), exactly one
/// endogenous regressor, and exactly one excluded instrument.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    pub response: String,
    pub exogenous: Vec<String>,
    pub endogenous: String,
    pub instrument: String,
}

impl Schema {
    pub fn from_json_path(path: impl AsRef<Path>) -> Result<Schema> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidParameter {
            name: "schema".into(),
            reason: e.to_string(),
        })
    }
}

/// Column labels carried alongside a [`Dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnNames {
    pub response: String,
    /// Exogenous labels including the intercept at position 0.
    pub exogenous: Vec<String>,
    pub endogenous: String,
    pub instrument: String,
}

impl ColumnNames {
    /// Labels of the augmented design columns, in `[x̃ | w | e]` order.
    pub fn augmented(&self) -> Vec<String> {
        let mut out = self.exogenous.clone();
        out.push(self.endogenous.clone());
        out.push("residual".to_string());
        out
    }
}

/// A validated dataset: response, exogenous block (first column identically
/// one), endogenous regressor, and excluded instrument, all of length `n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    y: Vec<f64>,
    x_exo: Vec<f64>, // row-major n × p, column 0 all ones
    p: usize,
    w: Vec<f64>,
    z1: Vec<f64>,
    names: ColumnNames,
}

impl Dataset {
    /// Assemble and validate a dataset from raw columns. `x_exo_rows` is
    /// row-major with `p` columns whose first column must be identically 1.
    pub fn new(
        y: Vec<f64>,
        x_exo_rows: Vec<f64>,
        p: usize,
        w: Vec<f64>,
        z1: Vec<f64>,
        names: ColumnNames,
    ) -> Result<Dataset> {
        let n = y.len();
        if p == 0 {
            return Err(Error::invalid("x_exo", "at least the intercept column is required"));
        }
        if x_exo_rows.len() != n * p {
            return Err(Error::LengthMismatch {
                what: "x_exo".into(),
                got: x_exo_rows.len(),
                expected: n * p,
            });
        }
        for (what, v) in [("w", &w), ("z1", &z1)] {
            if v.len() != n {
                return Err(Error::LengthMismatch {
                    what: what.into(),
                    got: v.len(),
                    expected: n,
                });
            }
        }
        if n < p + 3 {
            return Err(Error::TooFewRows { n, min: p + 3 });
        }
        for (row, &yi) in y.iter().enumerate() {
            if !yi.is_finite() {
                return Err(Error::NonFinite { row, column: names.response.clone() });
            }
            if yi < 0.0 {
                return Err(Error::NegativeResponse { row });
            }
        }
        for row in 0..n {
            for j in 0..p {
                let v = x_exo_rows[row * p + j];
                if !v.is_finite() {
                    return Err(Error::NonFinite { row, column: names.exogenous[j].clone() });
                }
            }
            if x_exo_rows[row * p] != 1.0 {
                return Err(Error::invalid(
                    "x_exo",
                    format!("column 0 must be identically 1 (row {row})"),
                ));
            }
            if !w[row].is_finite() {
                return Err(Error::NonFinite { row, column: names.endogenous.clone() });
            }
            if !z1[row].is_finite() {
                return Err(Error::NonFinite { row, column: names.instrument.clone() });
            }
        }
        Ok(Dataset { y, x_exo: x_exo_rows, p, w, z1, names })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of exogenous columns including the intercept.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn z1(&self) -> &[f64] {
        &self.z1
    }

    pub fn names(&self) -> &ColumnNames {
        &self.names
    }

    /// Exogenous block as an `n × p` matrix.
    pub fn x_exo_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n(), self.p, &self.x_exo)
    }

    /// Number of censored observations `#{y_i = 0}`.
    pub fn censored_count(&self) -> usize {
        self.y.iter().filter(|&&v| v == 0.0).count()
    }

    /// Fraction of censored observations.
    pub fn censoring_proportion(&self) -> f64 {
        self.censored_count() as f64 / self.n() as f64
    }

    /// Resample rows by index (bootstrap support). Indices may repeat.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        let p = self.p;
        let mut y = Vec::with_capacity(idx.len());
        let mut x = Vec::with_capacity(idx.len() * p);
        let mut w = Vec::with_capacity(idx.len());
        let mut z1 = Vec::with_capacity(idx.len());
        for &i in idx {
            y.push(self.y[i]);
            x.extend_from_slice(&self.x_exo[i * p..(i + 1) * p]);
            w.push(self.w[i]);
            z1.push(self.z1[i]);
        }
        Dataset { y, x_exo: x, p, w, z1, names: self.names.clone() }
    }
}

/// First-stage design `Z = [z1 | x̃]`, an `n × (p+1)` matrix with the
/// excluded instrument in column 0, the intercept in column 1, and the
/// remaining exogenous regressors after.
#[derive(Debug, Clone)]
pub struct InstrumentDesign {
    z: DMatrix<f64>,
}

impl InstrumentDesign {
    /// Wrap an arbitrary design matrix (testing and non-standard designs).
    pub fn from_matrix(z: DMatrix<f64>) -> InstrumentDesign {
        InstrumentDesign { z }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn ncols(&self) -> usize {
        self.z.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.z.nrows()
    }

    /// Row `i` as an owned vector.
    pub fn row(&self, i: usize) -> DVector<f64> {
        self.z.row(i).transpose()
    }
}

/// Build `Z = [z1 | x_exo]`. Rank is checked at fit time, not here.
pub fn build_instrument_design(d: &Dataset) -> InstrumentDesign {
    let n = d.n();
    let p = d.p();
    let mut z = DMatrix::zeros(n, p + 1);
    for i in 0..n {
        z[(i, 0)] = d.z1()[i];
        for j in 0..p {
            z[(i, j + 1)] = d.x_exo[i * p + j];
        }
    }
    InstrumentDesign { z }
}

/// Augmented second-stage design `X̂ = [x̃ | w | e]`, an `n × (p+2)` matrix.
/// Carries the fingerprint of the residual column so downstream code can
/// verify it came from a specific first-stage fit.
#[derive(Debug, Clone)]
pub struct AugmentedDesign {
    x_hat: DMatrix<f64>,
    residual_fingerprint: u64,
}

impl AugmentedDesign {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x_hat
    }

    pub fn ncols(&self) -> usize {
        self.x_hat.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.x_hat.nrows()
    }

    pub fn residual_fingerprint(&self) -> u64 {
        self.residual_fingerprint
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.x_hat.row(i).transpose()
    }
}

/// Build `X̂ = [x_exo | w | e]` from a dataset and a residual sequence.
pub fn build_augmented_design(d: &Dataset, e: &[f64]) -> Result<AugmentedDesign> {
    let n = d.n();
    let p = d.p();
    if e.len() != n {
        return Err(Error::LengthMismatch { what: "residuals".into(), got: e.len(), expected: n });
    }
    let mut x = DMatrix::zeros(n, p + 2);
    for i in 0..n {
        for j in 0..p {
            x[(i, j)] = d.x_exo[i * p + j];
        }
        x[(i, p)] = d.w()[i];
        x[(i, p + 1)] = e[i];
    }
    Ok(AugmentedDesign { x_hat: x, residual_fingerprint: fingerprint_f64(e) })
}

/// Hash a float sequence by bit pattern; binds residual columns to the fit
/// that produced them.
pub(crate) fn fingerprint_f64(values: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    values.len().hash(&mut h);
    for v in values {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Coefficient vector of the augmented model, ordered `(α₁,…,α_p, γ, ρ₁)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    beta: Vec<f64>,
}

impl ParamVector {
    pub fn new(beta: DVector<f64>) -> Result<ParamVector> {
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("beta", "non-finite coefficient"));
        }
        Ok(ParamVector { beta: beta.iter().copied().collect() })
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.beta
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta)
    }

    /// Coefficient on the endogenous regressor (second to last).
    pub fn gamma(&self) -> f64 {
        self.beta[self.beta.len() - 2]
    }

    /// Control-function coefficient ρ₁ (always last).
    pub fn rho1(&self) -> f64 {
        self.beta[self.beta.len() - 1]
    }
}

/// Validate raw tabular records against a schema and produce a [`Dataset`].
///
/// An intercept column is prepended automatically unless one of the listed
/// exogenous columns is already identically 1, in which case that column is
/// moved to position 0.
pub fn validate_dataset(table: &Table, schema: &Schema) -> Result<Dataset> {
    let col_index = |name: &str| -> Result<usize> {
        table
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn { name: name.to_string() })
    };
    let parse = |row: usize, col: usize| -> Result<f64> {
        let cell = table.rows[row].get(col).map(String::as_str).unwrap_or("");
        cell.parse::<f64>().map_err(|_| Error::NotNumeric {
            row,
            column: table.headers[col].clone(),
            value: cell.to_string(),
        })
    };

    let y_col = col_index(&schema.response)?;
    let w_col = col_index(&schema.endogenous)?;
    let z_col = col_index(&schema.instrument)?;
    if schema.exogenous.is_empty() {
        return Err(Error::invalid("schema.exogenous", "at least one exogenous column required"));
    }
    let exo_cols: Vec<usize> =
        schema.exogenous.iter().map(|n| col_index(n)).collect::<Result<_>>()?;

    let n = table.rows.len();
    let mut y = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut z1 = Vec::with_capacity(n);
    let mut exo: Vec<Vec<f64>> = vec![Vec::with_capacity(n); exo_cols.len()];
    for row in 0..n {
        y.push(parse(row, y_col)?);
        w.push(parse(row, w_col)?);
        z1.push(parse(row, z_col)?);
        for (k, &c) in exo_cols.iter().enumerate() {
            exo[k].push(parse(row, c)?);
        }
    }

    // Intercept handling: reuse an existing constant-one column or prepend one.
    let mut labels: Vec<String> = schema.exogenous.clone();
    let const_pos = exo.iter().position(|col| col.iter().all(|&v| v == 1.0));
    match const_pos {
        Some(k) => {
            let col = exo.remove(k);
            let lab = labels.remove(k);
            exo.insert(0, col);
            labels.insert(0, lab);
        }
        None => {
            exo.insert(0, vec![1.0; n]);
            labels.insert(0, "const".to_string());
        }
    }

    let p = exo.len();
    let mut x_rows = Vec::with_capacity(n * p);
    for i in 0..n {
        for col in &exo {
            x_rows.push(col[i]);
        }
    }
    let names = ColumnNames {
        response: schema.response.clone(),
        exogenous: labels,
        endogenous: schema.endogenous.clone(),
        instrument: schema.instrument.clone(),
    };
    Dataset::new(y, x_rows, p, w, z1, names)
}
