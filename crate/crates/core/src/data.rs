//! Columnar datasets, CSV ingestion, rough imputation, response scaling,
//! splitting and noise injection.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// A single cell of an observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Missing,
    Number(f64),
    Level(u32),
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

/// Feature names, types and level tables of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureSchema>,
}

impl Schema {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Check that an observation has one cell per feature with matching types.
    pub fn check_observation(&self, obs: &[Value]) -> Result<()> {
        if obs.len() != self.features.len() {
            return Err(Error::Schema(format!(
                "observation has {} values, schema has {} features",
                obs.len(),
                self.features.len()
            )));
        }
        for (f, v) in self.features.iter().zip(obs) {
            match (&f.kind, v) {
                (_, Value::Missing) => {}
                (FeatureKind::Numeric, Value::Number(_)) => {}
                (FeatureKind::Categorical { levels }, Value::Level(l)) if (*l as usize) < levels.len() => {}
                _ => {
                    return Err(Error::Schema(format!(
                        "value {v:?} does not match feature {:?}",
                        f.name
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    /// Missing cells hold `NaN` until imputation.
    Numeric(Vec<f64>),
    /// Missing cells hold level 0 until imputation.
    Categorical { codes: Vec<u32>, levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
    pub missing: Vec<bool>,
}

impl Column {
    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Self {
        let missing = values.iter().map(|v| v.is_nan()).collect();
        Column { name: name.into(), data: ColumnData::Numeric(values), missing }
    }

    /// Categorical column from optional level indices (`None` = missing).
    pub fn categorical(name: impl Into<String>, codes: Vec<Option<u32>>, levels: Vec<String>) -> Self {
        let missing = codes.iter().map(Option::is_none).collect();
        let codes = codes.into_iter().map(|c| c.unwrap_or(0)).collect();
        Column { name: name.into(), data: ColumnData::Categorical { codes, levels }, missing }
    }

    pub fn len(&self) -> usize {
        self.missing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn kind(&self) -> FeatureKind {
        match &self.data {
            ColumnData::Numeric(_) => FeatureKind::Numeric,
            ColumnData::Categorical { levels, .. } => FeatureKind::Categorical { levels: levels.clone() },
        }
    }

    fn raw(&self, i: usize) -> Value {
        match &self.data {
            ColumnData::Numeric(v) => Value::Number(v[i]),
            ColumnData::Categorical { codes, .. } => Value::Level(codes[i]),
        }
    }

    fn take(&self, rows: &[usize]) -> Column {
        let data = match &self.data {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&i| v[i]).collect()),
            ColumnData::Categorical { codes, levels } => ColumnData::Categorical {
                codes: rows.iter().map(|&i| codes[i]).collect(),
                levels: levels.clone(),
            },
        };
        Column { name: self.name.clone(), data, missing: rows.iter().map(|&i| self.missing[i]).collect() }
    }
}

/// Columnar feature table with a missing-value mask and an optional response.
///
/// After [`impute_rough`] the mask is kept for reference but every cell reads
/// as observed.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    response: Option<Vec<f64>>,
    response_name: Option<String>,
    n: usize,
    imputed: bool,
}

impl Dataset {
    pub fn new(columns: Vec<Column>, response: Option<Vec<f64>>) -> Result<Self> {
        let n = match (&response, columns.first()) {
            (Some(y), _) => y.len(),
            (None, Some(c)) => c.len(),
            (None, None) => 0,
        };
        for c in &columns {
            if c.len() != n {
                return Err(Error::Data(format!("column {:?} has {} rows, expected {n}", c.name, c.len())));
            }
            match &c.data {
                ColumnData::Numeric(v) => {
                    if v.len() != n {
                        return Err(Error::Data(format!("column {:?} has a malformed value vector", c.name)));
                    }
                    if let Some(i) = (0..n).find(|&i| !c.missing[i] && !v[i].is_finite()) {
                        return Err(Error::Data(format!("column {:?} row {i}: non-finite value", c.name)));
                    }
                }
                ColumnData::Categorical { codes, levels } => {
                    if codes.len() != n {
                        return Err(Error::Data(format!("column {:?} has a malformed code vector", c.name)));
                    }
                    if let Some(i) = (0..n).find(|&i| !c.missing[i] && codes[i] as usize >= levels.len()) {
                        return Err(Error::Data(format!("column {:?} row {i}: level index out of range", c.name)));
                    }
                }
            }
        }
        if let Some(y) = &response {
            if let Some(i) = y.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!("response row {i} is missing or non-finite")));
            }
        }
        Ok(Dataset { columns, response, response_name: None, n, imputed: false })
    }

    pub fn with_response_name(mut self, name: impl Into<String>) -> Self {
        self.response_name = Some(name.into());
        self
    }

    /// Numeric dataset from row-major features (`NaN` = missing).
    pub fn from_rows(rows: &[Vec<f64>], response: Option<Vec<f64>>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Data("ragged feature rows".into()));
        }
        let columns = (0..p)
            .map(|j| Column::numeric(format!("x{}", j + 1), rows.iter().map(|r| r[j]).collect()))
            .collect();
        Dataset::new(columns, response)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn response(&self) -> Option<&[f64]> {
        self.response.as_deref()
    }

    pub fn response_name(&self) -> Option<&str> {
        self.response_name.as_deref()
    }

    pub fn is_imputed(&self) -> bool {
        self.imputed
    }

    /// Original missing-value mask of cell `(row, col)`.
    pub fn was_missing(&self, row: usize, col: usize) -> bool {
        self.columns[col].missing[row]
    }

    pub fn value(&self, row: usize, col: usize) -> Value {
        let c = &self.columns[col];
        if c.missing[row] && !self.imputed {
            Value::Missing
        } else {
            c.raw(row)
        }
    }

    pub fn row(&self, row: usize) -> Vec<Value> {
        (0..self.p()).map(|j| self.value(row, j)).collect()
    }

    pub fn schema(&self) -> Schema {
        Schema {
            features: self.columns.iter().map(|c| FeatureSchema { name: c.name.clone(), kind: c.kind() }).collect(),
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
            response: self.response.as_ref().map(|y| rows.iter().map(|&i| y[i]).collect()),
            response_name: self.response_name.clone(),
            n: rows.len(),
            imputed: self.imputed,
        }
    }

    pub fn with_response(&self, response: Vec<f64>) -> Result<Dataset> {
        if response.len() != self.n {
            return Err(Error::Data(format!("response has {} rows, expected {}", response.len(), self.n)));
        }
        if response.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("response contains missing or non-finite values".into()));
        }
        Ok(Dataset { response: Some(response), ..self.clone() })
    }

    /// Whether the dataset's feature layout matches `schema`.
    pub fn check_schema(&self, schema: &Schema) -> Result<()> {
        let own = self.schema();
        if own.len() != schema.len() {
            return Err(Error::Schema(format!("dataset has {} features, model expects {}", own.len(), schema.len())));
        }
        for (a, b) in own.features.iter().zip(&schema.features) {
            if a != b {
                return Err(Error::Schema(format!("feature {:?} does not match model feature {:?}", a.name, b.name)));
            }
        }
        Ok(())
    }
}

/// Per-column type override for CSV loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnHint {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub na_string: String,
    pub hints: HashMap<String, ColumnHint>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions { na_string: "NA".to_string(), hints: HashMap::new() }
    }
}

struct RawTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_raw<R: Read>(reader: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(rec.iter().map(|s| s.trim().to_string()).collect());
    }
    Ok(RawTable { header, rows })
}

fn is_na(cell: &str, na: &str) -> bool {
    cell.is_empty() || cell == na
}

fn numeric_column(name: &str, cells: &[&str], na: &str) -> Result<Column> {
    let mut values = Vec::with_capacity(cells.len());
    for (i, c) in cells.iter().enumerate() {
        if is_na(c, na) {
            values.push(f64::NAN);
        } else {
            let v: f64 = c
                .parse()
                .map_err(|_| Error::Data(format!("column {name:?} row {i}: {c:?} is not a number")))?;
            if !v.is_finite() {
                return Err(Error::Data(format!("column {name:?} row {i}: non-finite value {c:?}")));
            }
            values.push(v);
        }
    }
    Ok(Column::numeric(name, values))
}

fn categorical_column(name: &str, cells: &[&str], na: &str) -> Column {
    let mut levels: Vec<String> = Vec::new();
    let mut index: HashMap<&str, u32> = HashMap::new();
    let codes = cells
        .iter()
        .map(|c| {
            if is_na(c, na) {
                None
            } else {
                Some(*index.entry(c).or_insert_with(|| {
                    levels.push(c.to_string());
                    (levels.len() - 1) as u32
                }))
            }
        })
        .collect();
    Column::categorical(name, codes, levels)
}

fn parse_response(name: &str, cells: &[&str], na: &str) -> Result<Vec<f64>> {
    cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if is_na(c, na) {
                return Err(Error::Data(format!("response {name:?} is missing in row {i}")));
            }
            c.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Data(format!("response {name:?} row {i}: {c:?} is not a number")))
        })
        .collect()
}

impl RawTable {
    fn cells(&self, j: usize) -> Result<Vec<&str>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.get(j)
                    .map(String::as_str)
                    .ok_or_else(|| Error::Data(format!("row {i} has {} fields, header has {}", r.len(), self.header.len())))
            })
            .collect()
    }
}

/// Load a training table; see [`read_csv`].
pub fn load_csv(path: impl AsRef<Path>, target: &str, opts: &CsvOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, target, opts)
}

/// Parse a CSV table with a header row. Columns whose non-missing cells all
/// parse as numbers become numeric, everything else categorical, unless a hint
/// says otherwise. Empty cells and `opts.na_string` are missing.
pub fn read_csv<R: Read>(reader: R, target: &str, opts: &CsvOptions) -> Result<Dataset> {
    let raw = read_raw(reader)?;
    let target_idx = raw
        .header
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| Error::Data(format!("target column {target:?} not found")))?;
    if raw.header.len() < 2 {
        return Err(Error::Data("need at least one feature column besides the target".into()));
    }
    if raw.rows.is_empty() {
        return Err(Error::Data("the table has no rows".into()));
    }
    let na = opts.na_string.as_str();
    let response = parse_response(target, &raw.cells(target_idx)?, na)?;
    let mut columns = Vec::new();
    for (j, name) in raw.header.iter().enumerate() {
        if j == target_idx {
            continue;
        }
        let cells = raw.cells(j)?;
        let col = match opts.hints.get(name) {
            Some(ColumnHint::Numeric) => numeric_column(name, &cells, na)?,
            Some(ColumnHint::Categorical) => categorical_column(name, &cells, na),
            None => {
                let all_numeric = cells.iter().all(|c| is_na(c, na) || c.parse::<f64>().is_ok_and(f64::is_finite));
                if all_numeric {
                    numeric_column(name, &cells, na)?
                } else {
                    categorical_column(name, &cells, na)
                }
            }
        };
        columns.push(col);
    }
    Ok(Dataset::new(columns, Some(response))?.with_response_name(target))
}

/// Parse a table against a fitted model's schema. Feature columns are matched
/// by name; extra columns are ignored. Categorical levels unseen during
/// training read as missing. The target column, when named and present, is
/// parsed as the response.
pub fn read_csv_with_schema<R: Read>(reader: R, schema: &Schema, target: Option<&str>, na: &str) -> Result<Dataset> {
    let raw = read_raw(reader)?;
    let mut columns = Vec::with_capacity(schema.len());
    for f in &schema.features {
        let j = raw
            .header
            .iter()
            .position(|h| *h == f.name)
            .ok_or_else(|| Error::Schema(format!("feature column {:?} not found", f.name)))?;
        let cells = raw.cells(j)?;
        let col = match &f.kind {
            FeatureKind::Numeric => numeric_column(&f.name, &cells, na).map_err(|e| Error::Schema(e.to_string()))?,
            FeatureKind::Categorical { levels } => {
                let codes = cells
                    .iter()
                    .map(|c| if is_na(c, na) { None } else { levels.iter().position(|l| l == c).map(|l| l as u32) })
                    .collect();
                Column::categorical(&f.name, codes, levels.clone())
            }
        };
        columns.push(col);
    }
    let response = match target.and_then(|t| raw.header.iter().position(|h| h == t)) {
        Some(j) => Some(parse_response(target.unwrap_or_default(), &raw.cells(j)?, na)?),
        None => None,
    };
    let n = raw.rows.len();
    let mut ds = Dataset::new(columns, response)?;
    ds.n = n;
    Ok(ds)
}

pub fn load_csv_with_schema(path: impl AsRef<Path>, schema: &Schema, target: Option<&str>, na: &str) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv_with_schema(file, schema, target, na)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Indices of feature columns without a single observed value.
pub fn all_missing_columns(ds: &Dataset) -> Vec<usize> {
    ds.columns.iter().enumerate().filter(|(_, c)| c.missing.iter().all(|&m| m)).map(|(j, _)| j).collect()
}

/// Replace missing numeric cells by the column median and missing categorical
/// cells by the most frequent level (ties to the lowest level index). Columns
/// with no observed value are filled with 0 / level 0. The missing mask is
/// kept.
pub fn impute_rough(ds: &Dataset) -> Dataset {
    let mut out = ds.clone();
    for col in &mut out.columns {
        if !col.missing.iter().any(|&m| m) {
            continue;
        }
        match &mut col.data {
            ColumnData::Numeric(values) => {
                let mut observed: Vec<f64> =
                    values.iter().zip(&col.missing).filter(|(_, &m)| !m).map(|(&v, _)| v).collect();
                let fill = if observed.is_empty() { 0.0 } else { median(&mut observed) };
                for (v, _) in values.iter_mut().zip(&col.missing).filter(|(_, &m)| m) {
                    *v = fill;
                }
            }
            ColumnData::Categorical { codes, levels } => {
                let mut counts = vec![0usize; levels.len().max(1)];
                for (&c, _) in codes.iter().zip(&col.missing).filter(|(_, &m)| !m) {
                    counts[c as usize] += 1;
                }
                // max_by_key keeps the last maximum; scan in reverse for the lowest index.
                let fill = counts.iter().enumerate().rev().max_by_key(|(_, &c)| c).map_or(0, |(l, _)| l as u32);
                for (c, _) in codes.iter_mut().zip(&col.missing).filter(|(_, &m)| m) {
                    *c = fill;
                }
            }
        }
    }
    out.imputed = true;
    out
}

/// Affine response standardization `(y - center) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseScaler {
    pub center: f64,
    pub scale: f64,
}

impl ResponseScaler {
    pub const IDENTITY: ResponseScaler = ResponseScaler { center: 0.0, scale: 1.0 };

    pub fn transform(&self, y: f64) -> f64 {
        (y - self.center) / self.scale
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.scale + self.center
    }
}

pub fn mean(y: &[f64]) -> f64 {
    y.iter().sum::<f64>() / y.len() as f64
}

/// Sample variance with the `n - 1` divisor.
pub fn sample_variance(y: &[f64]) -> f64 {
    let m = mean(y);
    y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (y.len() as f64 - 1.0)
}

/// Center by the mean and scale by the sample standard deviation. A constant
/// vector maps to zeros with scale 1.
pub fn standardize_response(y: &[f64]) -> Result<(Vec<f64>, ResponseScaler)> {
    if y.len() < 2 {
        return Err(Error::Data(format!("need at least 2 responses to standardize, got {}", y.len())));
    }
    let center = mean(y);
    let var = sample_variance(y);
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    let scaler = ResponseScaler { center, scale };
    let z = if var > 0.0 { y.iter().map(|&v| scaler.transform(v)).collect() } else { vec![0.0; y.len()] };
    Ok((z, scaler))
}

/// Shuffle the rows with the seeded generator; the first `ceil(n/2)` rows of
/// the permutation train, the rest test.
pub fn split_half(ds: &Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
    if ds.n() < 4 {
        return Err(Error::Data(format!("need at least 4 rows to split, got {}", ds.n())));
    }
    let (train, test) = split_indices(ds.n(), seed);
    Ok((ds.subset(&train), ds.subset(&test)))
}

pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::rng_from_seed(seed));
    let test = perm.split_off(n.div_ceil(2));
    (perm, test)
}

/// Add i.i.d. Gaussian noise with variance `variance_factor * Var(y)`.
pub fn add_noise(y: &[f64], variance_factor: f64, seed: u64) -> Result<Vec<f64>> {
    if !(variance_factor >= 0.0) {
        return Err(Error::Config(format!("noise variance factor must be >= 0, got {variance_factor}")));
    }
    if y.len() < 2 || variance_factor == 0.0 {
        return Ok(y.to_vec());
    }
    let var = sample_variance(y);
    if var <= 0.0 {
        return Ok(y.to_vec());
    }
    let normal = Normal::new(0.0, (variance_factor * var).sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = rng::rng_from_seed(seed);
    Ok(y.iter().map(|&v| v + normal.sample(&mut rng)).collect())
}
