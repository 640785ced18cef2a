//! Instance data: the feature matrix that forms the finite metric space, the
//! per-instance metadata describing the upstream model's behaviour, and the
//! distance functions used for clustering.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether the upstream model predicts class labels or real values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[default]
    Classification,
    Regression,
}

/// Column roles for [`load_dataset`].
///
/// Every column of the file that is not claimed here becomes a feature, unless
/// `features` restricts the feature set explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub ground_truth: String,
    pub prediction: String,
    pub error_measure: String,
    /// Numeric metadata columns kept out of the feature matrix (they may still
    /// be used as filters).
    #[serde(default)]
    pub aux: Vec<String>,
    /// Binary metadata columns (`0`/`1`/`true`/`false`).
    #[serde(default)]
    pub flags: Vec<String>,
    /// The flag marking an instance as clean (uncorrupted). Must be listed in
    /// `flags`.
    #[serde(default)]
    pub clean_flag: Option<String>,
    /// Columns to drop entirely.
    #[serde(default)]
    pub ignore: Vec<String>,
    /// Explicit feature columns. `None` means all unclaimed columns.
    #[serde(default)]
    pub features: Option<Vec<String>>,
}

impl Schema {
    pub fn new(
        ground_truth: impl Into<String>,
        prediction: impl Into<String>,
        error_measure: impl Into<String>,
    ) -> Self {
        Schema {
            ground_truth: ground_truth.into(),
            prediction: prediction.into(),
            error_measure: error_measure.into(),
            aux: Vec::new(),
            flags: Vec::new(),
            clean_flag: None,
            ignore: Vec::new(),
            features: None,
        }
    }

    fn claimed(&self) -> Vec<&str> {
        let mut out = vec![
            self.ground_truth.as_str(),
            self.prediction.as_str(),
            self.error_measure.as_str(),
        ];
        out.extend(self.aux.iter().map(String::as_str));
        out.extend(self.flags.iter().map(String::as_str));
        out.extend(self.ignore.iter().map(String::as_str));
        out
    }
}

/// Metadata fields addressable by name (for filters and supervision).
pub const GROUND_TRUTH: &str = "ground_truth";
pub const PREDICTION: &str = "prediction";
pub const ERROR_MEASURE: &str = "error_measure";

/// Per-instance metadata.
///
/// Ground truth and prediction are stored as reals for both task kinds; for
/// classification they are validated to be integral class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Meta {
    pub task: TaskKind,
    pub ground_truth: Vec<f64>,
    pub prediction: Vec<f64>,
    pub error_measure: Vec<f64>,
    pub aux: BTreeMap<String, Vec<f64>>,
    pub flags: BTreeMap<String, Vec<bool>>,
    pub clean_flag: Option<String>,
}

impl Meta {
    pub fn new(
        task: TaskKind,
        ground_truth: Vec<f64>,
        prediction: Vec<f64>,
        error_measure: Vec<f64>,
    ) -> Self {
        Meta {
            task,
            ground_truth,
            prediction,
            error_measure,
            aux: BTreeMap::new(),
            flags: BTreeMap::new(),
            clean_flag: None,
        }
    }

    pub fn len(&self) -> usize {
        self.ground_truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ground_truth.is_empty()
    }

    /// Numeric view of a metadata field. Flags read as 0/1.
    pub fn field(&self, name: &str) -> Option<Vec<f64>> {
        match name {
            GROUND_TRUTH => Some(self.ground_truth.clone()),
            PREDICTION => Some(self.prediction.clone()),
            ERROR_MEASURE => Some(self.error_measure.clone()),
            _ => self.aux.get(name).cloned().or_else(|| {
                self.flags
                    .get(name)
                    .map(|f| f.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
            }),
        }
    }

    /// Names of every numeric field, in a stable order.
    pub fn field_names(&self) -> Vec<String> {
        let mut names = vec![
            GROUND_TRUTH.to_string(),
            PREDICTION.to_string(),
            ERROR_MEASURE.to_string(),
        ];
        names.extend(self.aux.keys().cloned());
        names.extend(self.flags.keys().cloned());
        names
    }

    pub fn label(&self, row: usize) -> i64 {
        self.ground_truth[row] as i64
    }

    pub fn residual(&self, row: usize) -> f64 {
        self.prediction[row] - self.ground_truth[row]
    }

    /// Whether the upstream prediction for `row` counts as correct. For
    /// regression a prediction is correct when `|residual| <= tolerance`.
    pub fn is_correct(&self, row: usize, tolerance: f64) -> bool {
        match self.task {
            TaskKind::Classification => self.prediction[row] == self.ground_truth[row],
            TaskKind::Regression => self.residual(row).abs() <= tolerance,
        }
    }

    /// `None` when no clean flag is configured.
    pub fn is_clean(&self, row: usize) -> Option<bool> {
        let name = self.clean_flag.as_ref()?;
        self.flags.get(name).map(|f| f[row])
    }

    pub fn subset(&self, rows: &[usize]) -> Meta {
        let pick = |v: &[f64]| rows.iter().map(|&r| v[r]).collect::<Vec<_>>();
        Meta {
            task: self.task,
            ground_truth: pick(&self.ground_truth),
            prediction: pick(&self.prediction),
            error_measure: pick(&self.error_measure),
            aux: self
                .aux
                .iter()
                .map(|(k, v)| (k.clone(), pick(v)))
                .collect(),
            flags: self
                .flags
                .iter()
                .map(|(k, v)| (k.clone(), rows.iter().map(|&r| v[r]).collect()))
                .collect(),
            clean_flag: self.clean_flag.clone(),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let check_len = |name: &str, len: usize| {
            if len != n {
                Err(Error::Schema(format!(
                    "metadata field `{name}` has {len} values for {n} rows"
                )))
            } else {
                Ok(())
            }
        };
        check_len(GROUND_TRUTH, self.ground_truth.len())?;
        check_len(PREDICTION, self.prediction.len())?;
        check_len(ERROR_MEASURE, self.error_measure.len())?;
        for (k, v) in &self.aux {
            check_len(k, v.len())?;
        }
        for (k, v) in &self.flags {
            check_len(k, v.len())?;
        }
        if let Some(clean) = &self.clean_flag {
            if !self.flags.contains_key(clean) {
                return Err(Error::Schema(format!(
                    "clean flag `{clean}` is not one of the flag columns"
                )));
            }
        }
        let numeric = [
            (GROUND_TRUTH, &self.ground_truth),
            (PREDICTION, &self.prediction),
            (ERROR_MEASURE, &self.error_measure),
        ];
        for (name, values) in numeric.into_iter().chain(self.aux.iter().map(|(k, v)| (k.as_str(), v))) {
            if let Some(row) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation {
                    row,
                    column: name.to_string(),
                    reason: "value is not finite".into(),
                });
            }
        }
        if self.task == TaskKind::Classification {
            for (name, values) in [(GROUND_TRUTH, &self.ground_truth), (PREDICTION, &self.prediction)] {
                if let Some(row) = values.iter().position(|v| v.fract() != 0.0) {
                    return Err(Error::Validation {
                        row,
                        column: name.to_string(),
                        reason: "classification labels must be integers".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// The finite metric space of instances.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    feature_names: Vec<String>,
    meta: Meta,
    origin: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset from row vectors.
    pub fn from_rows(feature_names: Vec<String>, rows: Vec<Vec<f64>>, meta: Meta) -> Result<Self> {
        let n_cols = feature_names.len();
        let n_rows = rows.len();
        let mut features = Vec::with_capacity(n_rows * n_cols);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::Schema(format!(
                    "row {i} has {} features, expected {n_cols}",
                    row.len()
                )));
            }
            features.extend(row);
        }
        Self::from_flat(feature_names, features, meta)
    }

    /// Builds a dataset from a row-major feature buffer.
    pub fn from_flat(feature_names: Vec<String>, features: Vec<f64>, meta: Meta) -> Result<Self> {
        let n_cols = feature_names.len();
        if n_cols == 0 {
            return Err(Error::Schema("dataset has no feature columns".into()));
        }
        if features.len() % n_cols != 0 {
            return Err(Error::Schema(format!(
                "feature buffer of length {} is not a multiple of {n_cols} columns",
                features.len()
            )));
        }
        let n_rows = features.len() / n_cols;
        if n_rows == 0 {
            return Err(Error::InsufficientData("dataset has no rows".into()));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation {
                row: pos / n_cols,
                column: feature_names[pos % n_cols].clone(),
                reason: "value is not finite".into(),
            });
        }
        meta.validate(n_rows)?;
        Ok(Dataset {
            features,
            n_rows,
            n_cols,
            feature_names,
            meta,
            origin: (0..n_rows).collect(),
        })
    }

    pub fn row_count(&self) -> usize {
        self.n_rows
    }

    pub fn col_count(&self) -> usize {
        self.n_cols
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.features[row * self.n_cols + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.value(r, col)).collect()
    }

    /// Row-major feature buffer.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.n_cols)
    }

    /// Row id of each row in the dataset this one was loaded as. Identity for
    /// a freshly loaded dataset.
    pub fn origin(&self) -> &[usize] {
        &self.origin
    }

    /// New dataset holding `rows` (in the given order), renumbered from 0.
    /// `origin()` of the result maps back to this dataset's origin ids.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        if rows.is_empty() {
            return Err(Error::InsufficientData("empty row subset".into()));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n_rows) {
            return Err(Error::Argument(format!("row {bad} out of range")));
        }
        let mut features = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        Ok(Dataset {
            features,
            n_rows: rows.len(),
            n_cols: self.n_cols,
            feature_names: self.feature_names.clone(),
            meta: self.meta.subset(rows),
            origin: rows.iter().map(|&r| self.origin[r]).collect(),
        })
    }

    /// Returns a copy with column `col` multiplied by `factor`.
    pub fn scale_column(&self, col: usize, factor: f64) -> Dataset {
        let mut out = self.clone();
        for r in 0..out.n_rows {
            out.features[r * out.n_cols + col] *= factor;
        }
        out
    }

    /// Writes the dataset as CSV using the column names from `schema`:
    /// features first, then ground truth, prediction, error measure, aux and
    /// flag columns.
    pub fn write_csv(&self, path: &Path, schema: &Schema) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self.feature_names.clone();
        header.push(schema.ground_truth.clone());
        header.push(schema.prediction.clone());
        header.push(schema.error_measure.clone());
        header.extend(self.meta.aux.keys().cloned());
        header.extend(self.meta.flags.keys().cloned());
        w.write_record(&header)?;
        let fmt_label = |v: f64| match self.meta.task {
            TaskKind::Classification => format!("{}", v as i64),
            TaskKind::Regression => format!("{v}"),
        };
        for r in 0..self.n_rows {
            let mut rec: Vec<String> = self.row(r).iter().map(|v| v.to_string()).collect();
            rec.push(fmt_label(self.meta.ground_truth[r]));
            rec.push(fmt_label(self.meta.prediction[r]));
            rec.push(self.meta.error_measure[r].to_string());
            rec.extend(self.meta.aux.values().map(|v| v[r].to_string()));
            rec.extend(
                self.meta
                    .flags
                    .values()
                    .map(|v| if v[r] { "1".to_string() } else { "0".to_string() }),
            );
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn parse_number(raw: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        value: raw.to_string(),
    })?;
    if !v.is_finite() {
        return Err(Error::Validation {
            row,
            column: column.to_string(),
            reason: format!("{raw:?} is not finite"),
        });
    }
    Ok(v)
}

fn parse_flag(raw: &str, row: usize, column: &str) -> Result<bool> {
    match raw.trim() {
        "1" | "true" | "TRUE" | "True" => Ok(true),
        "0" | "false" | "FALSE" | "False" => Ok(false),
        _ => Err(Error::Parse {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        }),
    }
}

/// Loads a headed, comma-separated file. Row ids follow file order.
pub fn load_dataset(path: &Path, schema: &Schema, task: TaskKind) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_dataset_from_reader(file, schema, task)
}

pub fn load_dataset_from_reader<R: std::io::Read>(
    reader: R,
    schema: &Schema,
    task: TaskKind,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();

    let mut seen = BTreeSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(Error::Schema(format!("duplicate column `{h}`")));
        }
    }
    let index_of = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("schema column `{name}` not found in file")))
    };

    let claimed = schema.claimed();
    let mut claimed_set = BTreeSet::new();
    for c in &claimed {
        if !claimed_set.insert(*c) {
            return Err(Error::Schema(format!("column `{c}` is assigned more than one role")));
        }
    }
    let gt_idx = index_of(&schema.ground_truth)?;
    let pred_idx = index_of(&schema.prediction)?;
    let err_idx = index_of(&schema.error_measure)?;
    let aux_idx = schema
        .aux
        .iter()
        .map(|n| index_of(n).map(|i| (n.clone(), i)))
        .collect::<Result<Vec<_>>>()?;
    let flag_idx = schema
        .flags
        .iter()
        .map(|n| index_of(n).map(|i| (n.clone(), i)))
        .collect::<Result<Vec<_>>>()?;
    for n in &schema.ignore {
        index_of(n)?;
    }
    if let Some(clean) = &schema.clean_flag {
        if !schema.flags.contains(clean) {
            return Err(Error::Schema(format!(
                "clean flag `{clean}` must also be listed in `flags`"
            )));
        }
    }

    let feature_idx: Vec<usize> = match &schema.features {
        Some(names) => names
            .iter()
            .map(|n| {
                if claimed_set.contains(n.as_str()) {
                    Err(Error::Schema(format!("feature column `{n}` also has a metadata role")))
                } else {
                    index_of(n)
                }
            })
            .collect::<Result<_>>()?,
        None => (0..header.len())
            .filter(|&i| !claimed_set.contains(header[i].as_str()))
            .collect(),
    };
    if feature_idx.is_empty() {
        return Err(Error::Schema("no feature columns remain after the schema".into()));
    }
    let feature_names: Vec<String> = feature_idx.iter().map(|&i| header[i].clone()).collect();

    let mut features = Vec::new();
    let mut gt = Vec::new();
    let mut pred = Vec::new();
    let mut err = Vec::new();
    let mut aux: Vec<Vec<f64>> = vec![Vec::new(); aux_idx.len()];
    let mut flags: Vec<Vec<bool>> = vec![Vec::new(); flag_idx.len()];

    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Schema(format!(
                "row {row} has {} cells, header has {}",
                rec.len(),
                header.len()
            )));
        }
        for &i in &feature_idx {
            features.push(parse_number(&rec[i], row, &header[i])?);
        }
        gt.push(parse_number(&rec[gt_idx], row, &header[gt_idx])?);
        pred.push(parse_number(&rec[pred_idx], row, &header[pred_idx])?);
        err.push(parse_number(&rec[err_idx], row, &header[err_idx])?);
        for (slot, (name, i)) in aux.iter_mut().zip(&aux_idx) {
            slot.push(parse_number(&rec[*i], row, name)?);
        }
        for (slot, (name, i)) in flags.iter_mut().zip(&flag_idx) {
            slot.push(parse_flag(&rec[*i], row, name)?);
        }
    }

    let mut meta = Meta::new(task, gt, pred, err);
    meta.aux = aux_idx.into_iter().map(|(n, _)| n).zip(aux).collect();
    meta.flags = flag_idx.into_iter().map(|(n, _)| n).zip(flags).collect();
    meta.clean_flag = schema.clean_flag.clone();
    Dataset::from_flat(feature_names, features, meta)
}

/// Population variance (divide by n) of every feature column.
pub fn column_variances(d: &Dataset) -> Result<Vec<f64>> {
    let n = d.row_count();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "column variances need at least 2 rows, got {n}"
        )));
    }
    let cols = d.col_count();
    let mut mean = vec![0.0; cols];
    for row in d.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; cols];
    for row in d.rows() {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let dv = v - m;
            *s += dv * dv;
        }
    }
    for s in &mut var {
        *s /= n as f64;
    }
    Ok(var)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    #[default]
    VarianceNormalizedEuclidean,
    Euclidean,
}

/// A distance on the rows of a dataset over a subset of its columns.
///
/// For the variance-normalized metric, each included column carries its
/// variance; zero-variance columns are listed in `excluded` instead.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSpec {
    kind: MetricKind,
    columns: Vec<usize>,
    variances: Vec<f64>,
    excluded: Vec<usize>,
    #[serde(skip)]
    scale: Vec<f64>,
}

impl MetricSpec {
    pub fn new(kind: MetricKind, columns: Vec<usize>, variances: Vec<f64>) -> Result<Self> {
        if kind == MetricKind::VarianceNormalizedEuclidean {
            if variances.len() != columns.len() {
                return Err(Error::Config(format!(
                    "{} variances for {} columns",
                    variances.len(),
                    columns.len()
                )));
            }
            if let Some(v) = variances.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
                return Err(Error::Config(format!("variance {v} is not a positive real")));
            }
        }
        let scale = match kind {
            MetricKind::VarianceNormalizedEuclidean => {
                variances.iter().map(|v| 1.0 / v.sqrt()).collect()
            }
            MetricKind::Euclidean => vec![1.0; columns.len()],
        };
        Ok(MetricSpec {
            kind,
            columns,
            variances,
            excluded: Vec::new(),
            scale,
        })
    }

    pub fn euclidean(d: &Dataset) -> Self {
        Self::new(MetricKind::Euclidean, (0..d.col_count()).collect(), Vec::new())
            .expect("euclidean metric is always valid")
    }

    /// Variance-normalized Euclidean metric over every column of `d` with
    /// nonzero population variance.
    pub fn variance_normalized(d: &Dataset) -> Result<Self> {
        let var = column_variances(d)?;
        let (columns, excluded): (Vec<usize>, Vec<usize>) =
            (0..d.col_count()).partition(|&c| var[c] > 0.0);
        if columns.is_empty() {
            return Err(Error::InsufficientData(
                "every feature column has zero variance".into(),
            ));
        }
        let variances = columns.iter().map(|&c| var[c]).collect();
        let mut m = Self::new(MetricKind::VarianceNormalizedEuclidean, columns, variances)?;
        m.excluded = excluded;
        Ok(m)
    }

    pub fn for_kind(kind: MetricKind, d: &Dataset) -> Result<Self> {
        match kind {
            MetricKind::Euclidean => Ok(Self::euclidean(d)),
            MetricKind::VarianceNormalizedEuclidean => Self::variance_normalized(d),
        }
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Zero-variance columns left out of a variance-normalized metric.
    pub fn excluded(&self) -> &[usize] {
        &self.excluded
    }

    pub fn validate(&self, d: &Dataset) -> Result<()> {
        if let Some(&c) = self.columns.iter().find(|&&c| c >= d.col_count()) {
            return Err(Error::Config(format!(
                "metric column {c} out of range for {} columns",
                d.col_count()
            )));
        }
        let expected = d.col_count() - self.excluded.len();
        if self.kind == MetricKind::VarianceNormalizedEuclidean && self.variances.len() != expected {
            return Err(Error::Config(format!(
                "metric has {} variances, dataset has {expected} non-excluded columns",
                self.variances.len()
            )));
        }
        Ok(())
    }

    pub fn distance(&self, d: &Dataset, i: usize, j: usize) -> Result<f64> {
        self.validate(d)?;
        if i >= d.row_count() || j >= d.row_count() {
            return Err(Error::Argument(format!("row id out of range: ({i}, {j})")));
        }
        let (a, b) = (d.row(i), d.row(j));
        let sq: f64 = self
            .columns
            .iter()
            .zip(&self.scale)
            .map(|(&c, s)| {
                let diff = (a[c] - b[c]) * s;
                diff * diff
            })
            .sum();
        Ok(sq.sqrt())
    }

    /// Rows mapped into the coordinates where this metric is plain Euclidean,
    /// packed row-major with `dim()` values per row.
    pub fn embed(&self, d: &Dataset, rows: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(rows.len() * self.columns.len());
        for &r in rows {
            let row = d.row(r);
            out.extend(self.columns.iter().zip(&self.scale).map(|(&c, s)| row[c] * s));
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }
}

/// Euclidean distance between two packed points.
#[inline]
pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}
