//! Real-valued filter functions on a dataset.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ERROR_MEASURE, GROUND_TRUTH};
use crate::error::{Error, Result};

const POWER_TOLERANCE: f64 = 1e-10;
const POWER_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterKind {
    /// Projection onto the first principal component.
    Pca1 {
        /// Divide each centered column by its standard deviation first.
        #[serde(default)]
        standardize: bool,
    },
    /// A metadata column: `error_measure`, `ground_truth`, `prediction`, or an
    /// aux/flag column by name.
    Meta { field: String },
    /// A feature column by index.
    Feature { index: usize },
    /// Values supplied directly, one per row.
    External { values: Vec<f64> },
    /// Values read from a single-column CSV aligned by row id. Must be
    /// resolved with [`FilterSpec::resolve`] before use.
    ExternalCsv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FilterKind,
}

impl FilterSpec {
    pub fn new(name: impl Into<String>, kind: FilterKind) -> Self {
        FilterSpec {
            name: name.into(),
            kind,
        }
    }

    pub fn pca1() -> Self {
        Self::new("pca_1", FilterKind::Pca1 { standardize: false })
    }

    pub fn meta(field: &str) -> Self {
        Self::new(
            field,
            FilterKind::Meta {
                field: field.to_string(),
            },
        )
    }

    pub fn error_measure() -> Self {
        Self::meta(ERROR_MEASURE)
    }

    /// Loads `ExternalCsv` values (relative paths resolve against `base`).
    pub fn resolve(&self, base: &Path) -> Result<FilterSpec> {
        match &self.kind {
            FilterKind::ExternalCsv { path } => {
                let path = if path.is_absolute() {
                    path.clone()
                } else {
                    base.join(path)
                };
                let values = read_single_column(&path)?;
                Ok(FilterSpec::new(self.name.clone(), FilterKind::External { values }))
            }
            _ => Ok(self.clone()),
        }
    }

    fn uses_error_measure(&self) -> bool {
        matches!(&self.kind, FilterKind::Meta { field } if field == ERROR_MEASURE)
    }
}

fn read_single_column(path: &Path) -> Result<Vec<f64>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let column = rdr
        .headers()?
        .get(0)
        .unwrap_or("external")
        .to_string();
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let raw = rec.get(0).unwrap_or("");
        let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
            row,
            column: column.clone(),
            value: raw.to_string(),
        })?;
        out.push(v);
    }
    Ok(out)
}

/// Filter values with their range `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterValues {
    pub values: Vec<f64>,
    pub range: (f64, f64),
}

impl FilterValues {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientData("filter has no values".into()));
        }
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation {
                row,
                column: "filter".into(),
                reason: "filter value is not finite".into(),
            });
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(FilterValues {
            values,
            range: (lo, hi),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// A constant filter (`min == max`).
    pub fn is_degenerate(&self) -> bool {
        self.range.0 == self.range.1
    }
}

pub fn compute_filter(d: &Dataset, spec: &FilterSpec) -> Result<FilterValues> {
    match &spec.kind {
        FilterKind::Pca1 { standardize } => principal_component_1_with(d, *standardize),
        FilterKind::Meta { field } => meta_filter(d, field),
        FilterKind::Feature { index } => {
            if *index >= d.col_count() {
                return Err(Error::Config(format!(
                    "filter `{}` names feature column {index}, dataset has {}",
                    spec.name,
                    d.col_count()
                )));
            }
            FilterValues::new(d.column(*index))
        }
        FilterKind::External { values } => {
            if values.len() != d.row_count() {
                return Err(Error::Config(format!(
                    "external filter `{}` has {} values for {} rows",
                    spec.name,
                    values.len(),
                    d.row_count()
                )));
            }
            FilterValues::new(values.clone())
        }
        FilterKind::ExternalCsv { path } => Err(Error::Config(format!(
            "external filter `{}` from {} was not resolved",
            spec.name,
            path.display()
        ))),
    }
}

/// Copies a metadata column. Categorical ground truth reads as its integer
/// label.
pub fn meta_filter(d: &Dataset, field: &str) -> Result<FilterValues> {
    let values = d
        .meta()
        .field(field)
        .ok_or_else(|| Error::Config(format!("unknown metadata field `{field}`")))?;
    FilterValues::new(values)
}

/// Projection of the mean-centered rows onto the leading covariance
/// eigenvector. The eigenvector's largest-magnitude coordinate is positive.
pub fn principal_component_1(d: &Dataset) -> Result<FilterValues> {
    principal_component_1_with(d, false)
}

/// The leading unit eigenvector of the covariance matrix (sign-normalized).
pub fn principal_axis(d: &Dataset, standardize: bool) -> Result<Vec<f64>> {
    Ok(Pca::fit(d, standardize)?.axis)
}

pub fn principal_component_1_with(d: &Dataset, standardize: bool) -> Result<FilterValues> {
    let pca = Pca::fit(d, standardize)?;
    let values = d.rows().map(|row| pca.project(row)).collect();
    FilterValues::new(values)
}

struct Pca {
    mean: Vec<f64>,
    inv_sd: Vec<f64>,
    axis: Vec<f64>,
}

impl Pca {
    fn fit(d: &Dataset, standardize: bool) -> Result<Pca> {
        let n = d.row_count();
        let p = d.col_count();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "principal component needs at least 2 rows, got {n}"
            )));
        }
        let mut mean = vec![0.0; p];
        for row in d.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let col_sums = mean.clone();
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut var = vec![0.0; p];
        for row in d.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let inv_sd: Vec<f64> = var
            .iter()
            .map(|s| {
                if standardize && *s > 0.0 {
                    1.0 / (s / n as f64).sqrt()
                } else if standardize {
                    0.0
                } else {
                    1.0
                }
            })
            .collect();
        if var.iter().all(|&s| s == 0.0) {
            return Err(Error::DegenerateFilter(
                "all rows are identical; the covariance is zero".into(),
            ));
        }

        let mut pca = Pca {
            mean,
            inv_sd,
            axis: Vec::new(),
        };

        let mut start = normalized(col_sums);
        let mut basis = 0;
        let axis = loop {
            let v = match start.take() {
                Some(v) => v,
                None => {
                    if basis == p {
                        return Err(Error::DegenerateFilter(
                            "power iteration found no direction of variance".into(),
                        ));
                    }
                    let mut e = vec![0.0; p];
                    e[basis] = 1.0;
                    basis += 1;
                    e
                }
            };
            if let Some(axis) = pca.power_iterate(d, v) {
                break axis;
            }
        };
        pca.axis = sign_normalized(axis);
        Ok(pca)
    }

    /// `C v` for the (optionally standardized) covariance, without forming C.
    fn cov_times(&self, d: &Dataset, v: &[f64]) -> Vec<f64> {
        let n = d.row_count() as f64;
        let mut out = vec![0.0; v.len()];
        let mut centered = vec![0.0; v.len()];
        for row in d.rows() {
            for (((c, x), m), s) in centered.iter_mut().zip(row).zip(&self.mean).zip(&self.inv_sd) {
                *c = (x - m) * s;
            }
            let t: f64 = centered.iter().zip(v).map(|(a, b)| a * b).sum();
            for (o, c) in out.iter_mut().zip(&centered) {
                *o += t * c;
            }
        }
        for o in &mut out {
            *o /= n;
        }
        out
    }

    /// Returns `None` if the start vector lies in the null space.
    fn power_iterate(&self, d: &Dataset, mut v: Vec<f64>) -> Option<Vec<f64>> {
        for _ in 0..POWER_MAX_ITER {
            let next = normalized(self.cov_times(d, &v))?;
            let delta: f64 = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            v = next;
            if delta < POWER_TOLERANCE {
                break;
            }
        }
        Some(v)
    }

    fn project(&self, row: &[f64]) -> f64 {
        row.iter()
            .zip(&self.mean)
            .zip(&self.inv_sd)
            .zip(&self.axis)
            .map(|(((x, m), s), a)| (x - m) * s * a)
            .sum()
    }
}

fn normalized(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    for x in &mut v {
        *x /= norm;
    }
    Some(v)
}

/// Flips `v` so that its largest-magnitude coordinate (lowest index on ties)
/// is positive.
pub fn sign_normalized(mut v: Vec<f64>) -> Vec<f64> {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        for x in &mut v {
            *x = -*x;
        }
    }
    v
}

/// Raised when a filter set lacks a prediction-error filter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterWarning(pub String);

impl std::fmt::Display for FilterWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Checks that some filter is the prediction error. Without it the extracted
/// groups are not guaranteed to be homogeneous in prediction failure.
pub fn validate_error_filters(specs: &[FilterSpec]) -> Option<FilterWarning> {
    if specs.is_empty() {
        return Some(FilterWarning(
            "no filters configured; no prediction-error filter".into(),
        ));
    }
    if specs.iter().any(FilterSpec::uses_error_measure) {
        None
    } else {
        Some(FilterWarning(format!(
            "no prediction-error filter (none of the filters uses `{ERROR_MEASURE}`)"
        )))
    }
}

/// Whether a filter set separates the graph by ground truth.
pub fn splits_on_ground_truth(specs: &[FilterSpec]) -> bool {
    specs
        .iter()
        .any(|s| matches!(&s.kind, FilterKind::Meta { field } if field == GROUND_TRUTH))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Meta, TaskKind};

    fn ds(rows: Vec<Vec<f64>>) -> Dataset {
        let n = rows.len();
        let p = rows[0].len();
        let gt = (0..n).map(|i| (i % 10) as f64).collect();
        let meta = Meta::new(TaskKind::Classification, gt, vec![0.0; n], vec![0.5; n]);
        Dataset::from_rows((0..p).map(|c| format!("x{c}")).collect(), rows, meta).unwrap()
    }

    #[test]
    fn pca_on_a_line() {
        let d = ds(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]]);
        let f = principal_component_1(&d).unwrap();
        let r2 = 2f64.sqrt();
        for (got, want) in f.values.iter().zip([-r2, 0.0, r2]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert!((f.range.0 + r2).abs() < 1e-9 && (f.range.1 - r2).abs() < 1e-9);
    }

    #[test]
    fn pca_single_nonconstant_column_is_centering() {
        let d = ds(vec![vec![5.0, 1.0], vec![5.0, 4.0], vec![5.0, 7.0], vec![5.0, 0.0]]);
        let f = principal_component_1(&d).unwrap();
        assert_eq!(f.values, vec![-2.0, 1.0, 4.0, -3.0]);
    }

    #[test]
    fn pca_centered_data_falls_back_to_basis() {
        // Column sums are zero, so the start vector falls back to e_0.
        let d = ds(vec![vec![-1.0, -2.0], vec![1.0, 2.0]]);
        let axis = principal_axis(&d, false).unwrap();
        let s5 = 5f64.sqrt();
        assert!((axis[0] - 1.0 / s5).abs() < 1e-9);
        assert!((axis[1] - 2.0 / s5).abs() < 1e-9);
    }

    #[test]
    fn pca_start_in_null_space() {
        // Column sums point along e_1, which has zero variance here.
        let d = ds(vec![vec![-1.0, 3.0], vec![1.0, 3.0]]);
        let f = principal_component_1(&d).unwrap();
        assert_eq!(f.values, vec![-1.0, 1.0]);
    }

    #[test]
    fn pca_degenerate() {
        let d = ds(vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]);
        assert!(matches!(
            principal_component_1(&d),
            Err(Error::DegenerateFilter(_))
        ));
    }

    #[test]
    fn standardized_pca_ignores_column_scale() {
        let d = ds(vec![vec![0.0, 0.0], vec![1.0, 100.0], vec![2.0, 200.0], vec![0.5, 30.0]]);
        let a = principal_axis(&d, true).unwrap();
        let b = principal_axis(&d.scale_column(1, 0.01), true).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn meta_filters() {
        let d = ds(vec![vec![0.0]; 12]);
        let e = meta_filter(&d, "error_measure").unwrap();
        assert_eq!(e.values, d.meta().error_measure);
        assert!(e.is_degenerate());
        assert_eq!(e.range, (0.5, 0.5));
        let g = meta_filter(&d, "ground_truth").unwrap();
        assert_eq!(g.range, (0.0, 9.0));
        assert!(g.values.iter().all(|v| v.fract() == 0.0));
        assert!(matches!(meta_filter(&d, "nope"), Err(Error::Config(_))));
    }

    #[test]
    fn error_filter_validation() {
        assert_eq!(
            validate_error_filters(&[FilterSpec::pca1(), FilterSpec::error_measure()]),
            None
        );
        let w = validate_error_filters(&[FilterSpec::pca1()]).unwrap();
        assert!(w.0.contains("no prediction-error filter"));
        assert!(validate_error_filters(&[]).is_some());
    }

    #[test]
    fn external_length_is_checked() {
        let d = ds(vec![vec![0.0]; 3]);
        let spec = FilterSpec::new("ext", FilterKind::External { values: vec![1.0, 2.0] });
        assert!(matches!(compute_filter(&d, &spec), Err(Error::Config(_))));
        let spec = FilterSpec::new("ext", FilterKind::External { values: vec![1.0, 2.0, 3.0] });
        assert_eq!(compute_filter(&d, &spec).unwrap().range, (1.0, 3.0));
    }

    #[test]
    fn filter_spec_serde_shape() {
        let spec: FilterSpec =
            serde_json::from_str(r#"{"name":"err","kind":"meta","field":"error_measure"}"#).unwrap();
        assert_eq!(
            spec,
            FilterSpec::new("err", FilterKind::Meta { field: "error_measure".into() })
        );
        let spec: FilterSpec = serde_json::from_str(r#"{"name":"pc","kind":"pca1"}"#).unwrap();
        assert_eq!(spec.kind, FilterKind::Pca1 { standardize: false });
    }
}
