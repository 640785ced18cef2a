use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::correction::{ClassifierKind, ClassifierSpec};
use crate::dataset::{MetricKind, Schema, TaskKind, ERROR_MEASURE};
use crate::error::{Error, Result};
use crate::failure::{Reference, SelectionParams, DEFAULT_BASELINE_ACCURACY, DEFAULT_MIN_SIZE};
use crate::filters::FilterSpec;
use crate::mapper::{CoverSpec, DEFAULT_BINS, DEFAULT_MAX_CELL_SIZE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// CSV file; relative paths resolve against the config file's directory.
    pub path: PathBuf,
    pub schema: Schema,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    #[serde(default)]
    pub kind: MetricKind,
}

/// `#[serde(flatten)]` disables `deny_unknown_fields`, so filter tables are
/// checked by hand.
fn check_filter_keys(raw: &toml::Table) -> Result<()> {
    let Some(toml::Value::Array(filters)) = raw.get("filters") else {
        return Ok(());
    };
    for (i, f) in filters.iter().enumerate() {
        let Some(t) = f.as_table() else { continue };
        let specific: &[&str] = match t.get("kind").and_then(toml::Value::as_str) {
            Some("pca1") => &["standardize"],
            Some("meta") => &["field"],
            Some("feature") => &["index"],
            Some("external") => &["values"],
            Some("external_csv") => &["path"],
            _ => continue,
        };
        for key in t.keys() {
            let known = ["name", "kind", "n_intervals", "overlap"].contains(&key.as_str())
                || specific.contains(&key.as_str());
            if !known {
                return Err(Error::Config(format!("filters[{i}]: unknown key `{key}`")));
            }
        }
    }
    Ok(())
}

/// A filter with its cover resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterEntry {
    #[serde(flatten)]
    pub filter: FilterSpec,
    pub n_intervals: usize,
    pub overlap: f64,
}

impl FilterEntry {
    pub fn cover(&self) -> CoverSpec {
        CoverSpec::new(self.n_intervals, self.overlap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapperConfig {
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_max_cell")]
    pub max_cell_size: usize,
}

impl Default for MapperConfig {
    fn default() -> Self {
        MapperConfig {
            bins: DEFAULT_BINS,
            max_cell_size: DEFAULT_MAX_CELL_SIZE,
        }
    }
}

fn default_bins() -> usize {
    DEFAULT_BINS
}
fn default_max_cell() -> usize {
    DEFAULT_MAX_CELL_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionConfig {
    #[serde(default = "default_min_size")]
    pub min_size: usize,
    #[serde(default = "default_baseline")]
    pub baseline_accuracy: f64,
    /// Regression only: largest absolute residual that counts as correct.
    #[serde(default)]
    pub tolerance: f64,
    /// Metadata field whose node means weight the graph edges.
    #[serde(default = "default_supervision")]
    pub supervision: String,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            min_size: DEFAULT_MIN_SIZE,
            baseline_accuracy: DEFAULT_BASELINE_ACCURACY,
            tolerance: 0.0,
            supervision: default_supervision(),
        }
    }
}

impl ExtractionConfig {
    pub fn selection(&self) -> SelectionParams {
        SelectionParams {
            min_size: self.min_size,
            baseline_accuracy: self.baseline_accuracy,
            tolerance: self.tolerance,
        }
    }
}

fn default_min_size() -> usize {
    DEFAULT_MIN_SIZE
}
fn default_baseline() -> f64 {
    DEFAULT_BASELINE_ACCURACY
}
fn default_supervision() -> String {
    ERROR_MEASURE.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_folds")]
    pub folds: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { folds: 5 }
    }
}

fn default_folds() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    #[serde(default = "default_reference")]
    pub reference: Reference,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig {
            top_n: default_top_n(),
            reference: default_reference(),
        }
    }
}

fn default_top_n() -> usize {
    10
}
fn default_reference() -> Reference {
    Reference::Rest
}

fn default_classifier() -> ClassifierSpec {
    ClassifierSpec::new(ClassifierKind::LinearSvm)
}

/// Everything a run depends on. Loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub task: TaskKind,
    /// Output directory, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub metric: MetricConfig,
    pub filters: Vec<FilterEntry>,
    #[serde(default)]
    pub mapper: MapperConfig,
    #[serde(default)]
    pub extraction: ExtractionConfig,
    #[serde(default = "default_classifier")]
    pub classifier: ClassifierSpec,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub diagnose: DiagnoseConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: toml::Table = toml::from_str(text)?;
        check_filter_keys(&raw)?;
        let cfg: PipelineConfig = raw.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.filters.is_empty() {
            return Err(Error::Config("at least one filter is required".into()));
        }
        for f in &self.filters {
            f.cover().validate()?;
        }
        if self.mapper.bins == 0 {
            return Err(Error::Config("mapper.bins must be positive".into()));
        }
        if self.split.folds < 2 {
            return Err(Error::Config("split.folds must be at least 2".into()));
        }
        if self.diagnose.top_n == 0 {
            return Err(Error::Config("diagnose.top_n must be positive".into()));
        }
        if let Reference::Mode(_) = self.diagnose.reference {
            return Err(Error::Config(
                "diagnose.reference must be `dataset` or `rest` in a config".into(),
            ));
        }
        self.classifier.validate()
    }

    pub fn covers(&self) -> Vec<CoverSpec> {
        self.filters.iter().map(FilterEntry::cover).collect()
    }

    pub fn filter_specs(&self) -> Vec<FilterSpec> {
        self.filters.iter().map(|f| f.filter.clone()).collect()
    }

    /// Hex SHA-256 of the config's canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Makes relative paths absolute against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.path);
        if let Some(out) = &mut self.output {
            fix(out);
        }
        for f in &mut self.filters {
            if let crate::filters::FilterKind::ExternalCsv { path } = &mut f.filter.kind {
                fix(path);
            }
        }
    }
}
