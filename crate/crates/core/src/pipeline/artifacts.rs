//! JSON documents written by a run. Every document carries the hash of the
//! config that produced it.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::correction::{BiasProfile, EnsembleMetrics, SkippedMode};
use crate::dataset::{MetricKind, MetricSpec, TaskKind};
use crate::error::{Error, Result};
use crate::failure::{FailureMode, KsReport, Provenance, SelectionParams};
use crate::mapper::MapperGraph;

use super::config::PipelineConfig;

pub const GRAPH_FILE: &str = "graph.json";
pub const MODES_FILE: &str = "modes.json";
pub const SELECTIONS_FILE: &str = "selections.json";
pub const ENSEMBLE_FILE: &str = "ensemble.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const REPORT_FILE: &str = "report.json";
pub const TIMINGS_FILE: &str = "timings.json";
/// Present while a run is in progress or after it failed; artifacts next to
/// it must not be trusted.
pub const STALE_MARKER: &str = "STALE";

/// Envelope of every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub kind: String,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold: Option<usize>,
    pub data: T,
}

impl<T> Artifact<T> {
    pub fn new(kind: &str, config_hash: &str, fold: Option<usize>, data: T) -> Self {
        Artifact {
            kind: kind.to_string(),
            config_hash: config_hash.to_string(),
            fold,
            data,
        }
    }
}

pub fn fold_dir(out: &Path, fold: usize) -> PathBuf {
    out.join(format!("fold-{fold}"))
}

/// Writes via a temporary file and rename, so readers never see a partial
/// document.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Reads an artifact and checks its kind and, when given, its config hash.
pub fn read_artifact<T: DeserializeOwned>(path: &Path, kind: &str, hash: Option<&str>) -> Result<Artifact<T>> {
    let a: Artifact<T> = read_json(path)?;
    if a.kind != kind {
        return Err(Error::Artifact(format!(
            "{} holds a `{}` document, expected `{kind}`",
            path.display(),
            a.kind
        )));
    }
    if let Some(h) = hash {
        if a.config_hash != h {
            return Err(Error::Artifact(format!(
                "{} was produced by config {}, expected {h}",
                path.display(),
                a.config_hash
            )));
        }
    }
    Ok(a)
}

pub fn mark_stale(dir: &Path, reason: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join(STALE_MARKER);
    std::fs::write(&p, format!("{reason}\n")).map_err(|e| Error::io(&p, e))
}

pub fn clear_stale(dir: &Path) -> Result<()> {
    let p = dir.join(STALE_MARKER);
    match std::fs::remove_file(&p) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(Error::io(p, e)),
    }
}

pub fn is_stale(dir: &Path) -> bool {
    dir.join(STALE_MARKER).exists()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub kind: MetricKind,
    pub columns: Vec<usize>,
    pub variances: Vec<f64>,
    /// Zero-variance columns left out of the distance.
    pub excluded: Vec<usize>,
}

impl From<&MetricSpec> for MetricSummary {
    fn from(m: &MetricSpec) -> Self {
        MetricSummary {
            kind: m.kind(),
            columns: m.columns().to_vec(),
            variances: m.variances().to_vec(),
            excluded: m.excluded().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub name: String,
    pub range: (f64, f64),
    pub n_intervals: usize,
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    /// The config with paths made absolute.
    pub config: PipelineConfig,
    /// Dataset row id of each training row; node members index this list.
    pub rows: Vec<usize>,
    pub metric: MetricSummary,
    pub filters: Vec<FilterSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub graph: MapperGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModesDocument {
    pub selection: SelectionParams,
    pub supervision: String,
    /// Weight of each graph edge, aligned with the graph's edge list.
    pub edge_weights: Vec<f64>,
    pub ahcl: Vec<usize>,
    pub louvain: Vec<usize>,
    pub modes: Vec<FailureMode>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SelectionsDocument {
    pub modes: Vec<FailureMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub nodes: usize,
    pub edges: usize,
    pub components: usize,
    pub cycle_rank: usize,
    pub coverage: f64,
}

impl GraphSummary {
    pub fn of(g: &MapperGraph, rows: usize) -> Self {
        GraphSummary {
            nodes: g.node_count(),
            edges: g.edge_count(),
            components: g.components(),
            cycle_rank: g.cycle_rank(),
            coverage: g.coverage(rows),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub id: usize,
    pub size: usize,
    pub accuracy: f64,
    pub ground_truth_mode: f64,
    pub mean_residual: f64,
    pub provenance: Provenance,
}

impl From<&FailureMode> for ModeSummary {
    fn from(m: &FailureMode) -> Self {
        ModeSummary {
            id: m.id,
            size: m.size,
            accuracy: m.accuracy,
            ground_truth_mode: m.ground_truth_mode,
            mean_residual: m.mean_residual,
            provenance: m.provenance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub graph: GraphSummary,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub modes: Vec<ModeSummary>,
    /// Metrics of the correction layer on the fold's test rows.
    pub ensemble: EnsembleMetrics,
    pub bias: Vec<BiasProfile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedMode>,
    pub top_features: Vec<KsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub folds: usize,
    pub modes_per_fold: Vec<usize>,
    pub mean_base_accuracy: f64,
    pub mean_corrected_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_clean_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_base_rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_corrected_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: TaskKind,
    pub summary: RunSummary,
    pub folds: Vec<FoldReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold: Option<usize>,
    pub stage: String,
    pub seconds: f64,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

impl RunSummary {
    pub fn of(folds: &[FoldReport]) -> Self {
        RunSummary {
            folds: folds.len(),
            modes_per_fold: folds.iter().map(|f| f.modes.len()).collect(),
            mean_base_accuracy: mean_of(folds.iter().map(|f| f.ensemble.base_accuracy)).unwrap_or(0.0),
            mean_corrected_accuracy: mean_of(folds.iter().map(|f| f.ensemble.corrected_accuracy))
                .unwrap_or(0.0),
            mean_clean_fraction: mean_of(folds.iter().filter_map(|f| f.ensemble.clean_fraction)),
            mean_base_rmse: mean_of(folds.iter().filter_map(|f| f.ensemble.base_rmse)),
            mean_corrected_rmse: mean_of(folds.iter().filter_map(|f| f.ensemble.corrected_rmse)),
        }
    }
}
