//! End-to-end runs: load → filters → Mapper → failure modes → correction
//! layer → evaluation, once per cross-validation fold.

mod artifacts;
mod config;
mod planted;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::correction::{evaluate_bias, evaluate_ensemble, train_ensemble, CorrectionEnsemble};
use crate::dataset::{load_dataset, Dataset, Meta, MetricSpec};
use crate::error::{Error, Result};
use crate::failure::{diagnose_mode, extract_failure_modes, manual_select, FailureMode, KsReport, Reference};
use crate::filters::{compute_filter, validate_error_filters, FilterKind, FilterSpec, FilterValues};
use crate::mapper::build_mapper_from_values;

pub use artifacts::*;
pub use config::{
    DatasetConfig, DiagnoseConfig, ExtractionConfig, FilterEntry, MapperConfig, MetricConfig,
    PipelineConfig, SplitConfig,
};
pub use planted::{
    generate_planted, planted_schema, CLEAN_FLAG, OUTLIER_SHIFT, PLANTED_PREDICTION, PLANTED_TRUTH,
    REGRESSION_BIAS,
};

/// One cross-validation split; both index lists ascend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` with `seed` and cuts it into `k` test folds whose sizes
/// differ by at most one; each split trains on the other folds.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Split>> {
    if k < 2 {
        return Err(Error::Argument(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::Argument(format!("{k} folds for {n} rows")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut fold_of = vec![0; n];
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        for &r in &perm[start..start + len] {
            fold_of[r] = f;
        }
        start += len;
    }
    Ok((0..k)
        .map(|f| Split {
            train: (0..n).filter(|&r| fold_of[r] != f).collect(),
            test: (0..n).filter(|&r| fold_of[r] == f).collect(),
        })
        .collect())
}

/// A fold's training and test datasets.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub index: usize,
    pub train: Dataset,
    pub test: Dataset,
}

/// Everything produced for one fold.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub data: FoldData,
    pub graph: GraphDocument,
    pub modes: ModesDocument,
    pub selections: Vec<FailureMode>,
    pub ensemble: CorrectionEnsemble,
    pub diagnostics: Vec<KsReport>,
    pub report: FoldReport,
    pub timings: Vec<StageTiming>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub folds: Vec<FoldOutcome>,
    pub timings: Vec<StageTiming>,
}

/// A loaded config with its dataset and splits.
#[derive(Debug, Clone)]
pub struct Pipeline {
    /// Paths resolved against the config's directory.
    pub config: PipelineConfig,
    pub hash: String,
    pub dataset: Dataset,
    pub splits: Vec<Split>,
}

fn timed<T>(timings: &mut Vec<StageTiming>, fold: Option<usize>, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| Error::stage(stage, e))?;
    timings.push(StageTiming {
        fold,
        stage: stage.to_string(),
        seconds: start.elapsed().as_secs_f64(),
    });
    Ok(out)
}

impl Pipeline {
    /// Loads the config at `path`, optionally overriding its seed.
    pub fn from_path(path: &Path, seed: Option<u64>) -> Result<Self> {
        let mut config = PipelineConfig::load(path)?;
        if let Some(s) = seed {
            config.seed = s;
        }
        let base = path.parent().unwrap_or(Path::new("."));
        Self::new(config, base)
    }

    /// The hash covers the config as written; relative paths then resolve
    /// against `base`.
    pub fn new(mut config: PipelineConfig, base: &Path) -> Result<Self> {
        config.validate()?;
        let hash = config.hash();
        config.resolve_paths(base);
        let dataset = load_dataset(&config.dataset.path, &config.dataset.schema, config.task)
            .map_err(|e| Error::stage("load", e))?;
        let splits = kfold_split(dataset.row_count(), config.split.folds, config.seed)
            .map_err(|e| Error::stage("split", e))?;
        Ok(Pipeline {
            config,
            hash,
            dataset,
            splits,
        })
    }

    /// The configured output directory, if any.
    pub fn default_output(&self) -> Option<PathBuf> {
        self.config.output.clone()
    }

    pub fn fold_data(&self, fold: usize) -> Result<FoldData> {
        let split = self
            .splits
            .get(fold)
            .ok_or_else(|| Error::Argument(format!("fold {fold} of {}", self.splits.len())))?;
        Ok(FoldData {
            index: fold,
            train: self.dataset.subset(&split.train)?,
            test: self.dataset.subset(&split.test)?,
        })
    }

    /// Filter values on a fold. External values are given per dataset row and
    /// are picked out through the fold's row ids.
    fn filter_values(&self, spec: &FilterSpec, train: &Dataset) -> Result<FilterValues> {
        let spec = spec.resolve(Path::new("."))?;
        match &spec.kind {
            FilterKind::External { values } => {
                if values.len() != self.dataset.row_count() {
                    return Err(Error::Config(format!(
                        "external filter `{}` has {} values for {} rows",
                        spec.name,
                        values.len(),
                        self.dataset.row_count()
                    )));
                }
                FilterValues::new(train.origin().iter().map(|&r| values[r]).collect())
            }
            _ => compute_filter(train, &spec),
        }
    }

    pub fn build_graph(&self, fold: &FoldData) -> Result<GraphDocument> {
        let train = &fold.train;
        let specs = self.config.filter_specs();
        let mut warnings = Vec::new();
        if let Some(w) = validate_error_filters(&specs) {
            log::warn!("{w}");
            warnings.push(w.to_string());
        }
        let metric = MetricSpec::for_kind(self.config.metric.kind, train)?;
        if !metric.excluded().is_empty() {
            warnings.push(format!(
                "zero-variance feature columns excluded from the metric: {:?}",
                metric.excluded()
            ));
        }
        let values = specs
            .iter()
            .map(|s| self.filter_values(s, train))
            .collect::<Result<Vec<_>>>()?;
        let covers = self.config.covers();
        let graph = build_mapper_from_values(
            train,
            &metric,
            &values,
            &covers,
            self.config.mapper.bins,
            self.config.mapper.max_cell_size,
        )?;
        let filters = specs
            .iter()
            .zip(&values)
            .zip(&covers)
            .map(|((s, v), c)| FilterSummary {
                name: s.name.clone(),
                range: v.range,
                n_intervals: c.n_intervals,
                overlap: c.overlap,
            })
            .collect();
        Ok(GraphDocument {
            config: self.config.clone(),
            rows: train.origin().to_vec(),
            metric: (&metric).into(),
            filters,
            warnings,
            graph,
        })
    }

    pub fn extract(&self, fold: &FoldData, graph: &GraphDocument) -> Result<ModesDocument> {
        let ex = &self.config.extraction;
        let meta = fold.train.meta();
        let supervision = meta
            .field(&ex.supervision)
            .ok_or_else(|| Error::Config(format!("unknown supervision field `{}`", ex.supervision)))?;
        let selection = ex.selection();
        let out = extract_failure_modes(&graph.graph, meta, &supervision, &selection)?;
        Ok(ModesDocument {
            selection,
            supervision: ex.supervision.clone(),
            edge_weights: out.weighted.edges.iter().map(|e| e.2).collect(),
            ahcl: out.ahcl,
            louvain: out.louvain,
            modes: out.modes,
        })
    }

    pub fn train(&self, fold: &FoldData, modes: &[FailureMode]) -> Result<CorrectionEnsemble> {
        let mut ens = train_ensemble(modes, &fold.train, &self.config.classifier)?;
        ens.config_hash = Some(self.hash.clone());
        Ok(ens)
    }

    pub fn diagnose(&self, fold: &FoldData, modes: &[FailureMode], reference: &Reference, top_n: usize) -> Result<Vec<KsReport>> {
        modes
            .iter()
            .map(|m| diagnose_mode(&fold.train, m, reference, modes, top_n))
            .collect()
    }

    pub fn evaluate(
        &self,
        fold: &FoldData,
        graph: &GraphDocument,
        modes: &[FailureMode],
        ensemble: &CorrectionEnsemble,
        diagnostics: Vec<KsReport>,
    ) -> Result<FoldReport> {
        let tol = self.config.extraction.tolerance;
        Ok(FoldReport {
            fold: fold.index,
            train_rows: fold.train.row_count(),
            test_rows: fold.test.row_count(),
            graph: GraphSummary::of(&graph.graph, fold.train.row_count()),
            warnings: graph.warnings.clone(),
            modes: modes.iter().map(ModeSummary::from).collect(),
            ensemble: evaluate_ensemble(ensemble, &fold.test, tol)?,
            bias: evaluate_bias(ensemble, &fold.test)?,
            skipped: ensemble.skipped.clone(),
            top_features: diagnostics,
        })
    }

    /// Runs one fold in memory. `selections` are manual modes added to the
    /// automatic ones before training.
    pub fn run_fold(&self, fold: usize, selections: Vec<FailureMode>) -> Result<FoldOutcome> {
        let mut timings = Vec::new();
        let f = Some(fold);
        let data = timed(&mut timings, f, "split", || self.fold_data(fold))?;
        let graph = timed(&mut timings, f, "build_graph", || self.build_graph(&data))?;
        let modes = timed(&mut timings, f, "extract", || self.extract(&data, &graph))?;
        let all: Vec<FailureMode> = modes.modes.iter().chain(&selections).cloned().collect();
        let ensemble = timed(&mut timings, f, "train", || self.train(&data, &all))?;
        let dc = &self.config.diagnose;
        let diagnostics = timed(&mut timings, f, "diagnose", || {
            self.diagnose(&data, &all, &dc.reference, dc.top_n)
        })?;
        let report = timed(&mut timings, f, "evaluate", || {
            self.evaluate(&data, &graph, &all, &ensemble, diagnostics.clone())
        })?;
        Ok(FoldOutcome {
            data,
            graph,
            modes,
            selections,
            ensemble,
            diagnostics,
            report,
            timings,
        })
    }

    fn write_fold(&self, dir: &Path, o: &FoldOutcome) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let f = Some(o.data.index);
        let h = &self.hash;
        write_json(&dir.join(GRAPH_FILE), &Artifact::new("graph", h, f, &o.graph))?;
        write_json(&dir.join(MODES_FILE), &Artifact::new("modes", h, f, &o.modes))?;
        write_json(&dir.join(ENSEMBLE_FILE), &Artifact::new("ensemble", h, f, &o.ensemble))?;
        write_json(&dir.join(DIAGNOSTICS_FILE), &Artifact::new("diagnostics", h, f, &o.diagnostics))?;
        write_json(&dir.join(REPORT_FILE), &Artifact::new("fold_report", h, f, &o.report))
    }

    /// Manual selections stored for `fold` under `out`, if they match this
    /// config.
    pub fn stored_selections(&self, out: &Path, fold: usize) -> Result<Vec<FailureMode>> {
        let p = fold_dir(out, fold).join(SELECTIONS_FILE);
        if !p.exists() {
            return Ok(Vec::new());
        }
        let doc: Artifact<SelectionsDocument> = read_json(&p)?;
        if doc.config_hash != self.hash {
            log::warn!("ignoring {}: produced by a different config", p.display());
            return Ok(Vec::new());
        }
        Ok(doc.data.modes)
    }

    /// Runs every fold and writes all artifacts under `out`. While running,
    /// and after a failure, `out` holds a stale marker.
    pub fn run(&self, out: &Path) -> Result<RunOutcome> {
        mark_stale(out, "run in progress")?;
        match self.run_inner(out) {
            Ok(r) => {
                clear_stale(out)?;
                Ok(r)
            }
            Err(e) => {
                mark_stale(out, &format!("run failed: {e}"))?;
                Err(e)
            }
        }
    }

    fn run_inner(&self, out: &Path) -> Result<RunOutcome> {
        let mut folds = Vec::new();
        let mut timings = Vec::new();
        for fold in 0..self.splits.len() {
            let selections = self.stored_selections(out, fold)?;
            let o = self.run_fold(fold, selections)?;
            self.write_fold(&fold_dir(out, fold), &o)?;
            timings.extend(o.timings.iter().cloned());
            folds.push(o);
        }
        let reports: Vec<FoldReport> = folds.iter().map(|f| f.report.clone()).collect();
        let report = RunReport {
            task: self.config.task,
            summary: RunSummary::of(&reports),
            folds: reports,
        };
        write_json(&out.join(REPORT_FILE), &Artifact::new("run_report", &self.hash, None, &report))?;
        write_json(&out.join(TIMINGS_FILE), &Artifact::new("timings", &self.hash, None, &timings))?;
        Ok(RunOutcome {
            report,
            folds,
            timings,
        })
    }

    fn load_graph(&self, dir: &Path) -> Result<GraphDocument> {
        Ok(read_artifact(&dir.join(GRAPH_FILE), "graph", Some(&self.hash))?.data)
    }

    fn load_modes(&self, dir: &Path) -> Result<ModesDocument> {
        Ok(read_artifact(&dir.join(MODES_FILE), "modes", Some(&self.hash))?.data)
    }

    fn load_all_modes(&self, out: &Path, fold: usize) -> Result<Vec<FailureMode>> {
        let dir = fold_dir(out, fold);
        let mut modes = self.load_modes(&dir)?.modes;
        modes.extend(self.stored_selections(out, fold)?);
        Ok(modes)
    }

    /// Runs `f` for one stage of one fold, marking the fold stale on error.
    fn stage<T>(&self, out: &Path, fold: usize, name: &'static str, f: impl FnOnce(&FoldData, &Path) -> Result<T>) -> Result<T> {
        let dir = fold_dir(out, fold);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let run = || -> Result<T> {
            let data = self.fold_data(fold)?;
            f(&data, &dir)
        };
        run().map_err(|e| {
            let e = Error::stage(name, e);
            if let Err(m) = mark_stale(&dir, &e.to_string()) {
                log::error!("could not mark {} stale: {m}", dir.display());
            }
            e
        })
    }

    pub fn build_graph_stage(&self, out: &Path, fold: usize) -> Result<GraphDocument> {
        self.stage(out, fold, "build_graph", |data, dir| {
            let g = self.build_graph(data)?;
            write_json(&dir.join(GRAPH_FILE), &Artifact::new("graph", &self.hash, Some(fold), &g))?;
            Ok(g)
        })
    }

    pub fn extract_stage(&self, out: &Path, fold: usize) -> Result<ModesDocument> {
        self.stage(out, fold, "extract", |data, dir| {
            let g = self.load_graph(dir)?;
            let m = self.extract(data, &g)?;
            write_json(&dir.join(MODES_FILE), &Artifact::new("modes", &self.hash, Some(fold), &m))?;
            Ok(m)
        })
    }

    /// Trains on the extracted modes plus any stored manual selections.
    pub fn train_stage(&self, out: &Path, fold: usize) -> Result<CorrectionEnsemble> {
        self.stage(out, fold, "train", |data, dir| {
            let modes = self.load_all_modes(out, fold)?;
            let e = self.train(data, &modes)?;
            write_json(&dir.join(ENSEMBLE_FILE), &Artifact::new("ensemble", &self.hash, Some(fold), &e))?;
            Ok(e)
        })
    }

    pub fn diagnose_stage(&self, out: &Path, fold: usize, reference: &Reference, top_n: usize) -> Result<Vec<KsReport>> {
        self.stage(out, fold, "diagnose", |data, dir| {
            let modes = self.load_all_modes(out, fold)?;
            let d = self.diagnose(data, &modes, reference, top_n)?;
            write_json(&dir.join(DIAGNOSTICS_FILE), &Artifact::new("diagnostics", &self.hash, Some(fold), &d))?;
            Ok(d)
        })
    }

    pub fn evaluate_stage(&self, out: &Path, fold: usize) -> Result<FoldReport> {
        self.stage(out, fold, "evaluate", |data, dir| {
            let g = self.load_graph(dir)?;
            let modes = self.load_all_modes(out, fold)?;
            let e: CorrectionEnsemble = read_artifact(&dir.join(ENSEMBLE_FILE), "ensemble", Some(&self.hash))?.data;
            let dc = &self.config.diagnose;
            let diagnostics = self.diagnose(data, &modes, &dc.reference, dc.top_n)?;
            let r = self.evaluate(data, &g, &modes, &e, diagnostics)?;
            write_json(&dir.join(REPORT_FILE), &Artifact::new("fold_report", &self.hash, Some(fold), &r))?;
            clear_stale(dir)?;
            Ok(r)
        })
    }
}

/// Turns an analyst's node selection into a manual failure mode and appends
/// it to the fold's `selections.json`. Ids continue after every existing
/// mode. Callers serialize concurrent writers.
pub fn record_selection(
    dir: &Path,
    graph: &Artifact<GraphDocument>,
    meta: &Meta,
    node_ids: &[usize],
) -> Result<FailureMode> {
    let modes: Artifact<ModesDocument> = read_artifact(&dir.join(MODES_FILE), "modes", Some(&graph.config_hash))?;
    let sel_path = dir.join(SELECTIONS_FILE);
    let mut doc = if sel_path.exists() {
        read_artifact::<SelectionsDocument>(&sel_path, "selections", Some(&graph.config_hash))?.data
    } else {
        SelectionsDocument::default()
    };
    let next = modes
        .data
        .modes
        .iter()
        .chain(&doc.modes)
        .map(|m| m.id + 1)
        .max()
        .unwrap_or(0);
    let mode = manual_select(&graph.data.graph, node_ids, meta, &modes.data.selection, next)?;
    doc.modes.push(mode.clone());
    write_json(
        &sel_path,
        &Artifact::new("selections", &graph.config_hash, graph.fold, &doc),
    )?;
    Ok(mode)
}

/// Training-row metadata for a graph document, loaded from the dataset its
/// config names.
pub fn graph_meta(doc: &GraphDocument) -> Result<Meta> {
    let c = &doc.config;
    let d = load_dataset(&c.dataset.path, &c.dataset.schema, c.task)?;
    if let Some(&bad) = doc.rows.iter().find(|&&r| r >= d.row_count()) {
        return Err(Error::Artifact(format!(
            "graph names dataset row {bad}, but {} has {} rows",
            c.dataset.path.display(),
            d.row_count()
        )));
    }
    Ok(d.meta().subset(&doc.rows))
}
