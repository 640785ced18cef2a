//! The correction layer: one-vs-rest failure-mode classifiers, each paired
//! with an action that adjusts the upstream model's prediction.

mod gnb;
mod linear;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::failure::FailureMode;

pub use gnb::{GaussianClass, GnbModel, VARIANCE_FLOOR};
pub use linear::{
    minimize, DescentOptions, DescentTrace, LinearLoss, LinearModel, Objective, Standardizer,
    DEFAULT_GRADIENT_TOL, DEFAULT_MAX_ITER, SD_FLOOR,
};

/// The regularization grid searched by default.
pub const DEFAULT_C_GRID: [f64; 7] = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0];
pub const DEFAULT_CV_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    LogisticRegression,
    LinearSvm,
    GaussianNb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    #[default]
    None,
    /// Weights each class by `n / (2 n_class)`.
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    /// Used directly when `c_grid` is empty, and as the fallback when
    /// cross-validation is infeasible.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Candidate values for cross-validated selection of `C`.
    #[serde(default)]
    pub c_grid: Vec<f64>,
    #[serde(default = "default_folds")]
    pub cv_folds: usize,
    #[serde(default)]
    pub class_weight: ClassWeight,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_c() -> f64 {
    1.0
}
fn default_folds() -> usize {
    DEFAULT_CV_FOLDS
}
fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}
fn default_tolerance() -> f64 {
    DEFAULT_GRADIENT_TOL
}

impl ClassifierSpec {
    pub fn new(kind: ClassifierKind) -> Self {
        ClassifierSpec {
            kind,
            c: default_c(),
            c_grid: Vec::new(),
            cv_folds: DEFAULT_CV_FOLDS,
            class_weight: ClassWeight::None,
            max_iter: DEFAULT_MAX_ITER,
            tolerance: DEFAULT_GRADIENT_TOL,
        }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_grid(mut self, grid: &[f64]) -> Self {
        self.c_grid = grid.to_vec();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad_c = |c: f64| !(c > 0.0 && c.is_finite());
        if bad_c(self.c) || self.c_grid.iter().any(|&c| bad_c(c)) {
            return Err(Error::Config("regularization C must be positive and finite".into()));
        }
        if self.cv_folds < 2 && self.c_grid.len() > 1 {
            return Err(Error::Config("C selection needs at least 2 folds".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config("gradient tolerance must be nonnegative".into()));
        }
        Ok(())
    }

    fn descent(&self) -> DescentOptions {
        DescentOptions {
            max_iter: self.max_iter,
            tolerance: self.tolerance,
        }
    }
}

/// A trained binary classifier. Positive means "in the failure mode".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classifier {
    Linear(LinearModel),
    GaussianNb(GnbModel),
}

impl Classifier {
    pub fn dim(&self) -> usize {
        match self {
            Classifier::Linear(m) => m.dim(),
            Classifier::GaussianNb(m) => m.dim(),
        }
    }

    /// Signed decision value (linear models) or in-mode posterior (GNB).
    pub fn score(&self, row: &[f64]) -> f64 {
        match self {
            Classifier::Linear(m) => m.decision(row),
            Classifier::GaussianNb(m) => m.posteriors(row).1,
        }
    }

    pub fn fires(&self, row: &[f64]) -> bool {
        let s = self.score(row);
        match self {
            Classifier::Linear(_) => s > 0.0,
            Classifier::GaussianNb(_) => s > 0.5,
        }
    }
}

fn check_training(x: &[f64], dim: usize, y: &[bool]) -> Result<()> {
    if dim == 0 || x.len() != y.len() * dim {
        return Err(Error::Input(format!(
            "feature matrix of length {} does not hold {} rows of {dim} columns",
            x.len(),
            y.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("features must be finite".into()));
    }
    let pos = y.iter().filter(|&&b| b).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::DegenerateTraining(format!(
            "{pos} positive and {} negative examples",
            y.len() - pos
        )));
    }
    Ok(())
}

fn class_weights(y: &[bool], mode: ClassWeight) -> Option<Vec<f64>> {
    match mode {
        ClassWeight::None => None,
        ClassWeight::Balanced => {
            let n = y.len() as f64;
            let pos = y.iter().filter(|&&b| b).count() as f64;
            let (wp, wn) = (n / (2.0 * pos), n / (2.0 * (n - pos)));
            Some(y.iter().map(|&b| if b { wp } else { wn }).collect())
        }
    }
}

/// Fits one binary classifier at `spec.c` on the row-major matrix `x` with
/// `dim` columns.
pub fn fit_classifier(x: &[f64], dim: usize, y: &[bool], spec: &ClassifierSpec) -> Result<Classifier> {
    spec.validate()?;
    check_training(x, dim, y)?;
    Ok(fit_unchecked(x, dim, y, spec, spec.c))
}

fn fit_unchecked(x: &[f64], dim: usize, y: &[bool], spec: &ClassifierSpec, c: f64) -> Classifier {
    let loss = match spec.kind {
        ClassifierKind::GaussianNb => return Classifier::GaussianNb(GnbModel::fit(x, dim, y)),
        ClassifierKind::LogisticRegression => LinearLoss::Logistic,
        ClassifierKind::LinearSvm => LinearLoss::SquaredHinge,
    };
    let weights = class_weights(y, spec.class_weight);
    let (model, _) = linear::fit_linear(loss, x, dim, y, weights.as_deref(), c, &spec.descent());
    Classifier::Linear(model)
}

/// Fold index per row: each class is dealt round-robin in row order, the
/// negatives continuing where the positives stopped, so every fold gets
/// `⌊n_c / k⌋` or `⌈n_c / k⌉` rows of each class.
pub fn stratified_folds(y: &[bool], k: usize) -> Vec<usize> {
    let mut next = [0usize; 2];
    let n_pos = y.iter().filter(|&&b| b).count();
    next[0] = n_pos % k.max(1);
    y.iter()
        .map(|&b| {
            let slot = &mut next[b as usize];
            let f = *slot % k;
            *slot += 1;
            f
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CSelection {
    pub c: f64,
    /// `(C, mean held-out accuracy)` per grid value, in grid order; empty
    /// when no cross-validation ran.
    pub scores: Vec<(f64, f64)>,
    pub folds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn gather(x: &[f64], dim: usize, rows: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * dim);
    for &r in rows {
        out.extend_from_slice(&x[r * dim..(r + 1) * dim]);
    }
    out
}

/// Picks `C` from `spec.c_grid` by stratified cross-validated accuracy;
/// ties go to the smaller `C`. The fold count is capped by the size of the
/// smaller class; below two folds `spec.c` is returned with a note.
pub fn select_c(x: &[f64], dim: usize, y: &[bool], spec: &ClassifierSpec) -> Result<CSelection> {
    spec.validate()?;
    check_training(x, dim, y)?;
    let mut grid = spec.c_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let fixed = |c: f64, note: Option<String>| CSelection {
        c,
        scores: Vec::new(),
        folds: 0,
        note,
    };
    if spec.kind == ClassifierKind::GaussianNb || grid.is_empty() {
        return Ok(fixed(spec.c, None));
    }
    if grid.len() == 1 {
        return Ok(fixed(grid[0], None));
    }
    let pos = y.iter().filter(|&&b| b).count();
    let k = spec.cv_folds.min(pos).min(y.len() - pos);
    if k < 2 {
        return Ok(fixed(
            spec.c,
            Some(format!("too few examples for cross-validation; using C = {}", spec.c)),
        ));
    }
    let fold_of = stratified_folds(y, k);
    let splits: Vec<(Vec<f64>, Vec<bool>, Vec<f64>, Vec<bool>)> = (0..k)
        .map(|f| {
            let train: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] != f).collect();
            let test: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] == f).collect();
            (
                gather(x, dim, &train),
                train.iter().map(|&i| y[i]).collect(),
                gather(x, dim, &test),
                test.iter().map(|&i| y[i]).collect(),
            )
        })
        .collect();
    let scores: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&c| {
            let mut acc = 0.0;
            for (xtr, ytr, xte, yte) in &splits {
                let model = fit_unchecked(xtr, dim, ytr, spec, c);
                let hits = xte
                    .chunks_exact(dim)
                    .zip(yte)
                    .filter(|(row, &t)| model.fires(row) == t)
                    .count();
                acc += hits as f64 / yte.len() as f64;
            }
            (c, acc / k as f64)
        })
        .collect();
    let mut best = scores[0];
    for &s in &scores[1..] {
        if s.1 > best.1 {
            best = s;
        }
    }
    Ok(CSelection {
        c: best.0,
        scores,
        folds: k,
        note: None,
    })
}

/// What to do with the upstream prediction when a mode's classifier fires.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    /// Replace the predicted label.
    LabelOverride { label: f64 },
    /// Subtract the mode's mean residual (`prediction − ground truth`).
    Offset { mean_error: f64 },
}

impl Action {
    pub fn apply(&self, prediction: f64) -> f64 {
        match *self {
            Action::LabelOverride { label } => label,
            Action::Offset { mean_error } => prediction - mean_error,
        }
    }
}

/// How one prediction is chosen when several classifiers fire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Highest score wins; equal scores go to the lowest mode id.
    #[default]
    HighestScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeClassifier {
    pub mode_id: usize,
    pub classifier: Classifier,
    pub action: Action,
    pub selection: CSelection,
    pub positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedMode {
    pub mode_id: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionEnsemble {
    pub task: TaskKind,
    pub spec: ClassifierSpec,
    pub feature_names: Vec<String>,
    pub tie_policy: TiePolicy,
    /// Sorted by mode id.
    pub classifiers: Vec<ModeClassifier>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Firing {
    pub mode_id: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub original: f64,
    pub prediction: f64,
    /// Every classifier that fired, in mode-id order.
    pub fired: Vec<Firing>,
    /// The mode whose action was applied.
    pub applied: Option<usize>,
}

/// Trains one classifier per failure mode: positives are the mode's members,
/// negatives every other row of `d`. Modes without both classes are skipped
/// with a warning.
pub fn train_ensemble(modes: &[FailureMode], d: &Dataset, spec: &ClassifierSpec) -> Result<CorrectionEnsemble> {
    spec.validate()?;
    let n = d.row_count();
    for m in modes {
        if let Some(&r) = m.members.iter().find(|&&r| r >= n) {
            return Err(Error::Argument(format!("mode {} names row {r} of {n}", m.id)));
        }
    }
    let dim = d.col_count();
    let x = d.features();
    let task = d.meta().task;
    let trained: Vec<std::result::Result<ModeClassifier, SkippedMode>> = modes
        .par_iter()
        .map(|m| {
            let mut y = vec![false; n];
            for &r in &m.members {
                y[r] = true;
            }
            let skip = |e: Error| SkippedMode {
                mode_id: m.id,
                reason: e.to_string(),
            };
            let selection = select_c(x, dim, &y, spec).map_err(skip)?;
            let classifier = fit_unchecked(x, dim, &y, spec, selection.c);
            let action = match task {
                TaskKind::Classification => Action::LabelOverride {
                    label: m.ground_truth_mode,
                },
                TaskKind::Regression => Action::Offset {
                    mean_error: m.mean_residual,
                },
            };
            Ok(ModeClassifier {
                mode_id: m.id,
                classifier,
                action,
                selection,
                positives: y.iter().filter(|&&b| b).count(),
            })
        })
        .collect();
    let mut classifiers = Vec::new();
    let mut skipped = Vec::new();
    for t in trained {
        match t {
            Ok(c) => classifiers.push(c),
            Err(s) => {
                log::warn!("skipping failure mode {}: {}", s.mode_id, s.reason);
                skipped.push(s);
            }
        }
    }
    classifiers.sort_by_key(|c| c.mode_id);
    Ok(CorrectionEnsemble {
        task,
        spec: spec.clone(),
        feature_names: d.feature_names().to_vec(),
        tie_policy: TiePolicy::HighestScore,
        classifiers,
        skipped,
        config_hash: None,
    })
}

impl CorrectionEnsemble {
    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Runs every classifier on `features` and applies the winning action.
    pub fn correct(&self, features: &[f64], original: f64) -> Result<Correction> {
        if features.len() != self.dim() {
            return Err(Error::Input(format!(
                "expected {} features, got {}",
                self.dim(),
                features.len()
            )));
        }
        let mut fired = Vec::new();
        let mut best: Option<(usize, f64)> = None;
        for (i, mc) in self.classifiers.iter().enumerate() {
            if !mc.classifier.fires(features) {
                continue;
            }
            let score = mc.classifier.score(features);
            fired.push(Firing {
                mode_id: mc.mode_id,
                score,
            });
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        let (prediction, applied) = match best {
            Some((i, _)) => {
                let mc = &self.classifiers[i];
                (mc.action.apply(original), Some(mc.mode_id))
            }
            None => (original, None),
        };
        Ok(Correction {
            original,
            prediction,
            fired,
            applied,
        })
    }

    /// Corrects every row of `d` against its recorded prediction.
    pub fn correct_dataset(&self, d: &Dataset) -> Result<Vec<Correction>> {
        self.check_columns(d)?;
        (0..d.row_count())
            .into_par_iter()
            .map(|r| self.correct(d.row(r), d.meta().prediction[r]))
            .collect()
    }

    fn check_columns(&self, d: &Dataset) -> Result<()> {
        if d.feature_names() != self.feature_names.as_slice() {
            return Err(Error::Input(format!(
                "dataset has {} feature columns that do not match the ensemble's {}",
                d.col_count(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// What a single classifier captures on held-out data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasProfile {
    pub mode_id: usize,
    pub captured: usize,
    /// Ground-truth label counts of the captured rows (classification).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ground_truth_counts: BTreeMap<i64, usize>,
    /// Mean and standard deviation of captured residuals (regression).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_sd: Option<f64>,
    /// Classification: fraction of captured rows whose ground truth is the
    /// override label. Regression: fraction whose absolute error the offset
    /// reduces. `None` when nothing is captured.
    pub purity: Option<f64>,
    /// Fraction of captured rows flagged clean; `None` when nothing is
    /// captured or no clean flag exists.
    pub clean_fraction: Option<f64>,
}

fn fraction(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn clean_share(d: &Dataset, rows: &[usize]) -> Option<f64> {
    let meta = d.meta();
    meta.clean_flag.as_ref()?;
    let clean = rows.iter().filter(|&&r| meta.is_clean(r) == Some(true)).count();
    fraction(clean, rows.len())
}

/// Runs each classifier on its own over `holdout` and profiles what it
/// captures.
pub fn evaluate_bias(ens: &CorrectionEnsemble, holdout: &Dataset) -> Result<Vec<BiasProfile>> {
    ens.check_columns(holdout)?;
    let meta = holdout.meta();
    Ok(ens
        .classifiers
        .par_iter()
        .map(|mc| {
            let rows: Vec<usize> = (0..holdout.row_count())
                .filter(|&r| mc.classifier.fires(holdout.row(r)))
                .collect();
            let mut profile = BiasProfile {
                mode_id: mc.mode_id,
                captured: rows.len(),
                ground_truth_counts: BTreeMap::new(),
                residual_mean: None,
                residual_sd: None,
                purity: None,
                clean_fraction: clean_share(holdout, &rows),
            };
            match mc.action {
                Action::LabelOverride { label } => {
                    for &r in &rows {
                        *profile.ground_truth_counts.entry(meta.label(r)).or_insert(0) += 1;
                    }
                    let hits = rows.iter().filter(|&&r| meta.ground_truth[r] == label).count();
                    profile.purity = fraction(hits, rows.len());
                }
                Action::Offset { .. } => {
                    if !rows.is_empty() {
                        let res: Vec<f64> = rows.iter().map(|&r| meta.residual(r)).collect();
                        let mean = res.iter().sum::<f64>() / res.len() as f64;
                        let var = res.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / res.len() as f64;
                        profile.residual_mean = Some(mean);
                        profile.residual_sd = Some(var.sqrt());
                    }
                    let better = rows
                        .iter()
                        .filter(|&&r| {
                            let fixed = mc.action.apply(meta.prediction[r]);
                            (fixed - meta.ground_truth[r]).abs() < meta.residual(r).abs()
                        })
                        .count();
                    profile.purity = fraction(better, rows.len());
                }
            }
            profile
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMetrics {
    pub rows: usize,
    pub base_accuracy: f64,
    pub corrected_accuracy: f64,
    /// Rows whose prediction was adjusted.
    pub corrected_rows: usize,
    /// Fraction of adjusted rows that were flagged clean.
    pub clean_fraction: Option<f64>,
    /// Rows on which each mode's classifier fired.
    pub captures: BTreeMap<usize, usize>,
    /// Rows on which each mode's action was applied.
    pub applied: BTreeMap<usize, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_rmse: Option<f64>,
    /// RMSE over the rows not flagged clean (regression with a clean flag).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_rmse_unclean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_rmse_unclean: Option<f64>,
}

fn rmse(pairs: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (a, b) in pairs {
        sum += (a - b) * (a - b);
        n += 1;
    }
    (n > 0).then(|| (sum / n as f64).sqrt())
}

/// Accuracy before and after correction. For regression a prediction counts
/// as correct when within `tolerance` of the ground truth.
pub fn evaluate_ensemble(ens: &CorrectionEnsemble, test: &Dataset, tolerance: f64) -> Result<EnsembleMetrics> {
    let corrections = ens.correct_dataset(test)?;
    let meta = test.meta();
    let n = test.row_count();
    let is_hit = |r: usize, pred: f64| match meta.task {
        TaskKind::Classification => pred == meta.ground_truth[r],
        TaskKind::Regression => (pred - meta.ground_truth[r]).abs() <= tolerance,
    };
    let base_hits = (0..n).filter(|&r| is_hit(r, meta.prediction[r])).count();
    let fixed_hits = (0..n).filter(|&r| is_hit(r, corrections[r].prediction)).count();
    let mut captures: BTreeMap<usize, usize> = ens.classifiers.iter().map(|c| (c.mode_id, 0)).collect();
    let mut applied = captures.clone();
    let mut corrected = Vec::new();
    for (r, c) in corrections.iter().enumerate() {
        for f in &c.fired {
            *captures.entry(f.mode_id).or_insert(0) += 1;
        }
        if let Some(m) = c.applied {
            *applied.entry(m).or_insert(0) += 1;
            corrected.push(r);
        }
    }
    let mut metrics = EnsembleMetrics {
        rows: n,
        base_accuracy: base_hits as f64 / n as f64,
        corrected_accuracy: fixed_hits as f64 / n as f64,
        corrected_rows: corrected.len(),
        clean_fraction: clean_share(test, &corrected),
        captures,
        applied,
        base_rmse: None,
        corrected_rmse: None,
        base_rmse_unclean: None,
        corrected_rmse_unclean: None,
    };
    if meta.task == TaskKind::Regression {
        let gt = &meta.ground_truth;
        metrics.base_rmse = rmse((0..n).map(|r| (meta.prediction[r], gt[r])));
        metrics.corrected_rmse = rmse((0..n).map(|r| (corrections[r].prediction, gt[r])));
        if meta.clean_flag.is_some() {
            let unclean: Vec<usize> = (0..n).filter(|&r| meta.is_clean(r) == Some(false)).collect();
            metrics.base_rmse_unclean = rmse(unclean.iter().map(|&r| (meta.prediction[r], gt[r])));
            metrics.corrected_rmse_unclean =
                rmse(unclean.iter().map(|&r| (corrections[r].prediction, gt[r])));
        }
    }
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Meta;
    use crate::failure::Provenance;

    fn blobs() -> (Vec<f64>, Vec<bool>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..20 {
            let t = i as f64 * 0.05;
            x.extend([t, 1.0 - t]);
            y.push(false);
            x.extend([4.0 + t, 3.0 - t]);
            y.push(true);
        }
        (x, y)
    }

    #[test]
    fn separable_blobs_are_fit_exactly() {
        let (x, y) = blobs();
        for kind in [ClassifierKind::LogisticRegression, ClassifierKind::LinearSvm, ClassifierKind::GaussianNb] {
            let m = fit_classifier(&x, 2, &y, &ClassifierSpec::new(kind)).unwrap();
            for (row, &t) in x.chunks_exact(2).zip(&y) {
                assert_eq!(m.fires(row), t, "{kind:?}");
            }
        }
    }

    #[test]
    fn single_class_is_degenerate() {
        let spec = ClassifierSpec::new(ClassifierKind::LogisticRegression);
        let r = fit_classifier(&[1.0, 2.0], 1, &[true, true], &spec);
        assert!(matches!(r, Err(Error::DegenerateTraining(_))));
    }

    #[test]
    fn one_value_grid_is_returned() {
        let (x, y) = blobs();
        let spec = ClassifierSpec::new(ClassifierKind::LinearSvm).with_grid(&[0.3]);
        assert_eq!(select_c(&x, 2, &y, &spec).unwrap().c, 0.3);
    }

    #[test]
    fn tied_grid_prefers_smaller_c() {
        let (x, y) = blobs();
        let spec = ClassifierSpec::new(ClassifierKind::LogisticRegression).with_grid(&[10.0, 1.0]);
        let s = select_c(&x, 2, &y, &spec).unwrap();
        assert_eq!(s.scores.len(), 2);
        assert_eq!(s.scores[0].1, 1.0);
        assert_eq!(s.scores[1].1, 1.0);
        assert_eq!(s.c, 1.0);
    }

    #[test]
    fn folds_are_stratified() {
        let y: Vec<bool> = (0..23).map(|i| i % 3 == 0).collect();
        let f = stratified_folds(&y, 4);
        for k in 0..4 {
            let pos = (0..23).filter(|&i| f[i] == k && y[i]).count();
            let all = (0..23).filter(|&i| f[i] == k).count();
            assert!((2..=2).contains(&pos), "{pos}");
            assert!((5..=6).contains(&all), "{all}");
        }
    }

    fn mode(id: usize, label: f64, mean_residual: f64) -> ModeClassifier {
        ModeClassifier {
            mode_id: id,
            classifier: Classifier::Linear(LinearModel {
                loss: LinearLoss::Logistic,
                weights: vec![1.0],
                intercept: -(id as f64),
                standardizer: Standardizer {
                    means: vec![0.0],
                    scales: vec![1.0],
                },
                c: 1.0,
                iterations: 0,
                gradient_norm: 0.0,
                converged: true,
            }),
            action: if mean_residual == 0.0 {
                Action::LabelOverride { label }
            } else {
                Action::Offset { mean_error: mean_residual }
            },
            selection: CSelection {
                c: 1.0,
                scores: vec![],
                folds: 0,
                note: None,
            },
            positives: 1,
        }
    }

    fn ensemble(classifiers: Vec<ModeClassifier>) -> CorrectionEnsemble {
        CorrectionEnsemble {
            task: TaskKind::Classification,
            spec: ClassifierSpec::new(ClassifierKind::LogisticRegression),
            feature_names: vec!["x".into()],
            tie_policy: TiePolicy::HighestScore,
            classifiers,
            skipped: vec![],
            config_hash: None,
        }
    }

    #[test]
    fn override_and_offset() {
        let e = ensemble(vec![mode(0, 5.0, 0.0)]);
        let c = e.correct(&[1.0], 8.0).unwrap();
        assert_eq!(c.prediction, 5.0);
        assert_eq!(c.applied, Some(0));
        let none = e.correct(&[-1.0], 8.0).unwrap();
        assert_eq!(none.prediction, 8.0);
        assert!(none.fired.is_empty());

        let e = ensemble(vec![mode(0, 0.0, 100.0)]);
        assert_eq!(e.correct(&[1.0], 1600.0).unwrap().prediction, 1500.0);
    }

    #[test]
    fn highest_score_wins_then_lowest_id() {
        // Scores at x = 5: mode 1 → 4, mode 2 → 3.
        let e = ensemble(vec![mode(1, 1.0, 0.0), mode(2, 2.0, 0.0)]);
        let c = e.correct(&[5.0], 0.0).unwrap();
        assert_eq!(c.fired.len(), 2);
        assert_eq!(c.prediction, 1.0);
        // Equal scores.
        let e = ensemble(vec![mode(3, 3.0, 0.0), {
            let mut m = mode(4, 4.0, 0.0);
            if let Classifier::Linear(l) = &mut m.classifier {
                l.intercept = -3.0;
            }
            m
        }]);
        assert_eq!(e.correct(&[5.0], 0.0).unwrap().applied, Some(3));
    }

    #[test]
    fn dimension_mismatch_is_an_input_error() {
        let e = ensemble(vec![mode(0, 5.0, 0.0)]);
        assert!(matches!(e.correct(&[1.0, 2.0], 8.0), Err(Error::Input(_))));
    }

    #[test]
    fn silent_ensemble_keeps_accuracy_and_reports_null_purity() {
        let meta = Meta::new(TaskKind::Classification, vec![1.0, 2.0, 3.0], vec![1.0, 0.0, 3.0], vec![0.0; 3]);
        let d = Dataset::from_rows(vec!["x".into()], vec![vec![-1.0], vec![-2.0], vec![-3.0]], meta).unwrap();
        let e = ensemble(vec![mode(0, 5.0, 0.0)]);
        let m = evaluate_ensemble(&e, &d, 0.0).unwrap();
        assert_eq!(m.base_accuracy, m.corrected_accuracy);
        assert_eq!(m.corrected_rows, 0);
        let b = evaluate_bias(&e, &d).unwrap();
        assert_eq!(b[0].captured, 0);
        assert_eq!(b[0].purity, None);
    }

    #[test]
    fn ensemble_trains_one_classifier_per_mode() {
        let n = 40;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![if i < 10 { 5.0 } else { 0.0 } + i as f64 * 0.01]).collect();
        let gt: Vec<f64> = (0..n).map(|i| if i < 10 { 5.0 } else { 1.0 }).collect();
        let pred: Vec<f64> = (0..n).map(|i| if i < 10 { 8.0 } else { 1.0 }).collect();
        let meta = Meta::new(TaskKind::Classification, gt, pred, vec![0.0; n]);
        let d = Dataset::from_rows(vec!["x".into()], rows, meta).unwrap();
        let fm = |id, members: Vec<usize>| FailureMode {
            id,
            node_ids: vec![],
            size: members.len(),
            members,
            ground_truth_mode: 5.0,
            accuracy: 0.0,
            mean_residual: 3.0,
            ground_truth_counts: BTreeMap::new(),
            prediction_counts: BTreeMap::new(),
            provenance: Provenance::Automatic,
            warnings: vec![],
        };
        let modes = vec![fm(0, (0..10).collect()), fm(1, (0..n).collect())];
        let spec = ClassifierSpec::new(ClassifierKind::LinearSvm);
        let e = train_ensemble(&modes, &d, &spec).unwrap();
        assert_eq!(e.classifiers.len(), 1);
        assert_eq!(e.skipped.len(), 1);
        assert_eq!(e.classifiers[0].action, Action::LabelOverride { label: 5.0 });
        let m = evaluate_ensemble(&e, &d, 0.0).unwrap();
        assert_eq!(m.base_accuracy, 0.75);
        assert_eq!(m.corrected_accuracy, 1.0);
    }
}
