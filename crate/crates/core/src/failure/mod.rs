//! Failure modes: coherent high-error subgroups of a Mapper graph.

mod community;
mod ks;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Meta, TaskKind};
use crate::error::{Error, Result};
use crate::mapper::MapperGraph;

pub use community::{
    ahcl_cuts, ahcl_partition, canonical_labels, labels_to_parts, louvain, louvain_from, modularity,
    weight_edges, TreeCut, WeightedGraph,
};
pub use ks::{ks_statistic, rank_features, FeatureKs, KsReport, Reference};

/// Default minimum number of members of an extracted failure mode.
pub const DEFAULT_MIN_SIZE: usize = 15;
/// Default accuracy a group must fall below to count as a failure mode: the
/// upstream model's accuracy on clean data.
pub const DEFAULT_BASELINE_ACCURACY: f64 = 0.9905;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Automatic,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub min_size: usize,
    pub baseline_accuracy: f64,
    /// Regression only: a prediction is correct when `|residual| <= tolerance`.
    pub tolerance: f64,
}

impl Default for SelectionParams {
    fn default() -> Self {
        SelectionParams {
            min_size: DEFAULT_MIN_SIZE,
            baseline_accuracy: DEFAULT_BASELINE_ACCURACY,
            tolerance: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureMode {
    pub id: usize,
    pub node_ids: Vec<usize>,
    /// Deduplicated member row ids, ascending.
    pub members: Vec<usize>,
    pub size: usize,
    /// Majority ground-truth label (classification, ties to the smaller label)
    /// or mean ground truth (regression).
    pub ground_truth_mode: f64,
    pub accuracy: f64,
    /// Mean of `prediction − ground_truth` over the members.
    pub mean_residual: f64,
    /// Label counts (classification only).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ground_truth_counts: BTreeMap<i64, usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub prediction_counts: BTreeMap<i64, usize>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FailureMode {
    fn from_members(
        id: usize,
        node_ids: Vec<usize>,
        members: Vec<usize>,
        meta: &Meta,
        tolerance: f64,
        provenance: Provenance,
    ) -> FailureMode {
        let size = members.len();
        let n = size.max(1) as f64;
        let correct = members.iter().filter(|&&r| meta.is_correct(r, tolerance)).count();
        let mean_residual = members.iter().map(|&r| meta.residual(r)).sum::<f64>() / n;
        let mut gt_counts = BTreeMap::new();
        let mut pred_counts = BTreeMap::new();
        let ground_truth_mode = match meta.task {
            TaskKind::Classification => {
                for &r in &members {
                    *gt_counts.entry(meta.label(r)).or_insert(0) += 1;
                    *pred_counts.entry(meta.prediction[r] as i64).or_insert(0) += 1;
                }
                // BTreeMap iterates labels ascending, so `>` keeps the smallest on ties.
                let mut best: Option<(i64, usize)> = None;
                for (&label, &count) in &gt_counts {
                    if best.is_none_or(|(_, c)| count > c) {
                        best = Some((label, count));
                    }
                }
                best.map_or(f64::NAN, |(l, _)| l as f64)
            }
            TaskKind::Regression => members.iter().map(|&r| meta.ground_truth[r]).sum::<f64>() / n,
        };
        FailureMode {
            id,
            node_ids,
            members,
            size,
            ground_truth_mode,
            accuracy: correct as f64 / n,
            mean_residual,
            ground_truth_counts: gt_counts,
            prediction_counts: pred_counts,
            provenance,
            warnings: Vec::new(),
        }
    }

    fn threshold_warnings(&self, params: &SelectionParams) -> Vec<String> {
        let mut w = Vec::new();
        if self.size < params.min_size {
            w.push(format!("size {} < {}", self.size, params.min_size));
        }
        if self.accuracy >= params.baseline_accuracy {
            w.push(format!(
                "accuracy {:.4} is not below the baseline {:.4}",
                self.accuracy, params.baseline_accuracy
            ));
        }
        w
    }
}

fn union_members(g: &MapperGraph, node_ids: &[usize]) -> Vec<usize> {
    let set: BTreeSet<usize> = node_ids
        .iter()
        .flat_map(|&id| g.nodes[id].members.iter().copied())
        .collect();
    set.into_iter().collect()
}

/// Keeps the parts (lists of node ids) with at least `min_size` distinct
/// members and accuracy below `baseline_accuracy`. Ids are assigned in part
/// order starting from 0.
pub fn select_failure_modes(
    parts: &[Vec<usize>],
    g: &MapperGraph,
    meta: &Meta,
    params: &SelectionParams,
) -> Result<Vec<FailureMode>> {
    if !(0.0..=1.0).contains(&params.baseline_accuracy) {
        return Err(Error::Config(format!(
            "baseline accuracy {} is outside [0, 1]",
            params.baseline_accuracy
        )));
    }
    let mut out = Vec::new();
    for part in parts {
        if let Some(&bad) = part.iter().find(|&&id| id >= g.nodes.len()) {
            return Err(Error::Argument(format!("partition names unknown node {bad}")));
        }
        let members = union_members(g, part);
        if members.len() < params.min_size {
            continue;
        }
        let mode = FailureMode::from_members(
            out.len(),
            part.clone(),
            members,
            meta,
            params.tolerance,
            Provenance::Automatic,
        );
        if mode.accuracy < params.baseline_accuracy {
            out.push(mode);
        }
    }
    Ok(out)
}

/// An analyst-chosen failure mode. Thresholds are not enforced but reported
/// as warnings.
pub fn manual_select(
    g: &MapperGraph,
    node_ids: &[usize],
    meta: &Meta,
    params: &SelectionParams,
    id: usize,
) -> Result<FailureMode> {
    if node_ids.is_empty() {
        return Err(Error::Selection("empty selection".into()));
    }
    let ids: BTreeSet<usize> = node_ids.iter().copied().collect();
    let unknown: Vec<usize> = ids.iter().copied().filter(|&i| i >= g.nodes.len()).collect();
    if !unknown.is_empty() {
        return Err(Error::Selection(format!("unknown node id(s): {unknown:?}")));
    }
    let ids: Vec<usize> = ids.into_iter().collect();
    let members = union_members(g, &ids);
    let mut mode = FailureMode::from_members(id, ids, members, meta, params.tolerance, Provenance::Manual);
    mode.warnings = mode.threshold_warnings(params);
    Ok(mode)
}

/// The outcome of automatic extraction, with the intermediate partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub weighted: WeightedGraph,
    pub ahcl: Vec<usize>,
    pub louvain: Vec<usize>,
    pub modes: Vec<FailureMode>,
}

/// Weights edges by `supervision`, partitions (AHCL then Louvain) and keeps
/// the parts that pass the thresholds.
pub fn extract_failure_modes(
    g: &MapperGraph,
    meta: &Meta,
    supervision: &[f64],
    params: &SelectionParams,
) -> Result<Extraction> {
    let weighted = weight_edges(g, supervision)?;
    if weighted.node_count == 0 {
        return Ok(Extraction {
            weighted,
            ahcl: Vec::new(),
            louvain: Vec::new(),
            modes: Vec::new(),
        });
    }
    let ahcl = ahcl_partition(&weighted);
    let louvain = louvain_from(&weighted, &ahcl);
    let parts = labels_to_parts(&louvain);
    let modes = select_failure_modes(&parts, g, meta, params)?;
    Ok(Extraction {
        weighted,
        ahcl,
        louvain,
        modes,
    })
}

/// Ranks features distinguishing `mode` from `reference`.
pub fn diagnose_mode(
    d: &Dataset,
    mode: &FailureMode,
    reference: &Reference,
    modes: &[FailureMode],
    top_n: usize,
) -> Result<KsReport> {
    let ref_members: Vec<usize> = match reference {
        Reference::Dataset => (0..d.row_count()).collect(),
        Reference::Rest => {
            let inside: BTreeSet<usize> = mode.members.iter().copied().collect();
            (0..d.row_count()).filter(|r| !inside.contains(r)).collect()
        }
        Reference::Mode(id) => modes
            .iter()
            .find(|m| m.id == *id)
            .ok_or_else(|| Error::Argument(format!("unknown reference mode {id}")))?
            .members
            .clone(),
    };
    let features = rank_features(d, &mode.members, &ref_members, top_n)?;
    Ok(KsReport {
        mode: mode.id,
        reference: reference.clone(),
        features,
    })
}
