//! Mapper graph construction.
//!
//! Filters stratify the dataset through an overlapping interval cover; each
//! pullback cell is split by single-linkage clustering; the clusters become
//! nodes, joined whenever their member sets intersect.

mod cluster;
mod cover;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, MetricSpec};
use crate::error::{Error, Result};
use crate::filters::{compute_filter, FilterSpec, FilterValues};

pub use cluster::{
    cut_tree, histogram_cutoff, single_linkage, single_linkage_at, single_linkage_tree, Merge,
};
pub use cover::{build_cover, pullback_cells, Cell, CoverSpec, Interval};

pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_MAX_CELL_SIZE: usize = 20_000;

/// `(s_1, …, s_k; j)`: the interval index per filter plus the cluster index
/// within that cell (both counted from 1).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeAddress {
    pub cell: Vec<usize>,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperNode {
    pub id: usize,
    pub address: NodeAddress,
    pub members: Vec<usize>,
    /// Mean of every metadata field over the members.
    pub stats: BTreeMap<String, f64>,
}

impl MapperNode {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub shared_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperGraph {
    pub nodes: Vec<MapperNode>,
    pub edges: Vec<Edge>,
}

impl MapperGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: usize) -> Option<&MapperNode> {
        self.nodes.get(id).filter(|n| n.id == id)
    }

    /// Number of connected components.
    pub fn components(&self) -> usize {
        let mut uf = crate::unionfind::UnionFind::new(self.nodes.len());
        for e in &self.edges {
            uf.union(e.source, e.target);
        }
        uf.components()
    }

    /// Independent cycles of the graph, `E − V + C`.
    pub fn cycle_rank(&self) -> usize {
        self.edges.len() + self.components() - self.nodes.len()
    }

    /// Fraction of `row_count` rows that appear in at least one node.
    pub fn coverage(&self, row_count: usize) -> f64 {
        if row_count == 0 {
            return 0.0;
        }
        let mut seen = vec![false; row_count];
        for n in &self.nodes {
            for &m in &n.members {
                if m < row_count {
                    seen[m] = true;
                }
            }
        }
        seen.iter().filter(|&&s| s).count() as f64 / row_count as f64
    }
}

/// Joins every pair of nodes whose member sets intersect, recording the size
/// of the intersection. Node ids must equal their positions.
pub fn nerve(nodes: Vec<MapperNode>) -> MapperGraph {
    let n_rows = nodes
        .iter()
        .flat_map(|n| n.members.iter())
        .max()
        .map_or(0, |m| m + 1);
    let mut containing: Vec<Vec<usize>> = vec![Vec::new(); n_rows];
    for node in &nodes {
        for &m in &node.members {
            containing[m].push(node.id);
        }
    }
    let mut shared: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for ids in &containing {
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                let key = if a < b { (a, b) } else { (b, a) };
                *shared.entry(key).or_default() += 1;
            }
        }
    }
    let edges = shared
        .into_iter()
        .map(|((source, target), shared_count)| Edge {
            source,
            target,
            shared_count,
        })
        .collect();
    MapperGraph { nodes, edges }
}

/// Parameters for [`build_mapper`]. `covers[i]` applies to `filters[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperParams {
    pub filters: Vec<FilterSpec>,
    pub covers: Vec<CoverSpec>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_max_cell")]
    pub max_cell_size: usize,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

fn default_max_cell() -> usize {
    DEFAULT_MAX_CELL_SIZE
}

impl MapperParams {
    pub fn new(filters: Vec<FilterSpec>, covers: Vec<CoverSpec>) -> Self {
        MapperParams {
            filters,
            covers,
            bins: DEFAULT_BINS,
            max_cell_size: DEFAULT_MAX_CELL_SIZE,
        }
    }
}

/// Computes the filters and builds the Mapper graph.
pub fn build_mapper(d: &Dataset, metric: &MetricSpec, params: &MapperParams) -> Result<MapperGraph> {
    if params.filters.is_empty() {
        return Err(Error::Config("at least one filter is required".into()));
    }
    if params.filters.len() != params.covers.len() {
        return Err(Error::Config(format!(
            "{} filters but {} covers",
            params.filters.len(),
            params.covers.len()
        )));
    }
    let values = params
        .filters
        .iter()
        .map(|f| compute_filter(d, f))
        .collect::<Result<Vec<_>>>()?;
    build_mapper_from_values(d, metric, &values, &params.covers, params.bins, params.max_cell_size)
}

/// Builds the Mapper graph from precomputed filter values.
///
/// Cells are clustered in parallel; node ids follow the lexicographic order of
/// `(cell address, cluster index)` regardless of scheduling.
pub fn build_mapper_from_values(
    d: &Dataset,
    metric: &MetricSpec,
    filters: &[FilterValues],
    covers: &[CoverSpec],
    bins: usize,
    max_cell_size: usize,
) -> Result<MapperGraph> {
    metric.validate(d)?;
    if bins == 0 {
        return Err(Error::Config("histogram bins must be positive".into()));
    }
    if filters.iter().any(|f| f.len() != d.row_count()) {
        return Err(Error::Config("filter length differs from the row count".into()));
    }
    let intervals = filters
        .iter()
        .zip(covers)
        .map(|(f, c)| build_cover(f.range, *c))
        .collect::<Result<Vec<_>>>()?;
    let cells = pullback_cells(filters, &intervals)?;
    if let Some(big) = cells.iter().find(|c| c.members.len() > max_cell_size) {
        return Err(Error::CellTooLarge {
            address: big.address.clone(),
            size: big.members.len(),
            limit: max_cell_size,
        });
    }

    let clustered: Vec<Vec<Vec<usize>>> = cells
        .par_iter()
        .map(|cell| single_linkage(&cell.members, d, metric, bins))
        .collect();

    let meta = d.meta();
    let fields: Vec<(String, Vec<f64>)> = meta
        .field_names()
        .into_iter()
        .map(|name| {
            let v = meta.field(&name).expect("listed field exists");
            (name, v)
        })
        .collect();

    let mut nodes = Vec::new();
    for (cell, clusters) in cells.iter().zip(clustered) {
        for (j, members) in clusters.into_iter().enumerate() {
            let stats = fields
                .iter()
                .map(|(name, v)| {
                    let mean = members.iter().map(|&m| v[m]).sum::<f64>() / members.len() as f64;
                    (name.clone(), mean)
                })
                .collect();
            nodes.push(MapperNode {
                id: nodes.len(),
                address: NodeAddress {
                    cell: cell.address.clone(),
                    cluster: j + 1,
                },
                members,
                stats,
            });
        }
    }
    Ok(nerve(nodes))
}
