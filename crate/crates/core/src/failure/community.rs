//! Supervision-weighted community detection on a Mapper graph.
//!
//! Edges are weighted by how close the supervision means of their endpoints
//! are. An agglomerative single-linkage tree over `1 − w` picks the
//! modularity-optimal cut, and Louvain refines that partition.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapper::MapperGraph;
use crate::unionfind::UnionFind;

const TIE_EPS: f64 = 1e-12;

/// A Mapper graph's topology with supervision-derived edge weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedGraph {
    pub node_count: usize,
    /// `(source, target, weight)`, aligned with the source graph's edges.
    pub edges: Vec<(usize, usize, f64)>,
    /// Mean supervision value per node.
    pub node_means: Vec<f64>,
}

impl WeightedGraph {
    pub fn new(node_count: usize, edges: Vec<(usize, usize, f64)>) -> Self {
        WeightedGraph {
            node_count,
            edges,
            node_means: Vec::new(),
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.2).sum()
    }
}

/// Weights each edge `1 − |μ_u − μ_v| / M`, with `M` the largest mean
/// difference over all edges (all weights are 1 when `M = 0`).
pub fn weight_edges(g: &MapperGraph, supervision: &[f64]) -> Result<WeightedGraph> {
    let mut node_means = Vec::with_capacity(g.nodes.len());
    for node in &g.nodes {
        if node.members.is_empty() {
            return Err(Error::Argument(format!("node {} has no members", node.id)));
        }
        let mut sum = 0.0;
        for &m in &node.members {
            sum += *supervision.get(m).ok_or_else(|| {
                Error::Argument(format!(
                    "supervision has {} values but node {} contains row {m}",
                    supervision.len(),
                    node.id
                ))
            })?;
        }
        node_means.push(sum / node.members.len() as f64);
    }
    let diffs: Vec<f64> = g
        .edges
        .iter()
        .map(|e| (node_means[e.source] - node_means[e.target]).abs())
        .collect();
    let max = diffs.iter().copied().fold(0.0, f64::max);
    let edges = g
        .edges
        .iter()
        .zip(&diffs)
        .map(|(e, d)| {
            let w = if max > 0.0 { 1.0 - d / max } else { 1.0 };
            (e.source, e.target, w)
        })
        .collect();
    Ok(WeightedGraph {
        node_count: g.nodes.len(),
        edges,
        node_means,
    })
}

/// Weighted Newman modularity of the partition given by `labels`.
///
/// `Q = Σ_c [ L_c / m − (D_c / 2m)² ]` with `L_c` the weight inside community
/// `c`, `D_c` its total degree and `m` the total edge weight. Zero when the
/// graph carries no weight.
pub fn modularity(node_count: usize, edges: &[(usize, usize, f64)], labels: &[usize]) -> f64 {
    let m: f64 = edges.iter().map(|e| e.2).sum();
    if !(m > 0.0) {
        return 0.0;
    }
    let k = labels.iter().copied().max().map_or(0, |x| x + 1);
    let mut inside = vec![0.0; k];
    let mut degree = vec![0.0; k];
    debug_assert_eq!(labels.len(), node_count);
    for &(u, v, w) in edges {
        degree[labels[u]] += w;
        degree[labels[v]] += w;
        if labels[u] == labels[v] {
            inside[labels[u]] += w;
        }
    }
    inside
        .iter()
        .zip(&degree)
        .map(|(l, d)| l / m - (d / (2.0 * m)).powi(2))
        .sum()
}

/// Relabels so that labels appear in increasing order of first node.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Groups of node ids, one per label, ordered by smallest node id.
pub fn labels_to_parts(labels: &[usize]) -> Vec<Vec<usize>> {
    let canon = canonical_labels(labels);
    let k = canon.iter().copied().max().map_or(0, |x| x + 1);
    let mut parts = vec![Vec::new(); k];
    for (node, l) in canon.into_iter().enumerate() {
        parts[l].push(node);
    }
    parts
}

/// One candidate cut of the agglomerative tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeCut {
    /// Merge height of the cut (`−∞` before any merge, `+∞` for the cut
    /// that joins separate components).
    pub level: f64,
    pub labels: Vec<usize>,
    pub clusters: usize,
    pub modularity: f64,
}

/// Every cut of the single-linkage tree over node distances `1 − w`
/// (non-adjacent nodes are infinitely far apart), lowest level first.
pub fn ahcl_cuts(wg: &WeightedGraph) -> Vec<TreeCut> {
    let n = wg.node_count;
    let mut order: Vec<usize> = (0..wg.edges.len()).collect();
    order.sort_by(|&a, &b| {
        let da = 1.0 - wg.edges[a].2;
        let db = 1.0 - wg.edges[b].2;
        da.total_cmp(&db).then(a.cmp(&b))
    });

    let mut uf = UnionFind::new(n);
    let cut = |level: f64, uf: &mut UnionFind| {
        let labels = uf.labels();
        TreeCut {
            level,
            modularity: modularity(n, &wg.edges, &labels),
            clusters: uf.components(),
            labels,
        }
    };
    let mut cuts = vec![cut(f64::NEG_INFINITY, &mut uf)];
    let mut i = 0;
    while i < order.len() {
        let level = 1.0 - wg.edges[order[i]].2;
        let mut merged = false;
        while i < order.len() && 1.0 - wg.edges[order[i]].2 == level {
            let (u, v, _) = wg.edges[order[i]];
            merged |= uf.union(u, v);
            i += 1;
        }
        if merged {
            cuts.push(cut(level, &mut uf));
        }
    }
    if uf.components() > 1 {
        for v in 1..n {
            uf.union(0, v);
        }
        cuts.push(cut(f64::INFINITY, &mut uf));
    }
    cuts
}

/// The modularity-maximizing cut of the agglomerative tree. Ties go to fewer
/// clusters, then to the lower level; the cut at `+∞` (joining disconnected
/// components) must win outright. Returns one label per node.
pub fn ahcl_partition(wg: &WeightedGraph) -> Vec<usize> {
    let cuts = ahcl_cuts(wg);
    let mut best = &cuts[0];
    for c in &cuts[1..] {
        let tie = (c.modularity - best.modularity).abs() <= TIE_EPS;
        let better = c.modularity > best.modularity + TIE_EPS
            || (tie && c.clusters < best.clusters && c.level.is_finite());
        if better {
            best = c;
        }
    }
    canonical_labels(&best.labels)
}

/// Graph representation used during Louvain passes; aggregated communities
/// keep their internal weight as a self-loop.
struct LevelGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
    degree: Vec<f64>,
}

impl LevelGraph {
    fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut acc: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        let mut self_loop = vec![0.0; n];
        for &(u, v, w) in edges {
            if u == v {
                self_loop[u] += w;
            } else {
                *acc[u].entry(v).or_default() += w;
                *acc[v].entry(u).or_default() += w;
            }
        }
        Self::from_maps(acc, self_loop)
    }

    fn from_maps(acc: Vec<BTreeMap<usize, f64>>, self_loop: Vec<f64>) -> Self {
        let adj: Vec<Vec<(usize, f64)>> = acc.into_iter().map(|m| m.into_iter().collect()).collect();
        let degree = adj
            .iter()
            .zip(&self_loop)
            .map(|(nbrs, s)| nbrs.iter().map(|x| x.1).sum::<f64>() + 2.0 * s)
            .collect();
        LevelGraph {
            adj,
            self_loop,
            degree,
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    /// Moves nodes (ascending id) to the neighbouring community with the
    /// largest modularity gain until a full pass makes no move. Returns
    /// whether anything moved.
    fn local_moves(&self, comm: &mut [usize], two_m: f64) -> bool {
        let n = self.len();
        let k = comm.iter().copied().max().map_or(0, |x| x + 1).max(n);
        let mut tot = vec![0.0; k];
        for i in 0..n {
            tot[comm[i]] += self.degree[i];
        }
        let mut moved_any = false;
        let mut w_to: BTreeMap<usize, f64> = BTreeMap::new();
        loop {
            let mut moved = false;
            for i in 0..n {
                let own = comm[i];
                let ki = self.degree[i];
                tot[own] -= ki;
                w_to.clear();
                w_to.insert(own, 0.0);
                for &(j, w) in &self.adj[i] {
                    *w_to.entry(comm[j]).or_default() += w;
                }
                // Gain of inserting i into c, up to a positive factor.
                let gain = |c: usize, w: f64| w - tot[c] * ki / two_m;
                let mut best = own;
                let mut best_gain = gain(own, w_to[&own]);
                for (&c, &w) in &w_to {
                    let g = gain(c, w);
                    if g > best_gain + TIE_EPS {
                        best = c;
                        best_gain = g;
                    }
                }
                tot[best] += ki;
                if best != own {
                    comm[i] = best;
                    moved = true;
                    moved_any = true;
                }
            }
            if !moved {
                break;
            }
        }
        moved_any
    }

    fn aggregate(&self, comm: &[usize]) -> (LevelGraph, Vec<usize>) {
        let labels = canonical_labels(comm);
        let k = labels.iter().copied().max().map_or(0, |x| x + 1);
        let mut acc: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
        let mut self_loop = vec![0.0; k];
        for i in 0..self.len() {
            let ci = labels[i];
            self_loop[ci] += self.self_loop[i];
            for &(j, w) in &self.adj[i] {
                let cj = labels[j];
                if ci == cj {
                    // Each internal edge is visited from both ends.
                    self_loop[ci] += w / 2.0;
                } else {
                    *acc[ci].entry(cj).or_default() += w;
                }
            }
        }
        (Self::from_maps(acc, self_loop), labels)
    }
}

/// Louvain modularity optimization started from the partition `initial`
/// (one label per node). Local moves visit nodes in ascending id order.
/// Returns canonical labels; modularity never drops below that of `initial`.
pub fn louvain_from(wg: &WeightedGraph, initial: &[usize]) -> Vec<usize> {
    let n = wg.node_count;
    assert_eq!(initial.len(), n, "initial partition must label every node");
    let two_m = 2.0 * wg.total_weight();
    if n == 0 || !(two_m > 0.0) {
        return canonical_labels(initial);
    }
    let mut graph = LevelGraph::from_edges(n, &wg.edges);
    // membership[v] = community of original node v at the current level.
    let mut membership: Vec<usize> = (0..n).collect();
    let mut comm = canonical_labels(initial);
    let mut first = true;
    loop {
        let moved = graph.local_moves(&mut comm, two_m);
        let (next, labels) = graph.aggregate(&comm);
        for m in membership.iter_mut() {
            *m = labels[*m];
        }
        let shrank = next.len() < graph.len();
        if !first && !moved {
            break;
        }
        if !shrank && !moved {
            break;
        }
        first = false;
        graph = next;
        comm = (0..graph.len()).collect();
    }
    canonical_labels(&membership)
}

/// Louvain initialized from the modularity-optimal AHCL cut. A coarse start
/// can trap single-node moves, so a singleton start is run as well and the
/// higher-modularity result kept (ties favour the AHCL start).
pub fn louvain(wg: &WeightedGraph) -> Vec<usize> {
    let n = wg.node_count;
    let from_tree = louvain_from(wg, &ahcl_partition(wg));
    let from_singletons = louvain_from(wg, &(0..n).collect::<Vec<_>>());
    let q_tree = modularity(n, &wg.edges, &from_tree);
    if modularity(n, &wg.edges, &from_singletons) > q_tree + TIE_EPS {
        from_singletons
    } else {
        from_tree
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clique_pair() -> WeightedGraph {
        let mut edges = Vec::new();
        for base in [0, 5] {
            for i in 0..5 {
                for j in i + 1..5 {
                    edges.push((base + i, base + j, 1.0));
                }
            }
        }
        edges.push((4, 5, 0.0));
        WeightedGraph::new(10, edges)
    }

    #[test]
    fn weights_on_a_path() {
        use crate::mapper::{nerve, MapperNode, NodeAddress};
        // Four singleton-ish nodes in a path, consecutive nodes share one row.
        let members = [vec![0, 1], vec![1, 2], vec![2, 3], vec![3, 4]];
        let nodes = members
            .iter()
            .enumerate()
            .map(|(id, m)| MapperNode {
                id,
                address: NodeAddress { cell: vec![id + 1], cluster: 1 },
                members: m.clone(),
                stats: Default::default(),
            })
            .collect();
        let g = nerve(nodes);
        // Node means 0.0, 0.1, 0.3, 0.7: path differences 0.1, 0.2, 0.4.
        let sup = [0.0, 0.0, 0.2, 0.4, 1.0];
        let wg = weight_edges(&g, &sup).unwrap();
        let means = [0.0, 0.1, 0.3, 0.7];
        for (a, b) in wg.node_means.iter().zip(means) {
            assert!((a - b).abs() < 1e-12);
        }
        let w: Vec<f64> = wg.edges.iter().map(|e| e.2).collect();
        let want = [0.75, 0.5, 0.0];
        for (a, b) in w.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{w:?}");
        }
    }

    #[test]
    fn equal_means_give_unit_weights() {
        let g = crate::mapper::nerve(vec![
            crate::mapper::MapperNode {
                id: 0,
                address: crate::mapper::NodeAddress { cell: vec![1], cluster: 1 },
                members: vec![0, 1],
                stats: Default::default(),
            },
            crate::mapper::MapperNode {
                id: 1,
                address: crate::mapper::NodeAddress { cell: vec![2], cluster: 1 },
                members: vec![1, 2],
                stats: Default::default(),
            },
        ]);
        let wg = weight_edges(&g, &[0.3, 0.3, 0.3]).unwrap();
        assert_eq!(wg.edges, vec![(0, 1, 1.0)]);
        let wg = weight_edges(&g, &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(wg.edges, vec![(0, 1, 0.0)]);
    }

    #[test]
    fn modularity_single_edge() {
        let e = [(0, 1, 1.0)];
        assert!((modularity(2, &e, &[0, 1]) + 0.5).abs() < 1e-15);
        assert!(modularity(2, &e, &[0, 0]).abs() < 1e-15);
    }

    #[test]
    fn ahcl_two_cliques() {
        let wg = clique_pair();
        let labels = ahcl_partition(&wg);
        assert_eq!(labels, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn ahcl_edgeless_and_single() {
        let wg = WeightedGraph::new(4, vec![]);
        assert_eq!(ahcl_partition(&wg), vec![0, 1, 2, 3]);
        let wg = WeightedGraph::new(1, vec![]);
        assert_eq!(ahcl_partition(&wg), vec![0]);
    }

    #[test]
    fn louvain_single_edge_merges() {
        let wg = WeightedGraph::new(2, vec![(0, 1, 1.0)]);
        assert_eq!(louvain_from(&wg, &[0, 1]), vec![0, 0]);
        assert_eq!(louvain(&wg), vec![0, 0]);
    }

    #[test]
    fn louvain_keeps_optimal_init() {
        let wg = clique_pair();
        let init = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        assert_eq!(louvain_from(&wg, &init), init);
    }

    #[test]
    fn louvain_two_blocks_with_bridge() {
        let mut wg = clique_pair();
        wg.edges.last_mut().unwrap().2 = 0.2;
        let labels = louvain_from(&wg, &(0..10).collect::<Vec<_>>());
        assert_eq!(labels, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn labels_to_parts_orders_by_first_node() {
        assert_eq!(labels_to_parts(&[2, 0, 2, 1]), vec![vec![0, 2], vec![1], vec![3]]);
    }
}
