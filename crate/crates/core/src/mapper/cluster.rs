//! Single-linkage clustering of a cell with a histogram-gap cutoff.

use crate::dataset::{euclid, Dataset, MetricSpec};
use crate::unionfind::UnionFind;

/// An edge of the single-linkage tree, by local point index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
}

/// Minimum spanning tree of the complete distance graph on `n` packed points
/// (`dim` coordinates each), sorted by distance.
///
/// The edge weights are exactly the single-linkage merge heights. Prim's
/// algorithm keeps memory at O(n) while visiting every pair once.
pub fn single_linkage_tree(points: &[f64], dim: usize) -> Vec<Merge> {
    let n = if dim == 0 { 0 } else { points.len() / dim };
    if n < 2 {
        return Vec::new();
    }
    let pt = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![0usize; n];
    let mut merges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let here = pt(current);
        let mut next = usize::MAX;
        let mut next_d = f64::INFINITY;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let d = euclid(here, pt(j));
            if d < best[j] {
                best[j] = d;
                parent[j] = current;
            }
            if best[j] < next_d || next == usize::MAX {
                next_d = best[j];
                next = j;
            }
        }
        in_tree[next] = true;
        merges.push(Merge {
            a: parent[next],
            b: next,
            distance: next_d,
        });
        current = next;
    }
    merges.sort_by(|x, y| x.distance.total_cmp(&y.distance));
    merges
}

/// Histogram gap heuristic for the single-linkage cutoff.
///
/// Bins the merge distances into `bins` equal-width bins over `[0, max]` and
/// returns the left edge of the first empty bin that follows a nonempty one.
/// `None` when there is no such bin (including empty input and `max = 0`).
pub fn histogram_cutoff(merge_distances: &[f64], bins: usize) -> Option<f64> {
    if merge_distances.is_empty() || bins == 0 {
        return None;
    }
    let max = merge_distances.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return None;
    }
    let width = max / bins as f64;
    let mut counts = vec![0usize; bins];
    for &d in merge_distances {
        let i = ((d / width).floor() as usize).min(bins - 1);
        counts[i] += 1;
    }
    let first = counts.iter().position(|&c| c > 0)?;
    counts[first..]
        .iter()
        .position(|&c| c == 0)
        .map(|off| (first + off) as f64 * width)
}

/// Components of the tree after dropping every edge of length `>= cutoff`,
/// as sorted lists of local indices ordered by their smallest element.
pub fn cut_tree(n: usize, merges: &[Merge], cutoff: Option<f64>) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(n);
    for m in merges {
        if cutoff.is_none_or(|t| m.distance < t) {
            uf.union(m.a, m.b);
        }
    }
    uf.groups()
}

/// Clusters `members` (row ids) of `d` by single linkage, cutting the tree at
/// the histogram gap. Clusters are returned as ascending row-id lists ordered
/// by their smallest row id.
pub fn single_linkage(members: &[usize], d: &Dataset, metric: &MetricSpec, bins: usize) -> Vec<Vec<usize>> {
    if members.len() <= 1 {
        return vec![members.to_vec()];
    }
    let points = metric.embed(d, members);
    let merges = single_linkage_tree(&points, metric.dim());
    let heights: Vec<f64> = merges.iter().map(|m| m.distance).collect();
    let cutoff = histogram_cutoff(&heights, bins);
    to_rows(members, cut_tree(members.len(), &merges, cutoff))
}

/// Single linkage at a fixed cutoff: components of the graph joining members
/// closer than `cutoff`.
pub fn single_linkage_at(members: &[usize], d: &Dataset, metric: &MetricSpec, cutoff: f64) -> Vec<Vec<usize>> {
    if members.len() <= 1 {
        return vec![members.to_vec()];
    }
    let points = metric.embed(d, members);
    let merges = single_linkage_tree(&points, metric.dim());
    to_rows(members, cut_tree(members.len(), &merges, Some(cutoff)))
}

fn to_rows(members: &[usize], groups: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = groups
        .into_iter()
        .map(|g| {
            let mut rows: Vec<usize> = g.into_iter().map(|i| members[i]).collect();
            rows.sort_unstable();
            rows
        })
        .collect();
    out.sort_by_key(|g| g[0]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Meta, TaskKind};

    fn ds(rows: Vec<Vec<f64>>) -> Dataset {
        let n = rows.len();
        let p = rows[0].len();
        let meta = Meta::new(TaskKind::Classification, vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        Dataset::from_rows((0..p).map(|c| format!("x{c}")).collect(), rows, meta).unwrap()
    }

    #[test]
    fn cutoff_example() {
        let c = histogram_cutoff(&[0.1, 0.2, 9.9], 10).unwrap();
        assert!((c - 0.99).abs() < 1e-12, "{c}");
    }

    #[test]
    fn cutoff_none_cases() {
        let uniform: Vec<f64> = (1..=10).map(|i| i as f64 - 0.5).collect();
        assert_eq!(histogram_cutoff(&uniform, 10), None);
        assert_eq!(histogram_cutoff(&[], 10), None);
        assert_eq!(histogram_cutoff(&[0.0, 0.0], 10), None);
        assert_eq!(histogram_cutoff(&[1.0, 5.0], 1), None);
    }

    #[test]
    fn leading_empty_bins_do_not_cut() {
        // Every merge distance is close to the maximum: one tight chain.
        let d = [0.95, 0.97, 0.99, 1.0];
        assert_eq!(histogram_cutoff(&d, 10), None);
    }

    #[test]
    fn two_blobs() {
        let mut rows = Vec::new();
        for i in 0..10 {
            let t = i as f64 * 0.1;
            rows.push(vec![t, 0.05 * (i % 3) as f64]);
        }
        for i in 0..10 {
            let t = i as f64 * 0.1;
            rows.push(vec![20.0 + t, 0.05 * (i % 2) as f64]);
        }
        let d = ds(rows);
        let m = MetricSpec::euclidean(&d);
        let members: Vec<usize> = (0..20).collect();
        let clusters = single_linkage(&members, &d, &m, 10);
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0], (0..10).collect::<Vec<_>>());
        assert_eq!(clusters[1], (10..20).collect::<Vec<_>>());
    }

    #[test]
    fn one_point() {
        let d = ds(vec![vec![1.0, 2.0]]);
        let m = MetricSpec::euclidean(&d);
        assert_eq!(single_linkage(&[0], &d, &m, 10), vec![vec![0]]);
    }

    #[test]
    fn equal_distances_stay_together() {
        // Vertices of a regular simplex: all pairwise distances equal.
        let d = ds(vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ]);
        let m = MetricSpec::euclidean(&d);
        assert_eq!(single_linkage(&[0, 1, 2, 3], &d, &m, 10), vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn tree_is_minimal() {
        // Points on a line: MST edges are consecutive gaps.
        let xs = [0.0, 1.0, 3.0, 6.0, 10.0];
        let pts: Vec<f64> = xs.to_vec();
        let t = single_linkage_tree(&pts, 1);
        let got: Vec<f64> = t.iter().map(|m| m.distance).collect();
        assert_eq!(got, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn fixed_cutoff_is_strict() {
        let d = ds(vec![vec![0.0], vec![1.0], vec![2.5]]);
        let m = MetricSpec::euclidean(&d);
        assert_eq!(single_linkage_at(&[0, 1, 2], &d, &m, 1.0), vec![vec![0], vec![1], vec![2]]);
        assert_eq!(single_linkage_at(&[0, 1, 2], &d, &m, 1.5), vec![vec![0, 1], vec![2]]);
    }
}
