//! Independent reference implementations used by the integration tests and
//! the acceptance run. Written for clarity, not speed.
#![allow(dead_code)]

use std::collections::BTreeMap;

use failmap::dataset::{Dataset, Meta, TaskKind};
use failmap::mapper::MapperGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform features in `[-1, 1]`, random binary labels and error values.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, dims: usize) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dims).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let gt: Vec<f64> = (0..n).map(|_| rng.random_range(0..2) as f64).collect();
    let pred: Vec<f64> = (0..n).map(|_| rng.random_range(0..2) as f64).collect();
    let err: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let meta = Meta::new(TaskKind::Classification, gt, pred, err);
    Dataset::from_rows((0..dims).map(|j| format!("f{j}")).collect(), rows, meta).unwrap()
}

/// Population variance of each column.
pub fn variances(d: &Dataset) -> Vec<f64> {
    let n = d.row_count() as f64;
    (0..d.col_count())
        .map(|c| {
            let col = d.column(c);
            let mean = col.iter().sum::<f64>() / n;
            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
        })
        .collect()
}

/// Variance-normalized distance straight from its definition.
pub fn vne(d: &Dataset, var: &[f64], i: usize, j: usize) -> f64 {
    (0..d.col_count())
        .filter(|&c| var[c] > 0.0)
        .map(|c| (d.value(i, c) - d.value(j, c)).powi(2) / var[c])
        .sum::<f64>()
        .sqrt()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        x = parent[x];
    }
    x
}

/// Components of the graph on `0..n` with the given edges, as sorted lists.
pub fn components(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort();
    out
}

/// Kruskal over all pairs: the single-linkage merge heights.
pub fn merge_heights(dist: &[Vec<f64>]) -> Vec<f64> {
    let n = dist.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((dist[i][j], i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut parent: Vec<usize> = (0..n).collect();
    let mut heights = Vec::new();
    for (d, i, j) in pairs {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            heights.push(d);
        }
    }
    heights
}

/// First empty histogram bin after the first occupied one, over `[0, max]`.
pub fn gap_cutoff(heights: &[f64], bins: usize) -> Option<f64> {
    let max = heights.iter().copied().fold(0.0, f64::max);
    if heights.is_empty() || max <= 0.0 {
        return None;
    }
    let width = max / bins as f64;
    let occupied: Vec<bool> = (0..bins)
        .map(|b| {
            heights.iter().any(|&h| {
                let idx = ((h / width).floor() as usize).min(bins - 1);
                idx == b
            })
        })
        .collect();
    let first = occupied.iter().position(|&o| o)?;
    (first..bins).find(|&b| !occupied[b]).map(|b| b as f64 * width)
}

/// Nodes and edges of a Mapper graph in an id-free form: sorted member
/// lists, and sorted `(members, members, shared)` triples.
pub type Signature = (Vec<Vec<usize>>, Vec<(Vec<usize>, Vec<usize>, usize)>);

pub fn signature(g: &MapperGraph) -> Signature {
    let mut nodes: Vec<Vec<usize>> = g.nodes.iter().map(|n| n.members.clone()).collect();
    nodes.sort();
    let mut edges: Vec<_> = g
        .edges
        .iter()
        .map(|e| {
            let a = g.nodes[e.source].members.clone();
            let b = g.nodes[e.target].members.clone();
            if a <= b {
                (a, b, e.shared_count)
            } else {
                (b, a, e.shared_count)
            }
        })
        .collect();
    edges.sort();
    (nodes, edges)
}

/// Brute-force Mapper: interval membership from the cover formula, every
/// index tuple as a cell, all-pairs single linkage, all-pairs intersections.
pub fn oracle_mapper(d: &Dataset, filters: &[Vec<f64>], covers: &[(usize, f64)], bins: usize) -> Signature {
    let n = d.row_count();
    let var = variances(d);
    // hits[i][row] = interval indices of filter i containing the row.
    let hits: Vec<Vec<Vec<usize>>> = filters
        .iter()
        .zip(covers)
        .map(|(f, &(k, p))| {
            let a = f.iter().copied().fold(f64::INFINITY, f64::min);
            let b = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            f.iter()
                .map(|&v| {
                    if a == b {
                        return vec![1];
                    }
                    let delta = (b - a) / k as f64;
                    (1..=k)
                        .filter(|&s| {
                            let lo = a + (s as f64 - 1.0 - p / 2.0) * delta;
                            let hi = a + (s as f64 + p / 2.0) * delta;
                            lo <= v && v <= hi
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    // Enumerate every index tuple.
    let mut tuples: Vec<Vec<usize>> = vec![vec![]];
    for (_, &(k, _)) in filters.iter().zip(covers) {
        let mut next = Vec::new();
        for t in &tuples {
            for s in 1..=k {
                let mut u = t.clone();
                u.push(s);
                next.push(u);
            }
        }
        tuples = next;
    }
    let mut nodes: Vec<Vec<usize>> = Vec::new();
    for t in &tuples {
        let members: Vec<usize> = (0..n)
            .filter(|&r| t.iter().enumerate().all(|(i, s)| hits[i][r].contains(s)))
            .collect();
        if members.is_empty() {
            continue;
        }
        let m = members.len();
        let dist: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| vne(d, &var, members[i], members[j])).collect())
            .collect();
        let cutoff = gap_cutoff(&merge_heights(&dist), bins);
        let mut close = Vec::new();
        for i in 0..m {
            for j in i + 1..m {
                if cutoff.is_none_or(|c| dist[i][j] < c) {
                    close.push((i, j));
                }
            }
        }
        for comp in components(m, close.into_iter()) {
            nodes.push(comp.into_iter().map(|i| members[i]).collect());
        }
    }
    let mut edges = Vec::new();
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            let shared = nodes[i].iter().filter(|x| nodes[j].contains(x)).count();
            if shared > 0 {
                let (a, b) = if nodes[i] <= nodes[j] {
                    (nodes[i].clone(), nodes[j].clone())
                } else {
                    (nodes[j].clone(), nodes[i].clone())
                };
                edges.push((a, b, shared));
            }
        }
    }
    nodes.sort();
    edges.sort();
    (nodes, edges)
}

/// Two-sample KS statistic by evaluating both empirical CDFs at every
/// sample point.
pub fn ks_oracle(a: &[f64], b: &[f64]) -> f64 {
    let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    a.iter()
        .chain(b)
        .map(|&x| (cdf(a, x) - cdf(b, x)).abs())
        .fold(0.0, f64::max)
}

/// `Q = (1/2m) Σ_ij [A_ij − k_i k_j / 2m] δ(c_i, c_j)` from the adjacency
/// matrix.
pub fn modularity_oracle(n: usize, edges: &[(usize, usize, f64)], labels: &[usize]) -> f64 {
    let mut a = vec![vec![0.0; n]; n];
    for &(u, v, w) in edges {
        a[u][v] += w;
        a[v][u] += w;
    }
    let k: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q += a[i][j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Every set partition of `0..n` as a restricted growth string.
pub fn partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, cur: &mut Vec<usize>, max: usize, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for l in 0..=max + 1 {
            cur.push(l);
            rec(i + 1, n, cur, max.max(l), out);
            cur.pop();
        }
    }
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let mut cur = vec![0];
    rec(1, n, &mut cur, 0, &mut out);
    out
}

pub fn best_modularity(n: usize, edges: &[(usize, usize, f64)]) -> f64 {
    partitions(n)
        .iter()
        .map(|p| modularity_oracle(n, edges, p))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// A connected graph on `n` nodes: a random spanning tree plus extra edges,
/// weights in `[0.05, 1]`.
pub fn random_connected_graph(rng: &mut ChaCha8Rng, n: usize, extra: f64) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.push((u, v, rng.random_range(0.05..1.0)));
    }
    for u in 0..n {
        for v in u + 1..n {
            let present = edges.iter().any(|&(a, b, _)| (a, b) == (u, v));
            if !present && rng.random_bool(extra) {
                edges.push((u, v, rng.random_range(0.05..1.0)));
            }
        }
    }
    edges
}

/// Central finite-difference gradient.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[j] += h;
            m[j] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Path to a file in this crate's `fixtures/` directory.
pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// A fixture config loaded and rebased so that its dataset resolves, with
/// output left to the caller.
pub fn fixture_config(name: &str) -> failmap::pipeline::PipelineConfig {
    let mut c = failmap::pipeline::PipelineConfig::load(&fixture(name)).unwrap();
    c.output = None;
    c
}

/// How well one fold's failure modes recover the planted rows of its
/// training set: `(coverage, contamination)`. Planted rows are those not
/// flagged clean.
pub fn planted_recovery(fold: &failmap::pipeline::FoldOutcome) -> (f64, f64) {
    let meta = fold.data.train.meta();
    let n = fold.data.train.row_count();
    let planted: Vec<bool> = (0..n).map(|r| meta.is_clean(r) == Some(false)).collect();
    let mut captured = vec![false; n];
    for m in &fold.modes.modes {
        for &r in &m.members {
            captured[r] = true;
        }
    }
    let total_planted = planted.iter().filter(|&&p| p).count();
    let hit = (0..n).filter(|&r| captured[r] && planted[r]).count();
    let size = captured.iter().filter(|&&c| c).count();
    let coverage = hit as f64 / total_planted.max(1) as f64;
    let contamination = if size == 0 { 0.0 } else { (size - hit) as f64 / size as f64 };
    (coverage, contamination)
}

/// Every file under `dir` except timings, as `(relative path, bytes)`.
pub fn artifact_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if p.file_name().unwrap() != failmap::pipeline::TIMINGS_FILE {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

/// Norm-wise relative error between the analytic objective gradient and
/// central differences, on a random problem drawn from `seed`.
pub fn gradient_relative_error(loss: failmap::correction::LinearLoss, seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, dim) = (r.random_range(5..40), r.random_range(1..6));
    let x: Vec<f64> = (0..n * dim).map(|_| r.random_range(-2.0..2.0)).collect();
    let y: Vec<f64> = (0..n).map(|_| if r.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    let weights: Vec<f64> = (0..n).map(|_| r.random_range(0.5..2.0)).collect();
    let theta: Vec<f64> = (0..=dim).map(|_| r.random_range(-1.0..1.0)).collect();
    let obj = failmap::correction::Objective {
        loss,
        x: &x,
        dim,
        y: &y,
        sample_weight: if seed % 2 == 0 { Some(&weights) } else { None },
        c: r.random_range(0.1..10.0),
    };
    let (_, analytic) = obj.value_and_gradient(&theta);
    let numeric = numeric_gradient(|t| obj.value(t), &theta, 1e-6);
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-8);
    diff / scale
}

/// `n` evenly spaced angles on the unit circle with Gaussian radial noise.
pub fn noisy_circle(seed: u64, n: usize, sigma: f64) -> Dataset {
    let mut r = rng(seed);
    let noise = rand_distr::Normal::new(0.0, sigma).unwrap();
    let rows = (0..n)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / n as f64;
            let radius = 1.0 + rand_distr::Distribution::sample(&noise, &mut r);
            vec![radius * t.cos(), radius * t.sin()]
        })
        .collect();
    let meta = Meta::new(TaskKind::Classification, vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    Dataset::from_rows(vec!["x".into(), "y".into()], rows, meta).unwrap()
}
