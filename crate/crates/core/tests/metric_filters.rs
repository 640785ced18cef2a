mod common;

use common::*;
use failmap::dataset::{Dataset, Meta, MetricKind, MetricSpec, TaskKind};
use failmap::filters::{meta_filter, principal_component_1};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng;

/// Leading eigenvector projection of the centered data, via a dense
/// eigendecomposition.
fn pca_oracle(d: &Dataset) -> Vec<f64> {
    let (n, p) = (d.row_count(), d.col_count());
    let means: Vec<f64> = (0..p).map(|c| d.column(c).iter().sum::<f64>() / n as f64).collect();
    let x = DMatrix::from_fn(n, p, |i, j| d.value(i, j) - means[j]);
    let cov = x.transpose() * &x / n as f64;
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(top);
    (0..n).map(|i| (0..p).map(|j| x[(i, j)] * v[j]).sum()).collect()
}

fn anisotropic(seed: u64, n: usize, scales: &[f64]) -> Dataset {
    let mut r = rng(seed);
    let rows = (0..n)
        .map(|_| scales.iter().map(|s| s * r.random_range(-1.0..1.0)).collect())
        .collect();
    let meta = Meta::new(TaskKind::Classification, vec![0.0; n], vec![0.0; n], vec![0.25; n]);
    Dataset::from_rows((0..scales.len()).map(|j| format!("f{j}")).collect(), rows, meta).unwrap()
}

#[test]
fn pca_matches_dense_eigendecomposition() {
    for seed in 0..10 {
        let d = anisotropic(seed, 200, &[5.0, 2.0, 1.0, 0.5]);
        let got = principal_component_1(&d).unwrap().values;
        let want = pca_oracle(&d);
        // Same line; the sign convention is checked separately.
        let sign = if got.iter().zip(&want).map(|(a, b)| a * b).sum::<f64>() >= 0.0 { 1.0 } else { -1.0 };
        for (a, b) in got.iter().zip(&want) {
            assert!((a - sign * b).abs() < 1e-6, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn meta_filter_is_an_exact_copy() {
    let mut r = rng(2);
    let d = random_dataset(&mut r, 50, 2);
    let f = meta_filter(&d, "error_measure").unwrap();
    let a: Vec<u64> = f.values.iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = d.meta().error_measure.iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b);
}

fn shifted(d: &Dataset, by: f64) -> Dataset {
    let rows = d.rows().map(|r| r.iter().map(|v| v + by).collect()).collect();
    Dataset::from_rows(d.feature_names().to_vec(), rows, d.meta().clone()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pca_ignores_translation(seed in 0u64..500, by in -50.0f64..50.0) {
        let d = anisotropic(seed, 60, &[3.0, 1.0, 0.2]);
        let a = principal_component_1(&d).unwrap().values;
        let b = principal_component_1(&shifted(&d, by)).unwrap().values;
        let same = a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9);
        let flipped = a.iter().zip(&b).all(|(x, y)| (x + y).abs() < 1e-9);
        prop_assert!(same || flipped);
    }

    #[test]
    fn metric_axioms(seed in 0u64..500) {
        let mut r = rng(seed);
        let d = random_dataset(&mut r, 30, 4);
        let m = MetricSpec::variance_normalized(&d).unwrap();
        for _ in 0..40 {
            let (i, j, k) = (r.random_range(0..30), r.random_range(0..30), r.random_range(0..30));
            let dij = m.distance(&d, i, j).unwrap();
            prop_assert_eq!(dij, m.distance(&d, j, i).unwrap());
            let via = m.distance(&d, i, k).unwrap() + m.distance(&d, k, j).unwrap();
            prop_assert!(dij <= via + 1e-9);
        }
    }

    #[test]
    fn unit_variances_give_euclidean(seed in 0u64..500) {
        let mut r = rng(seed);
        let d = random_dataset(&mut r, 20, 3);
        let unit = MetricSpec::new(MetricKind::VarianceNormalizedEuclidean, vec![0, 1, 2], vec![1.0; 3]).unwrap();
        let e = MetricSpec::euclidean(&d);
        for i in 0..20 {
            for j in 0..20 {
                prop_assert!((unit.distance(&d, i, j).unwrap() - e.distance(&d, i, j).unwrap()).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn column_scaling_leaves_vne_unchanged(seed in 0u64..500, col in 0usize..3, c in 0.01f64..100.0) {
        let mut r = rng(seed);
        let d = random_dataset(&mut r, 20, 3);
        let s = d.scale_column(col, c);
        let (m1, m2) = (MetricSpec::variance_normalized(&d).unwrap(), MetricSpec::variance_normalized(&s).unwrap());
        for i in 0..20 {
            for j in 0..20 {
                prop_assert!((m1.distance(&d, i, j).unwrap() - m2.distance(&s, i, j).unwrap()).abs() <= 1e-9);
            }
        }
    }
}
