//! Synthetic datasets with a planted failure region.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Dataset, Meta, Schema, TaskKind, ERROR_MEASURE, GROUND_TRUTH, PREDICTION};
use crate::error::{Error, Result};

pub const CLEAN_FLAG: &str = "clean";
/// Shift applied to every coordinate of a planted outlier.
pub const OUTLIER_SHIFT: f64 = 6.0;
/// Residual added to planted outliers in the regression variant.
pub const REGRESSION_BIAS: f64 = 100.0;
const CLASSES: usize = 4;
/// The confusion planted on outliers: true `1`, predicted `2`.
pub const PLANTED_TRUTH: f64 = 1.0;
pub const PLANTED_PREDICTION: f64 = 2.0;

/// Column layout written by [`generate_planted`] datasets.
pub fn planted_schema() -> Schema {
    let mut s = Schema::new(GROUND_TRUTH, PREDICTION, ERROR_MEASURE);
    s.flags = vec![CLEAN_FLAG.into()];
    s.clean_flag = Some(CLEAN_FLAG.into());
    s
}

/// Draws `n_inliers` rows on which a simple model is right and `n_outliers`
/// rows, shifted by [`OUTLIER_SHIFT`] in every coordinate, on which it is
/// systematically wrong. Outliers are flagged not clean; row order is
/// shuffled.
///
/// Classification: four classes with unit-variance Gaussian clusters; the
/// error measure is the predicted probability of the true class, high on
/// inliers and low on outliers, which are all class 1 predicted as class 2.
///
/// Regression: `y = 1000 + a·x` with residual `N(0, 3)` on inliers and
/// `100 + N(0, 3)` on outliers; the error measure is the residual.
pub fn generate_planted(seed: u64, n_inliers: usize, n_outliers: usize, dims: usize, task: TaskKind) -> Result<Dataset> {
    if n_inliers == 0 || dims == 0 {
        return Err(Error::Argument("need at least one inlier and one dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let noise = Normal::new(0.0, 3.0).expect("valid normal");
    let coef: Vec<f64> = (0..dims).map(|_| rng.random_range(-5.0..5.0)).collect();

    struct Row {
        x: Vec<f64>,
        gt: f64,
        pred: f64,
        err: f64,
        clean: bool,
    }
    let mut rows = Vec::with_capacity(n_inliers + n_outliers);
    for i in 0..n_inliers + n_outliers {
        let outlier = i >= n_inliers;
        let mut x: Vec<f64> = (0..dims).map(|_| unit.sample(&mut rng)).collect();
        let row = match task {
            TaskKind::Classification => {
                let class = if outlier { 1 } else { rng.random_range(0..CLASSES) };
                x[class % dims] += 3.0 * (class + 1) as f64;
                if outlier {
                    x.iter_mut().for_each(|v| *v += OUTLIER_SHIFT);
                    Row {
                        x,
                        gt: PLANTED_TRUTH,
                        pred: PLANTED_PREDICTION,
                        err: rng.random_range(0.02..0.08),
                        clean: false,
                    }
                } else {
                    Row {
                        x,
                        gt: class as f64,
                        pred: class as f64,
                        err: rng.random_range(0.85..1.0),
                        clean: true,
                    }
                }
            }
            TaskKind::Regression => {
                if outlier {
                    x.iter_mut().for_each(|v| *v += OUTLIER_SHIFT);
                }
                let gt = 1000.0 + x.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>();
                let residual = noise.sample(&mut rng) + if outlier { REGRESSION_BIAS } else { 0.0 };
                Row {
                    x,
                    gt,
                    pred: gt + residual,
                    err: residual,
                    clean: !outlier,
                }
            }
        };
        rows.push(row);
    }
    rows.shuffle(&mut rng);

    let mut meta = Meta::new(
        task,
        rows.iter().map(|r| r.gt).collect(),
        rows.iter().map(|r| r.pred).collect(),
        rows.iter().map(|r| r.err).collect(),
    );
    meta.flags
        .insert(CLEAN_FLAG.into(), rows.iter().map(|r| r.clean).collect());
    meta.clean_flag = Some(CLEAN_FLAG.into());
    let names = (0..dims).map(|j| format!("x{j}")).collect();
    Dataset::from_rows(names, rows.into_iter().map(|r| r.x).collect(), meta)
}
