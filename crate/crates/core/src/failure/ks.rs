use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Two-sample Kolmogorov–Smirnov statistic: the largest gap between the two
/// right-continuous empirical CDFs.
pub fn ks_statistic(sample_a: &[f64], sample_b: &[f64]) -> Result<f64> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(Error::Argument("KS statistic needs two nonempty samples".into()));
    }
    let mut a = sample_a.to_vec();
    let mut b = sample_b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        // Step both CDFs past the next value, including all ties.
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureKs {
    pub index: usize,
    pub name: String,
    pub statistic: f64,
}

/// What a failure mode was compared against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// Every row of the dataset.
    Dataset,
    /// Every row outside the mode.
    Rest,
    /// Another group (failure mode or selection) by id.
    Mode(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub mode: usize,
    pub reference: Reference,
    pub features: Vec<FeatureKs>,
}

/// KS statistic of every feature column between two row groups, sorted by
/// decreasing statistic (ties by feature index), truncated to `top_n`.
pub fn rank_features(d: &Dataset, group: &[usize], reference: &[usize], top_n: usize) -> Result<Vec<FeatureKs>> {
    if group.is_empty() || reference.is_empty() {
        return Err(Error::Argument("both groups must be nonempty".into()));
    }
    if top_n == 0 {
        return Err(Error::Argument("top_n must be at least 1".into()));
    }
    if let Some(&r) = group.iter().chain(reference).find(|&&r| r >= d.row_count()) {
        return Err(Error::Argument(format!("row {r} out of range")));
    }
    let mut scores = (0..d.col_count())
        .into_par_iter()
        .map(|c| {
            let a: Vec<f64> = group.iter().map(|&r| d.value(r, c)).collect();
            let b: Vec<f64> = reference.iter().map(|&r| d.value(r, c)).collect();
            ks_statistic(&a, &b).map(|statistic| FeatureKs {
                index: c,
                name: d.feature_names()[c].clone(),
                statistic,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scores.sort_by(|x, y| y.statistic.total_cmp(&x.statistic).then(x.index.cmp(&y.index)));
    scores.truncate(top_n);
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        assert_eq!(ks_statistic(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(ks_statistic(&[0.0, 1.0], &[5.0, 6.0]).unwrap(), 1.0);
        let d = ks_statistic(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert!((d - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ties_across_samples() {
        // F_a jumps to 1 at 1; F_b is 1/2 at 1.
        let d = ks_statistic(&[1.0, 1.0], &[1.0, 2.0]).unwrap();
        assert_eq!(d, 0.5);
    }

    #[test]
    fn symmetric() {
        let a = [0.3, 5.0, 1.0, 1.0];
        let b = [2.0, 0.1];
        assert_eq!(ks_statistic(&a, &b).unwrap(), ks_statistic(&b, &a).unwrap());
    }

    #[test]
    fn empty_sample_is_an_error() {
        assert!(ks_statistic(&[], &[1.0]).is_err());
        assert!(ks_statistic(&[1.0], &[]).is_err());
    }
}
