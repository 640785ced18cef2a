use serde::{Deserialize, Serialize};

/// Lower bound on a per-feature class variance.
pub const VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianClass {
    pub prior: f64,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl GaussianClass {
    fn fit(x: &[f64], dim: usize, rows: &[usize], n_total: usize) -> GaussianClass {
        let n = rows.len() as f64;
        let mut means = vec![0.0; dim];
        for &r in rows {
            for (m, v) in means.iter_mut().zip(&x[r * dim..(r + 1) * dim]) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut variances = vec![0.0; dim];
        for &r in rows {
            for ((s, v), m) in variances.iter_mut().zip(&x[r * dim..(r + 1) * dim]).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        variances
            .iter_mut()
            .for_each(|s| *s = (*s / n).max(VARIANCE_FLOOR));
        GaussianClass {
            prior: n / n_total as f64,
            means,
            variances,
        }
    }

    /// `log P(class) + log p(x | class)`.
    fn joint_log_likelihood(&self, row: &[f64]) -> f64 {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        let mut ll = self.prior.ln();
        for ((x, m), v) in row.iter().zip(&self.means).zip(&self.variances) {
            ll -= 0.5 * (ln_2pi + v.ln() + (x - m) * (x - m) / v);
        }
        ll
    }
}

/// Two-class Gaussian naive Bayes on raw features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbModel {
    pub negative: GaussianClass,
    pub positive: GaussianClass,
}

impl GnbModel {
    /// Callers check that both classes are present.
    pub(crate) fn fit(x: &[f64], dim: usize, y: &[bool]) -> GnbModel {
        let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i]).collect();
        let neg: Vec<usize> = (0..y.len()).filter(|&i| !y[i]).collect();
        GnbModel {
            negative: GaussianClass::fit(x, dim, &neg, y.len()),
            positive: GaussianClass::fit(x, dim, &pos, y.len()),
        }
    }

    pub fn dim(&self) -> usize {
        self.positive.means.len()
    }

    /// `(P(rest | x), P(in mode | x))`.
    pub fn posteriors(&self, row: &[f64]) -> (f64, f64) {
        let a = self.negative.joint_log_likelihood(row);
        let b = self.positive.joint_log_likelihood(row);
        let hi = a.max(b);
        let (ea, eb) = ((a - hi).exp(), (b - hi).exp());
        (ea / (ea + eb), eb / (ea + eb))
    }
}
