//! ℓ2-regularized linear classifiers trained by full-batch gradient descent.

use serde::{Deserialize, Serialize};

pub const DEFAULT_MAX_ITER: usize = 5000;
pub const DEFAULT_GRADIENT_TOL: f64 = 1e-6;
/// Lower bound on a standardization scale.
pub const SD_FLOOR: f64 = 1e-9;

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearLoss {
    /// Logistic loss `log(1 + exp(−y·z))`.
    Logistic,
    /// Squared hinge `max(0, 1 − y·z)²`.
    SquaredHinge,
}

impl LinearLoss {
    /// Loss and its derivative with respect to the decision value `z`, for a
    /// label `y ∈ {−1, +1}`.
    fn eval(self, y: f64, z: f64) -> (f64, f64) {
        let m = y * z;
        match self {
            LinearLoss::Logistic => {
                let loss = if m > 0.0 {
                    (-m).exp().ln_1p()
                } else {
                    -m + m.exp().ln_1p()
                };
                // σ(−m) without overflow.
                let s = if m > 0.0 {
                    let e = (-m).exp();
                    e / (1.0 + e)
                } else {
                    1.0 / (1.0 + m.exp())
                };
                (loss, -y * s)
            }
            LinearLoss::SquaredHinge => {
                let h = (1.0 - m).max(0.0);
                (h * h, -2.0 * y * h)
            }
        }
    }
}

/// Mean (optionally sample-weighted) loss plus `‖w‖² / (2C)`, over the
/// parameter vector `θ = (w, b)` with the intercept `b` last and
/// unregularized.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub loss: LinearLoss,
    /// Row-major `n × dim` design matrix.
    pub x: &'a [f64],
    pub dim: usize,
    /// Labels in `{−1, +1}`.
    pub y: &'a [f64],
    /// Per-row weights; the mean is taken over `Σ weights`.
    pub sample_weight: Option<&'a [f64]>,
    pub c: f64,
}

impl Objective<'_> {
    fn decision(&self, theta: &[f64], row: usize) -> f64 {
        let x = &self.x[row * self.dim..(row + 1) * self.dim];
        x.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() + theta[self.dim]
    }

    fn weight(&self, row: usize) -> f64 {
        self.sample_weight.map_or(1.0, |w| w[row])
    }

    fn total_weight(&self) -> f64 {
        self.sample_weight
            .map_or(self.y.len() as f64, |w| w.iter().sum())
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        theta[..self.dim].iter().map(|w| w * w).sum::<f64>() / (2.0 * self.c)
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let mut sum = 0.0;
        for (row, &y) in self.y.iter().enumerate() {
            sum += self.weight(row) * self.loss.eval(y, self.decision(theta, row)).0;
        }
        sum / self.total_weight() + self.penalty(theta)
    }

    pub fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let d = self.dim;
        let mut grad = vec![0.0; d + 1];
        let mut sum = 0.0;
        for (row, &y) in self.y.iter().enumerate() {
            let w = self.weight(row);
            let (l, dl) = self.loss.eval(y, self.decision(theta, row));
            sum += w * l;
            let g = w * dl;
            if g != 0.0 {
                let x = &self.x[row * d..(row + 1) * d];
                for (gj, xj) in grad.iter_mut().zip(x) {
                    *gj += g * xj;
                }
                grad[d] += g;
            }
        }
        let total = self.total_weight();
        for g in &mut grad {
            *g /= total;
        }
        for j in 0..d {
            grad[j] += theta[j] / self.c;
        }
        (sum / total + self.penalty(theta), grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentOptions {
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions {
            max_iter: DEFAULT_MAX_ITER,
            tolerance: DEFAULT_GRADIENT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentTrace {
    /// Objective at the start and after every accepted step.
    pub losses: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

/// Gradient descent from `θ = 0` with a backtracking (Armijo) step, so the
/// objective never increases. Stops once `‖∇‖ ≤ tolerance`, after
/// `max_iter` steps, or when no step length makes progress.
pub fn minimize(obj: &Objective<'_>, opts: &DescentOptions) -> (Vec<f64>, DescentTrace) {
    let mut theta = vec![0.0; obj.dim + 1];
    let (mut f, mut g) = obj.value_and_gradient(&theta);
    let mut losses = vec![f];
    let mut step = 1.0;
    let mut iterations = 0;
    let mut candidate = vec![0.0; theta.len()];
    loop {
        let gn2: f64 = g.iter().map(|v| v * v).sum();
        if gn2.sqrt() <= opts.tolerance || iterations >= opts.max_iter {
            break;
        }
        let mut accepted = false;
        while step >= MIN_STEP {
            for ((c, t), gi) in candidate.iter_mut().zip(&theta).zip(&g) {
                *c = t - step * gi;
            }
            if obj.value(&candidate) <= f - ARMIJO * step * gn2 {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        std::mem::swap(&mut theta, &mut candidate);
        (f, g) = obj.value_and_gradient(&theta);
        losses.push(f);
        iterations += 1;
        step *= 2.0;
    }
    let gradient_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let trace = DescentTrace {
        losses,
        iterations,
        gradient_norm,
        converged: gradient_norm <= opts.tolerance,
    };
    (theta, trace)
}

/// Per-column affine rescaling `(x − mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation of each column, the latter
    /// floored at [`SD_FLOOR`].
    pub fn fit(x: &[f64], dim: usize) -> Standardizer {
        let n = (x.len() / dim.max(1)).max(1) as f64;
        let mut means = vec![0.0; dim];
        for row in x.chunks_exact(dim) {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in x.chunks_exact(dim) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let scales = var.into_iter().map(|s| (s / n).sqrt().max(SD_FLOOR)).collect();
        Standardizer { means, scales }
    }

    pub fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = (row[j] - self.means[j]) / self.scales[j];
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let dim = self.means.len();
        let mut out = vec![0.0; x.len()];
        for (src, dst) in x.chunks_exact(dim).zip(out.chunks_exact_mut(dim)) {
            self.apply_row(src, dst);
        }
        out
    }
}

/// A trained linear classifier acting on raw (unstandardized) features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub loss: LinearLoss,
    /// Weights on standardized features.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub standardizer: Standardizer,
    pub c: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Signed decision value; positive means "in the mode".
    pub fn decision(&self, row: &[f64]) -> f64 {
        let s = &self.standardizer;
        row.iter()
            .zip(&self.weights)
            .enumerate()
            .map(|(j, (x, w))| w * (x - s.means[j]) / s.scales[j])
            .sum::<f64>()
            + self.intercept
    }
}

/// Trains on raw features `x` (row-major, `dim` columns) with boolean labels.
/// Callers check that both classes are present.
pub(crate) fn fit_linear(
    loss: LinearLoss,
    x: &[f64],
    dim: usize,
    y: &[bool],
    sample_weight: Option<&[f64]>,
    c: f64,
    opts: &DescentOptions,
) -> (LinearModel, DescentTrace) {
    let standardizer = Standardizer::fit(x, dim);
    let xs = standardizer.apply(x);
    let ys: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
    let obj = Objective {
        loss,
        x: &xs,
        dim,
        y: &ys,
        sample_weight,
        c,
    };
    let (theta, trace) = minimize(&obj, opts);
    let model = LinearModel {
        loss,
        weights: theta[..dim].to_vec(),
        intercept: theta[dim],
        standardizer,
        c,
        iterations: trace.iterations,
        gradient_norm: trace.gradient_norm,
        converged: trace.converged,
    };
    (model, trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central_difference(obj: &Objective<'_>, theta: &[f64], h: f64) -> Vec<f64> {
        (0..theta.len())
            .map(|j| {
                let mut p = theta.to_vec();
                let mut m = theta.to_vec();
                p[j] += h;
                m[j] -= h;
                (obj.value(&p) - obj.value(&m)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn logistic_gradient_at_zero() {
        let x = [0.5, -1.0, 2.0, 0.3, -0.7, 1.1];
        let y = [1.0, -1.0, 1.0];
        let obj = Objective {
            loss: LinearLoss::Logistic,
            x: &x,
            dim: 2,
            y: &y,
            sample_weight: None,
            c: 1.0,
        };
        let theta = [0.0; 3];
        let (f, g) = obj.value_and_gradient(&theta);
        assert!((f - 2f64.ln()).abs() < 1e-15);
        let fd = central_difference(&obj, &theta, 1e-5);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-8), "{a} vs {b}");
        }
    }

    #[test]
    fn hinge_is_zero_beyond_margin() {
        assert_eq!(LinearLoss::SquaredHinge.eval(1.0, 2.0), (0.0, -0.0));
        assert_eq!(LinearLoss::SquaredHinge.eval(-1.0, 0.0), (1.0, 2.0));
    }

    #[test]
    fn logistic_loss_is_stable_for_large_margins() {
        let (l, d) = LinearLoss::Logistic.eval(1.0, 800.0);
        assert_eq!(l, 0.0);
        assert_eq!(d, -0.0);
        let (l, _) = LinearLoss::Logistic.eval(1.0, -800.0);
        assert_eq!(l, 800.0);
    }

    #[test]
    fn descent_is_monotone_and_separates() {
        let x = [0.0, 0.1, 0.2, 3.0, 3.1, 3.2];
        let y = [false, false, false, true, true, true];
        for loss in [LinearLoss::Logistic, LinearLoss::SquaredHinge] {
            let (m, trace) = fit_linear(loss, &x, 1, &y, None, 1.0, &DescentOptions::default());
            assert!(trace.losses.windows(2).all(|w| w[1] <= w[0]));
            for (i, &yi) in y.iter().enumerate() {
                assert_eq!(m.decision(&x[i..i + 1]) > 0.0, yi);
            }
        }
    }

    #[test]
    fn standardizer_floors_constant_columns() {
        let s = Standardizer::fit(&[1.0, 5.0, 3.0, 5.0], 2);
        assert_eq!(s.means, vec![2.0, 5.0]);
        assert_eq!(s.scales, vec![1.0, SD_FLOOR]);
    }
}
