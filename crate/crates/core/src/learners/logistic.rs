//! L2-regularized logistic regression trained by per-example SGD.
//!
//! Features are standardized internally with training means and standard
//! deviations. The objective is
//! `(1/n) Σ logloss(σ(w·x̃ + b), y) + (λ/2)‖w‖²` (bias unpenalized), and the
//! step size decays as `η_t = η0 / (1 + η0·λ·t)` with `t` counting updates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_training_labels, check_width, log_loss, sigmoid};
use crate::error::{Error, Result};
use crate::features::DesignMatrix;
use crate::rng::{derive_seed, Pcg32};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrParams {
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
}

impl Default for LrParams {
    fn default() -> Self {
        LrParams {
            learning_rate: 0.1,
            l2: 1e-4,
            epochs: 5,
        }
    }
}

/// Per-column `(mean, stddev)`; constant columns get stddev 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(matrix: &DesignMatrix) -> Self {
        let (n, d) = (matrix.n_rows, matrix.n_cols);
        let mut means = vec![0.0; d];
        let mut stds = vec![0.0; d];
        if n == 0 {
            return Standardizer {
                means,
                stds: vec![1.0; d],
            };
        }
        for i in 0..n {
            for (m, x) in means.iter_mut().zip(matrix.row(i)) {
                *m += x;
            }
        }
        for m in &mut means {
            *m /= n as f64;
        }
        for i in 0..n {
            for ((s, m), x) in stds.iter_mut().zip(&means).zip(matrix.row(i)) {
                *s += (x - m) * (x - m);
            }
        }
        for s in &mut stds {
            *s = (*s / n as f64).sqrt();
            if !(*s > 1e-12 && s.is_finite()) {
                *s = 1.0;
            }
        }
        Standardizer { means, stds }
    }

    pub fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        for (((o, x), m), s) in out.iter_mut().zip(row).zip(&self.means).zip(&self.stds) {
            *o = (x - m) / s;
        }
    }

    pub fn apply(&self, matrix: &DesignMatrix) -> DesignMatrix {
        let d = matrix.n_cols;
        let mut values = vec![0.0; matrix.values.len()];
        for (i, out) in values.chunks_mut(d.max(1)).enumerate().take(matrix.n_rows) {
            self.apply_row(matrix.row(i), out);
        }
        DesignMatrix {
            values,
            ..matrix.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub standardizer: Standardizer,
    pub params: LrParams,
    pub seed: u64,
}

impl LinearModel {
    pub fn margin(&self, row: &[f64]) -> f64 {
        let mut z = self.bias;
        for (((w, x), m), s) in self
            .weights
            .iter()
            .zip(row)
            .zip(&self.standardizer.means)
            .zip(&self.standardizer.stds)
        {
            z += w * ((x - m) / s);
        }
        z
    }
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Regularized objective and its gradient `(loss, ∂/∂w, ∂/∂b)` over an
/// already standardized matrix.
pub fn objective(weights: &[f64], bias: f64, matrix: &DesignMatrix, labels: &[bool], l2: f64) -> (f64, Vec<f64>, f64) {
    let n = matrix.n_rows as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let x = matrix.row(i);
        let z = dot(weights, x) + bias;
        loss += log_loss(z, y);
        // un-clamped logistic so the gradient matches the loss exactly
        let p = if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            z.exp() / (1.0 + z.exp())
        };
        let err = p - y as u8 as f64;
        for (g, xj) in grad.iter_mut().zip(x) {
            *g += err * xj;
        }
        grad_b += err;
    }
    let penalty: f64 = weights.iter().map(|w| w * w).sum::<f64>() * l2 / 2.0;
    for (g, w) in grad.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    (loss / n + penalty, grad, grad_b / n)
}

/// Central-difference gradient of [`objective`] with step `h`.
pub fn numeric_gradient(
    weights: &[f64],
    bias: f64,
    matrix: &DesignMatrix,
    labels: &[bool],
    l2: f64,
    h: f64,
) -> (Vec<f64>, f64) {
    let loss = |w: &[f64], b: f64| objective(w, b, matrix, labels, l2).0;
    let mut w = weights.to_vec();
    let mut grad = Vec::with_capacity(w.len());
    for j in 0..w.len() {
        let orig = w[j];
        w[j] = orig + h;
        let up = loss(&w, bias);
        w[j] = orig - h;
        let down = loss(&w, bias);
        w[j] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    let grad_b = (loss(&w, bias + h) - loss(&w, bias - h)) / (2.0 * h);
    (grad, grad_b)
}

/// Largest initial step for which every per-example update is a descent step
/// on its own smooth loss: `1 / (max_i ‖x̃_i‖²/4 + 1/4 + λ)` (the `1/4` is the bias).
pub fn stable_learning_rate(standardized: &DesignMatrix, l2: f64) -> f64 {
    let max_norm = (0..standardized.n_rows)
        .map(|i| standardized.row(i).iter().map(|x| x * x).sum::<f64>())
        .fold(0.0, f64::max);
    1.0 / ((max_norm + 1.0) / 4.0 + l2)
}

pub fn lr_fit(matrix: &DesignMatrix, hp: &LrParams, seed: u64) -> Result<LinearModel> {
    lr_fit_traced(matrix, hp, seed).map(|(m, _)| m)
}

/// Fits and also returns the full-batch objective before training and after each epoch.
pub fn lr_fit_traced(matrix: &DesignMatrix, hp: &LrParams, seed: u64) -> Result<(LinearModel, Vec<f64>)> {
    if !(hp.learning_rate > 0.0 && hp.learning_rate.is_finite()) {
        return Err(Error::InvalidHyperparameter(format!(
            "learning_rate = {}",
            hp.learning_rate
        )));
    }
    if !(hp.l2 >= 0.0 && hp.l2.is_finite()) {
        return Err(Error::InvalidHyperparameter(format!("l2 = {}", hp.l2)));
    }
    let labels = check_training_labels(matrix)?;
    let standardizer = Standardizer::fit(matrix);
    let x = standardizer.apply(matrix);
    let d = matrix.n_cols;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut rng = Pcg32::seeded(derive_seed(seed, "lr:shuffle"));
    let mut order: Vec<usize> = (0..matrix.n_rows).collect();
    let mut trace = vec![objective(&w, b, &x, labels, hp.l2).0];
    let mut t = 0u64;
    for epoch in 0..hp.epochs {
        rng.shuffle(&mut order);
        for &i in &order {
            let eta = hp.learning_rate / (1.0 + hp.learning_rate * hp.l2 * t as f64);
            let row = x.row(i);
            let z = dot(&w, row) + b;
            let err = sigmoid(z) - labels[i] as u8 as f64;
            for (wj, xj) in w.iter_mut().zip(row) {
                *wj -= eta * (err * xj + hp.l2 * *wj);
            }
            b -= eta * err;
            t += 1;
        }
        let loss = objective(&w, b, &x, labels, hp.l2).0;
        if !loss.is_finite() || !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        trace.push(loss);
    }
    Ok((
        LinearModel {
            weights: w,
            bias: b,
            standardizer,
            params: hp.clone(),
            seed,
        },
        trace,
    ))
}

pub fn lr_score(model: &LinearModel, matrix: &DesignMatrix) -> Result<Vec<f64>> {
    check_width(model.weights.len(), matrix)?;
    Ok((0..matrix.n_rows)
        .into_par_iter()
        .map(|i| sigmoid(model.margin(matrix.row(i))))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::roc_auc;

    fn separable() -> DesignMatrix {
        DesignMatrix::from_rows(
            &[vec![-1.0], vec![-0.5], vec![0.5], vec![1.0]],
            &[false, false, true, true],
        )
    }

    #[test]
    fn zero_epochs_scores_one_half() {
        let hp = LrParams {
            epochs: 0,
            ..Default::default()
        };
        let m = lr_fit(&separable(), &hp, 1).unwrap();
        assert_eq!(m.weights, vec![0.0]);
        assert_eq!(m.bias, 0.0);
        assert!(lr_score(&m, &separable()).unwrap().iter().all(|&s| s == 0.5));
    }

    #[test]
    fn single_example_gradient() {
        let m = DesignMatrix::from_rows(&[vec![1.0]], &[true]);
        let (_, g, gb) = objective(&[0.0], 0.0, &m, &[true], 0.0);
        assert_eq!(g, vec![-0.5]);
        assert_eq!(gb, -0.5);
    }

    #[test]
    fn separable_data_ranks_perfectly() {
        let hp = LrParams {
            epochs: 200,
            ..Default::default()
        };
        let data = separable();
        let m = lr_fit(&data, &hp, 7).unwrap();
        let scores = lr_score(&m, &data).unwrap();
        assert_eq!(roc_auc(&scores, data.labels().unwrap()).unwrap(), 1.0);
        assert!(scores[0] < scores[1] && scores[1] < scores[2] && scores[2] < scores[3]);
    }

    #[test]
    fn large_bias_saturates_toward_one() {
        let m = LinearModel {
            weights: vec![0.0],
            bias: 10.0,
            standardizer: Standardizer {
                means: vec![0.0],
                stds: vec![1.0],
            },
            params: LrParams::default(),
            seed: 0,
        };
        let s = lr_score(&m, &separable()).unwrap();
        assert!(s.iter().all(|&p| p > 0.9999 && p < 1.0));
    }

    #[test]
    fn constant_column_keeps_zero_weight() {
        let data = DesignMatrix::from_rows(
            &[vec![3.0, -1.0], vec![3.0, -0.2], vec![3.0, 0.4], vec![3.0, 1.0]],
            &[false, false, true, true],
        );
        let m = lr_fit(
            &data,
            &LrParams {
                epochs: 20,
                ..Default::default()
            },
            3,
        )
        .unwrap();
        assert_eq!(m.standardizer.stds[0], 1.0);
        assert_eq!(m.weights[0], 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let one_class = DesignMatrix::from_rows(&[vec![1.0], vec![2.0]], &[true, true]);
        assert!(matches!(
            lr_fit(&one_class, &LrParams::default(), 0),
            Err(Error::SingleClassTraining)
        ));
        let m = lr_fit(&separable(), &LrParams::default(), 0).unwrap();
        let wide = DesignMatrix::from_rows(&[vec![1.0, 2.0]], &[true]);
        assert!(matches!(
            lr_score(&m, &wide),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let data = DesignMatrix::from_rows(
            &[vec![1.0], vec![-1.0], vec![1.0], vec![-1.0]],
            &[true, true, false, false],
        );
        let hp = LrParams {
            learning_rate: 1e308,
            l2: 1e10,
            epochs: 3,
        };
        assert!(matches!(lr_fit(&data, &hp, 0), Err(Error::NonFiniteLoss { .. })));
    }

    #[test]
    fn full_batch_loss_decreases_below_stability_bound() {
        // fixed, overlapping two-feature instance
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let a = (i as f64 * 0.37).sin() * 3.0;
                let b = (i as f64 * 1.3).cos() * 50.0 + 100.0;
                vec![a, b]
            })
            .collect();
        let labels: Vec<bool> = (0..20)
            .map(|i| (i as f64 * 0.37).sin() + 0.3 * (i % 3) as f64 > 0.2)
            .collect();
        let data = DesignMatrix::from_rows(&rows, &labels);
        let l2 = 1e-3;
        let bound = stable_learning_rate(&Standardizer::fit(&data).apply(&data), l2);
        let hp = LrParams {
            learning_rate: 0.1 * bound,
            l2,
            epochs: 30,
        };
        let (_, trace) = lr_fit_traced(&data, &hp, 5).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss went up: {} -> {}", w[0], w[1]);
        }
    }
}
