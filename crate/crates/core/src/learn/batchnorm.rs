use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Added to the variance before taking the square root.
pub const BN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BnMode {
    /// Batch statistics while training, running averages at evaluation.
    Running,
    /// Batch statistics in both training and evaluation.
    Current,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub mode: BnMode,
}

impl BatchNormState {
    pub fn new(features: usize, mode: BnMode) -> Self {
        BatchNormState {
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum: 0.1,
            mode,
        }
    }

    pub fn features(&self) -> usize {
        self.running_mean.len()
    }
}

/// Per-feature batch mean and population variance.
pub fn batch_stats(x: &DenseMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows() as f64;
    let mean: Vec<f64> = x.col_sums().iter().map(|s| s / n).collect();
    let mut var = vec![0.0; x.cols()];
    for i in 0..x.rows() {
        for (k, v) in x.row(i).iter().enumerate() {
            var[k] += (v - mean[k]) * (v - mean[k]);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

fn apply(x: &DenseMatrix, mean: &[f64], var: &[f64]) -> DenseMatrix {
    let scale: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    DenseMatrix::from_fn(x.rows(), x.cols(), |i, k| (x.get(i, k) - mean[k]) * scale[k])
}

/// Normalizes each column of `x` (rows are samples). In running mode a
/// training call also folds the batch statistics into the running averages.
pub fn batchnorm_forward(x: &DenseMatrix, state: &mut BatchNormState, training: bool) -> Result<DenseMatrix> {
    if x.cols() != state.features() {
        return Err(Error::DimensionMismatch(format!(
            "batch has {} features, state {}",
            x.cols(),
            state.features()
        )));
    }
    let use_batch = training || state.mode == BnMode::Current;
    if !use_batch {
        return Ok(apply(x, &state.running_mean, &state.running_var));
    }
    if x.rows() < 2 {
        return Err(Error::BatchTooSmall(x.rows()));
    }
    let (mean, var) = batch_stats(x);
    if training && state.mode == BnMode::Running {
        let m = state.momentum;
        for k in 0..mean.len() {
            state.running_mean[k] = (1.0 - m) * state.running_mean[k] + m * mean[k];
            state.running_var[k] = (1.0 - m) * state.running_var[k] + m * var[k];
        }
    }
    Ok(apply(x, &mean, &var))
}

/// Backward pass of batch-statistics normalization. `y` is the forward output
/// and `var` the batch variance.
pub fn batchnorm_backward(y: &DenseMatrix, var: &[f64], grad_y: &DenseMatrix) -> DenseMatrix {
    let n = y.rows() as f64;
    let sum_g = grad_y.col_sums();
    let mut sum_gy = vec![0.0; y.cols()];
    for i in 0..y.rows() {
        for k in 0..y.cols() {
            sum_gy[k] += grad_y.get(i, k) * y.get(i, k);
        }
    }
    DenseMatrix::from_fn(y.rows(), y.cols(), |i, k| {
        let s = (var[k] + BN_EPS).sqrt();
        (n * grad_y.get(i, k) - sum_g[k] - y.get(i, k) * sum_gy[k]) / (n * s)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use rand::Rng;

    #[test]
    fn one_two_three() {
        let x = DenseMatrix::from_row_major(3, 1, vec![1.0, 2.0, 3.0]);
        let mut st = BatchNormState::new(1, BnMode::Current);
        let y = batchnorm_forward(&x, &mut st, false).unwrap();
        let expected = [-1.2247, 0.0, 1.2247];
        for i in 0..3 {
            assert!((y.get(i, 0) - expected[i]).abs() < 1e-4);
        }
    }

    #[test]
    fn constant_batch_is_zero() {
        let x = DenseMatrix::filled(5, 2, 0.7);
        let y = batchnorm_forward(&x, &mut BatchNormState::new(2, BnMode::Current), true).unwrap();
        assert!(y.as_slice().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn single_sample_rejected_in_current_mode() {
        let x = DenseMatrix::filled(1, 2, 0.7);
        let mut st = BatchNormState::new(2, BnMode::Current);
        assert!(matches!(batchnorm_forward(&x, &mut st, false), Err(Error::BatchTooSmall(1))));
    }

    #[test]
    fn current_mode_standardizes_in_both_phases() {
        let mut rng = rng_from_seed(1);
        let x = DenseMatrix::from_fn(40, 5, |_, k| rng.random_range(-3.0..3.0) * (k + 1) as f64 + k as f64);
        for training in [true, false] {
            let y = batchnorm_forward(&x, &mut BatchNormState::new(5, BnMode::Current), training).unwrap();
            let (mean, var) = batch_stats(&y);
            assert!(mean.iter().all(|m| m.abs() < 1e-9));
            assert!(var.iter().all(|v| (v - 1.0).abs() < 1e-6));
        }
    }

    #[test]
    fn running_mode_lags_on_shifted_data() {
        let mut rng = rng_from_seed(2);
        let train = DenseMatrix::from_fn(30, 1, |_, _| rng.random_range(-1.0..1.0));
        let mut running = BatchNormState::new(1, BnMode::Running);
        for _ in 0..50 {
            batchnorm_forward(&train, &mut running, true).unwrap();
        }
        let shifted = train.map(|v| 3.0 * v + 5.0);
        let a = batchnorm_forward(&shifted, &mut running, false).unwrap();
        let b = batchnorm_forward(&shifted, &mut BatchNormState::new(1, BnMode::Current), false).unwrap();
        assert!(a.max_abs_diff(&b) > 1.0);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = rng_from_seed(3);
        let x = DenseMatrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let w = DenseMatrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let loss = |x: &DenseMatrix| {
            let y = batchnorm_forward(x, &mut BatchNormState::new(3, BnMode::Current), true).unwrap();
            y.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b * a).sum::<f64>()
        };
        let y = batchnorm_forward(&x, &mut BatchNormState::new(3, BnMode::Current), true).unwrap();
        let gy = DenseMatrix::from_fn(6, 3, |i, k| 2.0 * w.get(i, k) * y.get(i, k));
        let (_, var) = batch_stats(&x);
        let g = batchnorm_backward(&y, &var, &gy);
        let h = 1e-6;
        for i in 0..6 {
            for k in 0..3 {
                let mut p = x.clone();
                let mut m = x.clone();
                p.set(i, k, x.get(i, k) + h);
                m.set(i, k, x.get(i, k) - h);
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                assert!((fd - g.get(i, k)).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }
}
