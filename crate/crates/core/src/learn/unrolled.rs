//! Fixed-depth Sinkhorn with a hand-written reverse pass.

use crate::dense::DenseMatrix;
use crate::matching::{log_sum_exp, marginals, AssignmentPlan};

use super::gt::GroundTruthAssignment;

/// Forward iterates kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct UnrolledSinkhorn {
    /// Augmented log-kernel `Z`.
    z: DenseMatrix,
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    /// `u¹..u^T`.
    us: Vec<Vec<f64>>,
    /// `v⁰..v^T`.
    vs: Vec<Vec<f64>>,
    epsilon: f64,
}

impl UnrolledSinkhorn {
    /// Exactly `iters` row+column updates on the bin-augmented map.
    pub fn forward(s: &DenseMatrix, bin_score: f64, epsilon: f64, iters: usize) -> Self {
        let (m, n) = (s.rows(), s.cols());
        let z = DenseMatrix::from_fn(m + 1, n + 1, |i, j| {
            if i < m && j < n {
                s.get(i, j) / epsilon
            } else {
                bin_score / epsilon
            }
        });
        let (log_a, log_b) = marginals(m, n, true);
        let mut us = Vec::with_capacity(iters);
        let mut vs = vec![vec![0.0; n + 1]];
        let mut buf = vec![0.0; (m + 1).max(n + 1)];
        for _ in 0..iters {
            let v = vs.last().unwrap();
            let u: Vec<f64> = (0..=m)
                .map(|i| {
                    for j in 0..=n {
                        buf[j] = z.get(i, j) + v[j];
                    }
                    log_a[i] - log_sum_exp(&buf[..=n])
                })
                .collect();
            let v: Vec<f64> = (0..=n)
                .map(|j| {
                    for i in 0..=m {
                        buf[i] = z.get(i, j) + u[i];
                    }
                    log_b[j] - log_sum_exp(&buf[..=m])
                })
                .collect();
            us.push(u);
            vs.push(v);
        }
        UnrolledSinkhorn {
            z,
            log_a,
            log_b,
            us,
            vs,
            epsilon,
        }
    }

    pub fn log_plan(&self) -> DenseMatrix {
        let u = self.us.last().expect("at least one iteration");
        let v = self.vs.last().unwrap();
        DenseMatrix::from_fn(self.z.rows(), self.z.cols(), |i, j| self.z.get(i, j) + u[i] + v[j])
    }

    pub fn plan(&self) -> AssignmentPlan {
        AssignmentPlan::from_matrix(self.log_plan().map(f64::exp))
    }

    /// Gradients of `nll_loss` with respect to the interior scores and the
    /// bin score, together with the loss value.
    pub fn nll_backward(&self, gt: &GroundTruthAssignment) -> (f64, DenseMatrix, f64) {
        let (rows, cols) = (self.z.rows(), self.z.cols());
        let log_p = self.log_plan();
        let ones = gt.ones();
        let k = ones.len().max(1) as f64;
        // dL/d(log P).
        let mut g = DenseMatrix::zeros(rows, cols);
        let mut loss = 0.0;
        for &(i, j) in &ones {
            let p = log_p.get(i, j).exp();
            loss -= (p + 1e-9).ln() / k;
            g.set(i, j, -p / (p + 1e-9) / k);
        }
        let mut zbar = g.clone();
        let mut ubar = g.row_sums();
        let mut vbar = g.col_sums();
        for t in (0..self.us.len()).rev() {
            let u = &self.us[t];
            let v_prev = &self.vs[t];
            let v = &self.vs[t + 1];
            // v_j = b_j − LSE_i(Z_ij + u_i)
            for i in 0..rows {
                let mut acc = 0.0;
                for j in 0..cols {
                    let q = (self.z.get(i, j) + u[i] + v[j] - self.log_b[j]).exp();
                    let w = vbar[j] * q;
                    zbar.set(i, j, zbar.get(i, j) - w);
                    acc += w;
                }
                ubar[i] -= acc;
            }
            // u_i = a_i − LSE_j(Z_ij + v_prev_j)
            let mut next_vbar = vec![0.0; cols];
            for i in 0..rows {
                for j in 0..cols {
                    let p = (self.z.get(i, j) + v_prev[j] + u[i] - self.log_a[i]).exp();
                    let w = ubar[i] * p;
                    zbar.set(i, j, zbar.get(i, j) - w);
                    next_vbar[j] -= w;
                }
            }
            vbar = next_vbar;
            ubar = vec![0.0; rows];
        }
        let (m, n) = (rows - 1, cols - 1);
        let sbar = DenseMatrix::from_fn(m, n, |i, j| zbar.get(i, j) / self.epsilon);
        let mut bin_bar = 0.0;
        for i in 0..rows {
            bin_bar += zbar.get(i, n);
        }
        for j in 0..n {
            bin_bar += zbar.get(m, j);
        }
        (loss, sbar, bin_bar / self.epsilon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::gt::nll_loss;
    use crate::matching::{sinkhorn, SinkhornConfig};
    use crate::seed::rng_from_seed;
    use rand::Rng;

    fn problem(seed: u64) -> (DenseMatrix, GroundTruthAssignment) {
        let mut rng = rng_from_seed(seed);
        let s = DenseMatrix::from_fn(5, 4, |_, _| rng.random_range(-1.0..1.0));
        let gt = GroundTruthAssignment::from_source_matches(vec![Some(2), None, Some(0), Some(3), None], 4);
        (s, gt)
    }

    #[test]
    fn matches_sinkhorn_without_early_exit() {
        let (s, _) = problem(1);
        let cfg = SinkhornConfig { tolerance: 0.0, iters: 25, bin_score: 0.3, epsilon: 0.2 };
        let (plan, stats) = sinkhorn(&s, &cfg);
        assert_eq!(stats.iterations, 25);
        let unrolled = UnrolledSinkhorn::forward(&s, 0.3, 0.2, 25).plan();
        assert!(plan.matrix.max_abs_diff(&unrolled.matrix) < 1e-12);
    }

    #[test]
    fn score_and_bin_gradients_match_finite_differences() {
        let (s, gt) = problem(2);
        let (eps, bin, iters) = (0.1, 0.2, 15);
        let f = |s: &DenseMatrix, bin: f64| nll_loss(&UnrolledSinkhorn::forward(s, bin, eps, iters).plan(), &gt).unwrap();
        let (loss, sbar, bbar) = UnrolledSinkhorn::forward(&s, bin, eps, iters).nll_backward(&gt);
        assert!((loss - f(&s, bin)).abs() < 1e-12);
        let h = 1e-6;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.rows() {
            for j in 0..s.cols() {
                let mut p = s.clone();
                let mut m = s.clone();
                p.set(i, j, s.get(i, j) + h);
                m.set(i, j, s.get(i, j) - h);
                let fd = (f(&p, bin) - f(&m, bin)) / (2.0 * h);
                num += (fd - sbar.get(i, j)).powi(2);
                den += fd * fd;
            }
        }
        assert!((num / den).sqrt() < 1e-4);
        let fd = (f(&s, bin + h) - f(&s, bin - h)) / (2.0 * h);
        assert!((fd - bbar).abs() < 1e-4 * fd.abs().max(1e-3));
    }
}
