//! Training-side pieces at toy scale: ground-truth assignments, the NLL loss
//! on the Sinkhorn plan, batch normalization, and a linear encoder trained
//! with hand-derived gradients through unrolled Sinkhorn.

mod batchnorm;
mod encoder;
mod gt;
mod unrolled;

use rand::Rng;
use rand::seq::SliceRandom;

use crate::dense::DenseMatrix;
use crate::error::Result;
use crate::seed::rng_from_seed;

pub use batchnorm::{batch_stats, batchnorm_backward, batchnorm_forward, BatchNormState, BnMode, BN_EPS};
pub use encoder::{
    evaluate_loss, point_features, toy_dataset, train_toy_encoder, training_sample, Checkpoint, Gradients, ToyEncoder,
    TrainConfig, TrainingSample, FEATURE_DIM,
};
pub use gt::{build_gt_assignment, nll_loss, GroundTruthAssignment};
pub use unrolled::UnrolledSinkhorn;

/// Random features for `n` source and `n` target points and a random partial
/// matching where roughly a quarter of the points are outliers.
pub fn random_problem(n: usize, feature_dim: usize, seed: u64) -> TrainingSample {
    let mut rng = rng_from_seed(seed);
    let mut feats = || DenseMatrix::from_fn(n, feature_dim, |_, _| rng.random_range(-1.0..1.0));
    let source_features = feats();
    let target_features = feats();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let matches = perm
        .into_iter()
        .map(|j| if rng.random_bool(0.25) { None } else { Some(j) })
        .collect();
    TrainingSample {
        source_features,
        target_features,
        gt: GroundTruthAssignment::from_source_matches(matches, n),
    }
}

/// Hand-derived gradient against central differences with step `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    /// `‖analytic − numeric‖ / ‖numeric‖` over all weights and the bin score.
    pub relative_error: f64,
    pub numeric_norm: f64,
}

pub fn gradient_check(encoder: &ToyEncoder, sample: &TrainingSample, cfg: &TrainConfig, h: f64) -> Result<GradientCheck> {
    let (_, g) = encoder.loss_and_grad(sample, cfg)?;
    let loss_at = |enc: &ToyEncoder| enc.loss_and_grad(sample, cfg).map(|r| r.0);
    let mut diff = 0.0;
    let mut norm = 0.0;
    for k in 0..encoder.weights.as_slice().len() {
        let mut plus = encoder.clone();
        let mut minus = encoder.clone();
        plus.weights.as_mut_slice()[k] += h;
        minus.weights.as_mut_slice()[k] -= h;
        let fd = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * h);
        diff += (fd - g.weights.as_slice()[k]).powi(2);
        norm += fd * fd;
    }
    let mut plus = encoder.clone();
    let mut minus = encoder.clone();
    plus.bin_score += h;
    minus.bin_score -= h;
    let fd = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * h);
    diff += (fd - g.bin_score).powi(2);
    norm += fd * fd;
    Ok(GradientCheck {
        relative_error: diff.sqrt() / norm.sqrt().max(f64::MIN_POSITIVE),
        numeric_norm: norm.sqrt(),
    })
}
