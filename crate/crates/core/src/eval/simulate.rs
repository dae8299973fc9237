//! Score-map simulation: matching problems with a known inlier set, no
//! descriptors involved.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::geometry::{rotation_error, EulerRanges, RigidTransform, Vec3};
use crate::matching::{select_hard, select_weighted, sinkhorn, CorrespondenceSet, SinkhornConfig};
use crate::solver::procrustes;

use super::benchmark::FAILURE_ROTATION_DEG;
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchingProblemConfig {
    /// Source points that have a partner in the target.
    pub inliers: usize,
    /// Fraction of source rows that are outliers.
    pub outlier_fraction: f64,
    /// Added to every true-match score on top of the background noise.
    pub margin: f64,
    /// Standard deviation of the background scores.
    pub score_noise: f64,
    /// Outlier rows are shifted down by this much.
    pub outlier_offset: f64,
    /// Gaussian jitter added to the target coordinates.
    pub position_noise: f64,
}

impl Default for MatchingProblemConfig {
    fn default() -> Self {
        MatchingProblemConfig {
            inliers: 40,
            outlier_fraction: 0.3,
            margin: 1.0,
            score_noise: 0.3,
            outlier_offset: 0.0,
            position_noise: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MatchingProblem {
    pub source: PointCloud,
    pub target: PointCloud,
    pub scores: DenseMatrix,
    /// `Some(j)` for inlier rows, `None` for injected outliers.
    pub truth: Vec<Option<usize>>,
    pub gt: RigidTransform,
}

/// Source rows are a random mix of inliers and outliers; target columns are a
/// random permutation of the inliers' partners.
pub fn simulate_matching_problem(cfg: &MatchingProblemConfig, seed: u64) -> Result<MatchingProblem> {
    if cfg.inliers < 3 || !(0.0..1.0).contains(&cfg.outlier_fraction) {
        return Err(Error::InvalidConfig(format!("invalid matching problem {cfg:?}")));
    }
    let mut rng = rng_from_seed(seed);
    let n_out = ((cfg.inliers as f64) * cfg.outlier_fraction / (1.0 - cfg.outlier_fraction)).round() as usize;
    let m = cfg.inliers + n_out;
    let n = cfg.inliers;
    let gt = EulerRanges::full().sample(&mut rng_from_seed(derive_seed(seed, 1)));
    let mut unit = || Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let source: Vec<Vec3> = (0..m).map(|_| unit()).collect();

    let mut rows: Vec<usize> = (0..m).collect();
    rows.shuffle(&mut rng);
    let mut cols: Vec<usize> = (0..n).collect();
    cols.shuffle(&mut rng);
    let mut truth = vec![None; m];
    for (k, &i) in rows[..n].iter().enumerate() {
        truth[i] = Some(cols[k]);
    }

    let pos_noise = Normal::new(0.0, cfg.position_noise.max(0.0)).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut target = vec![Vec3::zeros(); n];
    for (i, t) in truth.iter().enumerate() {
        if let Some(j) = *t {
            let jitter = Vec3::new(pos_noise.sample(&mut rng), pos_noise.sample(&mut rng), pos_noise.sample(&mut rng));
            target[j] = gt.apply_point(&source[i]) + jitter;
        }
    }

    let noise = Normal::new(0.0, cfg.score_noise.max(0.0)).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut scores = DenseMatrix::from_fn(m, n, |_, _| noise.sample(&mut rng));
    for (i, t) in truth.iter().enumerate() {
        if t.is_none() {
            for j in 0..n {
                scores.set(i, j, scores.get(i, j) - cfg.outlier_offset);
            }
        }
    }
    for (i, t) in truth.iter().enumerate() {
        if let Some(j) = *t {
            scores.set(i, j, scores.get(i, j) + cfg.margin);
        }
    }
    Ok(MatchingProblem {
        source: PointCloud::new(source),
        target: PointCloud::new(target),
        scores,
        truth,
        gt,
    })
}

/// Pose errors of hard and weighted selection on one simulated problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrial {
    /// Degrees; [`FAILURE_ROTATION_DEG`] when selection left fewer than three pairs.
    pub hard_deg: f64,
    pub weighted_deg: f64,
    pub hard_pairs: usize,
    pub weighted_pairs: usize,
    /// Hard-selected pairs that are true matches.
    pub hard_correct: usize,
}

/// Runs Sinkhorn on the problem's scores, then solves Procrustes once from the
/// hard selection and once from the weighted one.
pub fn selection_trial(p: &MatchingProblem, sinkhorn_cfg: &SinkhornConfig, threshold: f64) -> SelectionTrial {
    let (plan, _) = sinkhorn(&p.scores, sinkhorn_cfg);
    let hard = select_hard(&plan, threshold);
    let weighted = select_weighted(&plan);
    let err = |c: &CorrespondenceSet| match procrustes(c, &p.source, &p.target) {
        Ok(pose) => rotation_error(&pose.rotation, &p.gt.rotation),
        Err(_) => FAILURE_ROTATION_DEG,
    };
    SelectionTrial {
        hard_deg: err(&hard),
        weighted_deg: err(&weighted),
        hard_pairs: hard.len(),
        weighted_pairs: weighted.len(),
        hard_correct: hard.pairs.iter().filter(|c| p.truth[c.source] == Some(c.target)).count(),
    }
}
