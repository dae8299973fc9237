use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cloud::PointCloud;
use crate::dense::DenseMatrix;
use crate::descriptors::{estimate_normals, fpfh, DescriptorSet, Orientation, FPFH_DIM};
use crate::error::{Error, Result};
use crate::geometry::{EulerRanges, RigidTransform};
use crate::preprocess::{make_synthetic_pair, normalize_pair, normalize_pose};
use crate::seed::{derive_seed, rng_from_seed};
use crate::shapes;

use super::batchnorm::{batch_stats, batchnorm_backward, batchnorm_forward, BatchNormState, BnMode, BN_EPS};
use super::gt::{build_gt_assignment, GroundTruthAssignment};
use super::unrolled::UnrolledSinkhorn;

/// Coordinates, normal and FPFH histogram.
pub const FEATURE_DIM: usize = 6 + FPFH_DIM;

/// One row of [`FEATURE_DIM`] values per point. Panics without normals.
pub fn point_features(pc: &PointCloud, desc: &DescriptorSet) -> DenseMatrix {
    let normals = pc.normals.as_ref().expect("point features need normals");
    assert_eq!(desc.len(), pc.len());
    let mut out = DenseMatrix::zeros(pc.len(), FEATURE_DIM);
    for i in 0..pc.len() {
        let row = out.row_mut(i);
        row[..3].copy_from_slice(pc.points[i].as_slice());
        row[3..6].copy_from_slice(normals[i].as_slice());
        row[6..].copy_from_slice(desc.row(i));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub embed_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub sinkhorn_iters: usize,
    pub epsilon: f64,
    pub initial_bin_score: f64,
    pub learn_bin_score: bool,
    pub bn_mode: BnMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            embed_dim: 16,
            learning_rate: 0.05,
            epochs: 50,
            seed: 0,
            sinkhorn_iters: 20,
            epsilon: 0.1,
            initial_bin_score: 0.0,
            learn_bin_score: true,
            bn_mode: BnMode::Current,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.embed_dim == 0 {
            return bad("embedding dimension must be positive");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning rate must be a finite non-negative number");
        }
        if self.sinkhorn_iters == 0 {
            return bad("sinkhorn needs at least one iteration");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        Ok(())
    }

    /// SHA-256 of every field except `epochs`, so a run can be extended.
    pub fn hash(&self) -> String {
        let mut c = *self;
        c.epochs = 0;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Features of one registration pair plus its supervision.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub source_features: DenseMatrix,
    pub target_features: DenseMatrix,
    pub gt: GroundTruthAssignment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: DenseMatrix,
    pub bin_score: f64,
}

/// Linear projection + batch normalization + row normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEncoder {
    /// `embed_dim × FEATURE_DIM`.
    pub weights: DenseMatrix,
    pub bin_score: f64,
    pub batchnorm: BatchNormState,
}

struct Embedded {
    features: DenseMatrix,
    normalized: DenseMatrix,
    var: Vec<f64>,
    unit: DenseMatrix,
    norms: Vec<f64>,
}

impl ToyEncoder {
    /// Gaussian weights with standard deviation `1/√F`.
    pub fn new(cfg: &TrainConfig, feature_dim: usize) -> Self {
        let mut rng = rng_from_seed(derive_seed(cfg.seed, 0x77));
        let normal = Normal::new(0.0, 1.0 / (feature_dim as f64).sqrt()).expect("valid deviation");
        let weights = DenseMatrix::from_fn(cfg.embed_dim, feature_dim, |_, _| normal.sample(&mut rng));
        ToyEncoder {
            weights,
            bin_score: cfg.initial_bin_score,
            batchnorm: BatchNormState::new(cfg.embed_dim, cfg.bn_mode),
        }
    }

    /// Unit-norm embeddings, one row per point.
    pub fn embed(&mut self, features: &DenseMatrix, training: bool) -> Result<DenseMatrix> {
        let h = features.matmul_transposed(&self.weights);
        let y = batchnorm_forward(&h, &mut self.batchnorm, training)?;
        Ok(unit_rows(&y).0)
    }

    fn embed_train(&self, features: &DenseMatrix) -> Result<Embedded> {
        if features.cols() != self.weights.cols() {
            return Err(Error::DimensionMismatch(format!(
                "features have {} columns, encoder expects {}",
                features.cols(),
                self.weights.cols()
            )));
        }
        let h = features.matmul_transposed(&self.weights);
        if h.rows() < 2 {
            return Err(Error::BatchTooSmall(h.rows()));
        }
        let (mean, var) = batch_stats(&h);
        let normalized = DenseMatrix::from_fn(h.rows(), h.cols(), |i, k| {
            (h.get(i, k) - mean[k]) / (var[k] + BN_EPS).sqrt()
        });
        let (unit, norms) = unit_rows(&normalized);
        Ok(Embedded {
            features: features.clone(),
            normalized,
            var,
            unit,
            norms,
        })
    }

    /// NLL of the unrolled Sinkhorn plan and its gradients, using batch
    /// statistics for both clouds.
    pub fn loss_and_grad(&self, sample: &TrainingSample, cfg: &TrainConfig) -> Result<(f64, Gradients)> {
        let ex = self.embed_train(&sample.source_features)?;
        let ey = self.embed_train(&sample.target_features)?;
        let s = ex.unit.matmul_transposed(&ey.unit);
        let unrolled = UnrolledSinkhorn::forward(&s, self.bin_score, cfg.epsilon, cfg.sinkhorn_iters);
        let (loss, sbar, bin_bar) = unrolled.nll_backward(&sample.gt);
        // S = Ex·Eyᵀ
        let gx = sbar.matmul(&ey.unit);
        let gy = sbar.transpose().matmul(&ex.unit);
        let gw_x = self.backward_embedding(&ex, &gx);
        let gw_y = self.backward_embedding(&ey, &gy);
        let weights = DenseMatrix::from_fn(gw_x.rows(), gw_x.cols(), |i, j| gw_x.get(i, j) + gw_y.get(i, j));
        Ok((loss, Gradients { weights, bin_score: bin_bar }))
    }

    fn backward_embedding(&self, e: &Embedded, grad_unit: &DenseMatrix) -> DenseMatrix {
        // u = y/‖y‖  ⇒  ȳ = (ū − u·(u·ū))/‖y‖
        let gy = DenseMatrix::from_fn(grad_unit.rows(), grad_unit.cols(), |i, k| {
            if e.norms[i] == 0.0 {
                return 0.0;
            }
            let u = e.unit.row(i);
            let dot: f64 = u.iter().zip(grad_unit.row(i)).map(|(a, b)| a * b).sum();
            (grad_unit.get(i, k) - u[k] * dot) / e.norms[i]
        });
        let gh = batchnorm_backward(&e.normalized, &e.var, &gy);
        // H = F·Wᵀ  ⇒  W̄ = H̄ᵀ·F
        gh.transpose().matmul(&e.features)
    }
}

fn unit_rows(y: &DenseMatrix) -> (DenseMatrix, Vec<f64>) {
    let norms: Vec<f64> = (0..y.rows())
        .map(|i| y.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let unit = DenseMatrix::from_fn(y.rows(), y.cols(), |i, k| {
        if norms[i] > 0.0 {
            y.get(i, k) / norms[i]
        } else {
            0.0
        }
    });
    (unit, norms)
}

/// Training state that can be written to disk and resumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub config: TrainConfig,
    pub config_hash: String,
    /// Epochs completed.
    pub epoch: usize,
    pub encoder: ToyEncoder,
    /// Loss before any update.
    pub initial_loss: f64,
    /// Mean loss of each completed epoch.
    pub loss_history: Vec<f64>,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Mean loss over `samples` without updating anything.
pub fn evaluate_loss(encoder: &ToyEncoder, samples: &[TrainingSample], cfg: &TrainConfig) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        total += encoder.loss_and_grad(s, cfg)?.0;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Per-sample gradient descent for `cfg.epochs` epochs, visiting samples in a
/// seeded order each epoch. Passing a checkpoint continues from its epoch;
/// its config must hash the same as `cfg`.
pub fn train_toy_encoder(
    samples: &[TrainingSample],
    cfg: &TrainConfig,
    resume: Option<Checkpoint>,
) -> Result<Checkpoint> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidConfig("training needs at least one pair".into()));
    }
    let mut state = match resume {
        Some(ck) => {
            if ck.config_hash != cfg.hash() {
                return Err(Error::InvalidConfig("checkpoint was written with a different configuration".into()));
            }
            ck
        }
        None => {
            let encoder = ToyEncoder::new(cfg, samples[0].source_features.cols());
            let initial_loss = evaluate_loss(&encoder, samples, cfg)?;
            Checkpoint {
                version: crate::VERSION.to_string(),
                config: *cfg,
                config_hash: cfg.hash(),
                epoch: 0,
                encoder,
                initial_loss,
                loss_history: Vec::new(),
            }
        }
    };
    state.config = *cfg;
    let mut last_finite = state.loss_history.last().copied().unwrap_or(state.initial_loss);
    while state.epoch < cfg.epochs {
        let epoch = state.epoch;
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng_from_seed(derive_seed(cfg.seed, 1000 + epoch as u64)));
        let mut losses = vec![0.0; samples.len()];
        for &k in &order {
            let (loss, g) = state.encoder.loss_and_grad(&samples[k], cfg)?;
            if !loss.is_finite() || g.weights.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    last_finite_loss: last_finite,
                });
            }
            losses[k] = loss;
            let enc = &mut state.encoder;
            for (w, gw) in enc.weights.as_mut_slice().iter_mut().zip(g.weights.as_slice()) {
                *w -= cfg.learning_rate * gw;
            }
            if cfg.learn_bin_score {
                enc.bin_score -= cfg.learning_rate * g.bin_score;
            }
            if cfg.bn_mode == BnMode::Running {
                let h = samples[k].source_features.matmul_transposed(&enc.weights);
                batchnorm_forward(&h, &mut enc.batchnorm, true)?;
            }
        }
        // Summed in sample order so the value does not depend on the shuffle.
        let mean = losses.iter().sum::<f64>() / samples.len() as f64;
        last_finite = mean;
        state.loss_history.push(mean);
        state.epoch += 1;
    }
    Ok(state)
}

/// Easy synthetic training pairs: small rotations of a procedural blob,
/// cropped to 80% on both sides, in normalized units.
pub fn toy_dataset(n_pairs: usize, n_points: usize, seed: u64) -> Result<Vec<TrainingSample>> {
    let ranges = EulerRanges {
        rotation_deg: [(-20.0, 20.0); 3],
        translation: [(-0.2, 0.2); 3],
    };
    let keep = (n_points * 4 / 5).max(8);
    (0..n_pairs)
        .map(|k| {
            let s = derive_seed(seed, k as u64);
            let pair = make_synthetic_pair(&shapes::blob(s), &ranges, n_points, keep, s)?;
            training_sample(&pair.source, &pair.target, &pair.gt)
        })
        .collect()
}

/// Normalizes a pair and builds features plus the ground-truth assignment
/// (match radius 0.05 normalized units).
pub fn training_sample(source: &PointCloud, target: &PointCloud, gt: &RigidTransform) -> Result<TrainingSample> {
    let (src, tgt, rec) = normalize_pair(source, target)?;
    let gt = build_gt_assignment(&src, &tgt, &normalize_pose(gt, &rec), 0.05);
    Ok(TrainingSample {
        source_features: cloud_features(&src)?,
        target_features: cloud_features(&tgt)?,
        gt,
    })
}

fn cloud_features(pc: &PointCloud) -> Result<DenseMatrix> {
    let k = 8.min(pc.len());
    let with_normals = estimate_normals(&pc.without_normals(), k, Orientation::AwayFromCentroid)?.cloud;
    let desc = fpfh(&with_normals, 0.5)?;
    Ok(point_features(&with_normals, &desc))
}
