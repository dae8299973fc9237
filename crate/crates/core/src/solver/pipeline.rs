use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::descriptors::{estimate_normals, fpfh, score_map, standardize_jointly, Orientation};
use crate::error::{Error, Result};
use crate::matching::{select_hard, select_top_k, select_weighted, sinkhorn, softmax_rows, SinkhornConfig};
use crate::preprocess::{
    denormalize_pose, enforce_count_ratio, normalize_pair, voxel_downsample, NormalizationRecord,
    VoxelParams,
};
use crate::seed::derive_seed;

use super::consistency::consistent_subset;
use super::icp::{icp, IcpConfig};
use super::procrustes::procrustes;
use super::{Diagnostics, RegistrationResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MatchingMode {
    /// Row-wise softmax with no outlier bins.
    Softmax { temperature: f64 },
    Sinkhorn(SinkhornConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SelectionMode {
    Weighted,
    Hard { threshold: f64 },
    /// The `k` best targets of every source with mass at least `min_mass`,
    /// left for the consistency filter to disambiguate.
    TopK { k: usize, min_mass: f64 },
}

impl SelectionMode {
    /// Top-`k` candidates down to a mass of 0.01.
    pub fn top_k(k: usize) -> Self {
        SelectionMode::TopK { k, min_mass: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub normalize: bool,
    /// Same-size voxel downsampling of both clouds plus the count-ratio cap.
    pub voxel: bool,
    pub voxel_params: VoxelParams,
    /// Neighborhood size for normal estimation.
    pub normal_neighbors: usize,
    /// Defaults to ten voxel edges.
    pub fpfh_radius: Option<f64>,
    /// Z-score descriptor dimensions jointly over both clouds before scoring.
    pub standardize_descriptors: bool,
    pub matching: MatchingMode,
    pub selection: SelectionMode,
    /// Length-consistency pruning of hard-selected pairs before Procrustes,
    /// with this tolerance in normalized units.
    pub consistency_tolerance: Option<f64>,
    /// Refinement on the normalized, full-resolution clouds.
    pub icp: Option<IcpConfig>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            normalize: true,
            voxel: true,
            voxel_params: VoxelParams::default(),
            normal_neighbors: 16,
            fpfh_radius: None,
            standardize_descriptors: true,
            matching: MatchingMode::Sinkhorn(SinkhornConfig {
                epsilon: 0.02,
                iters: 50,
                ..SinkhornConfig::default()
            }),
            selection: SelectionMode::Hard { threshold: 0.05 },
            consistency_tolerance: Some(0.1),
            icp: Some(IcpConfig {
                max_iters: 30,
                tol: 1e-6,
                max_correspondence_distance: Some(0.1),
                reciprocal: true,
            }),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn fpfh_radius(&self) -> f64 {
        self.fpfh_radius.unwrap_or(10.0 * self.voxel_params.voxel_size)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.voxel_params.voxel_size > 0.0) {
            return bad(format!("voxel size must be positive, got {}", self.voxel_params.voxel_size));
        }
        if !(self.voxel_params.target_ratio > 0.0) {
            return bad(format!("target ratio must be positive, got {}", self.voxel_params.target_ratio));
        }
        if self.normal_neighbors < 3 {
            return bad("normal estimation needs at least 3 neighbors".into());
        }
        if !(self.fpfh_radius() > 0.0) {
            return bad(format!("FPFH radius must be positive, got {}", self.fpfh_radius()));
        }
        match self.matching {
            MatchingMode::Softmax { temperature } if !(temperature > 0.0) => {
                return bad(format!("softmax temperature must be positive, got {temperature}"))
            }
            MatchingMode::Sinkhorn(s) if s.iters == 0 || !(s.epsilon > 0.0) => {
                return bad("sinkhorn needs iters ≥ 1 and epsilon > 0".into())
            }
            _ => {}
        }
        if let Some(tol) = self.consistency_tolerance {
            if !(tol > 0.0) {
                return bad(format!("consistency tolerance must be positive, got {tol}"));
            }
        }
        if let SelectionMode::Hard { threshold } = self.selection {
            if !(threshold > 0.0 && threshold < 1.0) {
                return bad(format!("hard-selection threshold must lie in (0, 1), got {threshold}"));
            }
        }
        if let SelectionMode::TopK { k, min_mass } = self.selection {
            if k == 0 || !(min_mass > 0.0 && min_mass < 1.0) {
                return bad(format!("top-k selection needs k ≥ 1 and mass in (0, 1), got k = {k}, mass {min_mass}"));
            }
        }
        Ok(())
    }
}

/// Normalize → voxelize → cap count ratio → normals + FPFH → score map →
/// assignment → selection → Procrustes → optional ICP → back to original
/// units.
pub fn register(source: &PointCloud, target: &PointCloud, cfg: &PipelineConfig) -> Result<RegistrationResult> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(Error::EmptyCloud("source"));
    }
    if target.is_empty() {
        return Err(Error::NoCorrespondences);
    }
    let mut diag = Diagnostics::default();
    let (src_n, tgt_n, rec) = if cfg.normalize {
        normalize_pair(source, target)?
    } else {
        (source.clone(), target.clone(), NormalizationRecord::identity())
    };
    diag.normalization = Some(rec);

    let (src_d, tgt_d) = if cfg.voxel {
        let vs = cfg.voxel_params.voxel_size;
        let s = voxel_downsample(&src_n, vs);
        let t = voxel_downsample(&tgt_n, vs);
        enforce_count_ratio(&s, &t, &cfg.voxel_params, derive_seed(cfg.seed, 0))?
    } else {
        (src_n.clone(), tgt_n.clone())
    };
    diag.source_points = src_d.len();
    diag.target_points = tgt_d.len();

    let with_normals = |pc: &PointCloud| -> Result<(PointCloud, usize)> {
        let k = cfg.normal_neighbors.min(pc.len());
        let est = estimate_normals(pc, k, Orientation::AlongExisting)?;
        Ok((est.cloud, est.degenerate.len()))
    };
    let (src_d, ds) = with_normals(&src_d)?;
    let (tgt_d, dt) = with_normals(&tgt_d)?;
    diag.degenerate_normals = ds + dt;
    let radius = cfg.fpfh_radius();
    diag.fpfh_radius = Some(radius);
    let fx = fpfh(&src_d, radius)?;
    let fy = fpfh(&tgt_d, radius)?;
    diag.isolated_points = fx.isolated.iter().chain(&fy.isolated).filter(|&&b| b).count();
    let (fx, fy) = if cfg.standardize_descriptors {
        standardize_jointly(&fx, &fy)?
    } else {
        (fx, fy)
    };
    let scores = score_map(&fx, &fy)?;

    let plan = match cfg.matching {
        MatchingMode::Softmax { temperature } => softmax_rows(&scores, temperature),
        MatchingMode::Sinkhorn(s) => {
            let (plan, stats) = sinkhorn(&scores, &s);
            diag.sinkhorn = Some(stats);
            plan
        }
    };
    let picked = match cfg.selection {
        SelectionMode::Weighted => None,
        SelectionMode::Hard { threshold } => {
            diag.selection_threshold = Some(threshold);
            Some(select_hard(&plan, threshold))
        }
        SelectionMode::TopK { k, min_mass } => {
            diag.selection_threshold = Some(min_mass);
            Some(select_top_k(&plan, k, min_mass))
        }
    };
    let corr = match picked {
        None => {
            let w = select_weighted(&plan);
            diag.selected = w.len();
            w
        }
        Some(picked) => {
            diag.selected = picked.len();
            match cfg.consistency_tolerance {
                Some(tol) => {
                    let kept = consistent_subset(&picked, &src_d, &tgt_d, tol);
                    diag.consistent = Some(kept.len());
                    kept
                }
                None => picked,
            }
        }
    };
    if corr.is_empty() {
        return Err(Error::NoCorrespondences);
    }
    let initial = procrustes(&corr, &src_d, &tgt_d)?;

    let (normalized_pose, count, rms, converged) = match &cfg.icp {
        Some(icp_cfg) => {
            let refined = icp(&src_n, &tgt_n, &initial, icp_cfg)?;
            diag.icp_iterations = refined.diagnostics.icp_iterations;
            let ok = refined.converged && diag.sinkhorn.is_none_or(|s| s.converged);
            (refined.pose, refined.correspondence_count, refined.inlier_rms, ok)
        }
        None => {
            let (sum, wsum) = corr.pairs.iter().fold((0.0, 0.0), |(s, w), c| {
                let r = initial.apply_point(&src_d.points[c.source]) - tgt_d.points[c.target];
                (s + c.weight * r.norm_squared(), w + c.weight)
            });
            let ok = diag.sinkhorn.is_none_or(|s| s.converged);
            (initial, corr.len(), (sum / wsum).sqrt(), ok)
        }
    };
    Ok(RegistrationResult {
        pose: denormalize_pose(&normalized_pose, &rec),
        normalized_pose,
        correspondence_count: count,
        inlier_rms: rms / rec.scale,
        converged,
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{euler_xyz, rotation_error, EulerRanges, RigidTransform, Vec3};
    use crate::preprocess::make_synthetic_pair;
    use crate::sampling::sample_surface;
    use crate::shapes;

    #[test]
    fn exact_copy_recovered() {
        let src = sample_surface(&shapes::blob(3), 1024, 1).unwrap().without_normals();
        let gt = RigidTransform::new(euler_xyz(25.0, -30.0, 40.0), Vec3::new(0.5, -0.2, 0.3));
        let tgt = src.transformed(&gt);
        let r = register(&src, &tgt, &PipelineConfig::default()).unwrap();
        assert!(rotation_error(&r.pose.rotation, &gt.rotation) < 1.0);
        assert!((r.pose.translation - gt.translation).norm() < 0.02);
    }

    #[test]
    fn empty_target_has_no_correspondences() {
        let src = sample_surface(&shapes::blob(3), 200, 1).unwrap();
        let r = register(&src, &PointCloud::default(), &PipelineConfig::default());
        assert!(matches!(r, Err(Error::NoCorrespondences)));
    }

    #[test]
    fn deterministic() {
        let pair = make_synthetic_pair(&shapes::blob(5), &EulerRanges::partial_45(), 1024, 768, 9).unwrap();
        let cfg = PipelineConfig { seed: 4, ..PipelineConfig::default() };
        let a = register(&pair.source, &pair.target, &cfg).unwrap();
        let b = register(&pair.source, &pair.target, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn equivariant_to_target_rotation_without_voxels() {
        let src = sample_surface(&shapes::blob(8), 500, 2).unwrap().without_normals();
        let gt = RigidTransform::new(euler_xyz(10.0, 20.0, -15.0), Vec3::new(0.1, 0.0, 0.2));
        let tgt = src.transformed(&gt);
        let q = RigidTransform::new(euler_xyz(-35.0, 60.0, 5.0), Vec3::new(1.0, 2.0, -1.0));
        let cfg = PipelineConfig { voxel: false, ..PipelineConfig::default() };
        let a = register(&src, &tgt, &cfg).unwrap();
        let b = register(&src, &tgt.transformed(&q), &cfg).unwrap();
        let expected = q.compose(&a.pose);
        assert!((b.pose.rotation - expected.rotation).abs().max() < 1e-6);
        assert!((b.pose.translation - expected.translation).norm() < 1e-6);
    }

    #[test]
    fn invalid_config_rejected() {
        let src = sample_surface(&shapes::blob(3), 100, 1).unwrap();
        let cfg = PipelineConfig { selection: SelectionMode::Hard { threshold: 1.5 }, ..PipelineConfig::default() };
        assert!(matches!(register(&src, &src, &cfg), Err(Error::InvalidConfig(_))));
    }
}
