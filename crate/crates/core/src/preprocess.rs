//! Data-processing steps applied before matching: scale normalization with
//! target centering, same-size voxel downsampling, target/source count ratio,
//! k-NN partial crops and synthetic pair generation.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, TriangleMesh};
use crate::error::{Error, Result};
use crate::geometry::{EulerRanges, RigidTransform, Vec3};
use crate::sampling::sample_surface;
use crate::seed::{derive_seed, rng_from_seed};

/// What [`normalize_pair`] did, so that a pose solved in normalized
/// coordinates can be mapped back.
///
/// Normalized source points are `scale·(p − source_offset)`, normalized
/// target points `scale·(q − target_offset)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub scale: f64,
    pub source_offset: Vec3,
    pub target_offset: Vec3,
}

impl NormalizationRecord {
    pub fn identity() -> Self {
        NormalizationRecord {
            scale: 1.0,
            source_offset: Vec3::zeros(),
            target_offset: Vec3::zeros(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelParams {
    /// Edge length of the voxel grid, in normalized units.
    pub voxel_size: f64,
    /// Upper bound on `|target| / |source|` after downsampling.
    pub target_ratio: f64,
}

impl Default for VoxelParams {
    fn default() -> Self {
        VoxelParams {
            voxel_size: 0.05,
            target_ratio: 0.75,
        }
    }
}

/// Centers the source on its bounding-box center and scales it isotropically
/// into `[-1, 1]³`; the target is mean-centered, then scaled by the same factor.
pub fn normalize_pair(
    source: &PointCloud,
    target: &PointCloud,
) -> Result<(PointCloud, PointCloud, NormalizationRecord)> {
    let (lo, hi) = source.bounds().ok_or(Error::EmptyCloud("source"))?;
    let target_offset = target.centroid().ok_or(Error::EmptyCloud("target"))?;
    let source_offset = (lo + hi) * 0.5;
    let half_extent = source
        .points
        .iter()
        .map(|p| (p - source_offset).abs().max())
        .fold(0.0, f64::max);
    let scale = if half_extent > 0.0 { 1.0 / half_extent } else { 1.0 };
    let rec = NormalizationRecord {
        scale,
        source_offset,
        target_offset,
    };
    let src = source.map_points(|p| (p - source_offset) * scale);
    let tgt = target.map_points(|q| (q - target_offset) * scale);
    Ok((src, tgt, rec))
}

/// Maps a pose between normalized clouds back to original units.
///
/// From `s(q − c_t) = R·s(p − c_s) + t_n` it follows that
/// `q = R·p + (t_n/s + c_t − R·c_s)`.
pub fn denormalize_pose(pose: &RigidTransform, rec: &NormalizationRecord) -> RigidTransform {
    let r = pose.rotation;
    RigidTransform::new(
        r,
        pose.translation / rec.scale + rec.target_offset - r * rec.source_offset,
    )
}

/// Inverse of [`denormalize_pose`]: expresses an original-units pose in the
/// normalized frames.
pub fn normalize_pose(pose: &RigidTransform, rec: &NormalizationRecord) -> RigidTransform {
    let r = pose.rotation;
    RigidTransform::new(
        r,
        (pose.translation - rec.target_offset + r * rec.source_offset) * rec.scale,
    )
}

/// One centroid per occupied voxel `floor(p / voxel_size)`, emitted in
/// sorted voxel-key order. Normals, if present, are averaged and
/// renormalized; they are dropped if any voxel's average vanishes.
pub fn voxel_downsample(pc: &PointCloud, voxel_size: f64) -> PointCloud {
    assert!(voxel_size > 0.0, "voxel size must be positive");
    let mut voxels: BTreeMap<(i64, i64, i64), (Vec3, Vec3, usize)> = BTreeMap::new();
    for (i, p) in pc.points.iter().enumerate() {
        let key = (
            (p.x / voxel_size).floor() as i64,
            (p.y / voxel_size).floor() as i64,
            (p.z / voxel_size).floor() as i64,
        );
        let n = pc.normals.as_ref().map_or(Vec3::zeros(), |n| n[i]);
        let e = voxels.entry(key).or_insert((Vec3::zeros(), Vec3::zeros(), 0));
        e.0 += p;
        e.1 += n;
        e.2 += 1;
    }
    let points = voxels.values().map(|(s, _, c)| s / *c as f64).collect();
    let normals = pc.normals.as_ref().and_then(|_| {
        voxels
            .values()
            .map(|(_, n, _)| n.try_normalize(1e-12))
            .collect::<Option<Vec<_>>>()
    });
    PointCloud { points, normals }
}

/// Randomly subsamples the target (keeping order) when it holds more than
/// `floor(target_ratio·|source|)` points. The source is returned unchanged.
pub fn enforce_count_ratio(
    source: &PointCloud,
    target: &PointCloud,
    params: &VoxelParams,
    seed: u64,
) -> Result<(PointCloud, PointCloud)> {
    if source.is_empty() {
        return Err(Error::EmptyCloud("source"));
    }
    if target.is_empty() {
        return Err(Error::EmptyCloud("target"));
    }
    let cap = ((params.target_ratio * source.len() as f64).floor() as usize).max(1);
    if target.len() <= cap {
        return Ok((source.clone(), target.clone()));
    }
    let mut rng = rng_from_seed(seed);
    let mut keep = index::sample(&mut rng, target.len(), cap).into_vec();
    keep.sort_unstable();
    Ok((source.clone(), target.select(&keep)))
}

/// Indices of a random seed point and its `keep − 1` nearest neighbors, in
/// ascending index order.
pub fn partial_crop_indices(pc: &PointCloud, keep: usize, seed: u64) -> Result<Vec<usize>> {
    if keep > pc.len() {
        return Err(Error::NotEnoughPoints {
            requested: keep,
            available: pc.len(),
        });
    }
    if keep == 0 {
        return Ok(Vec::new());
    }
    let center = pc.points[rng_from_seed(seed).random_range(0..pc.len())];
    let mut order: Vec<(usize, f64)> = pc
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| (i, (p - center).norm_squared()))
        .collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut idx: Vec<usize> = order[..keep].iter().map(|o| o.0).collect();
    idx.sort_unstable();
    Ok(idx)
}

pub fn partial_crop(pc: &PointCloud, keep: usize, seed: u64) -> Result<PointCloud> {
    Ok(pc.select(&partial_crop_indices(pc, keep, seed)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPair {
    pub source: PointCloud,
    pub target: PointCloud,
    /// Maps source coordinates onto target coordinates.
    pub gt: RigidTransform,
}

/// Samples `n_sample` surface points, draws a random transform, and crops the
/// original and the transformed copy independently to `n_keep` points each.
pub fn make_synthetic_pair(
    mesh: &TriangleMesh,
    ranges: &EulerRanges,
    n_sample: usize,
    n_keep: usize,
    seed: u64,
) -> Result<SyntheticPair> {
    if !ranges.is_valid() {
        return Err(Error::InvalidConfig(format!("invalid ranges {ranges:?}")));
    }
    let full = sample_surface(mesh, n_sample, derive_seed(seed, 0))?;
    let gt = ranges.sample(&mut rng_from_seed(derive_seed(seed, 1)));
    let moved = full.transformed(&gt);
    let source = partial_crop(&full, n_keep, derive_seed(seed, 2))?;
    let target = partial_crop(&moved, n_keep, derive_seed(seed, 3))?;
    Ok(SyntheticPair { source, target, gt })
}
