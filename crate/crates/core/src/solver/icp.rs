use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{rotation_error_rad, RigidTransform, Vec3};
use crate::spatial::HashGrid;

use super::procrustes::procrustes_points;
use super::{Diagnostics, RegistrationResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcpConfig {
    pub max_iters: usize,
    /// Stop once an update moves less than this (radians and distance units).
    pub tol: f64,
    /// Pairs farther apart than this are ignored; `None` keeps every pair.
    pub max_correspondence_distance: Option<f64>,
    /// Keep a pair only when the source point is also the target point's
    /// nearest source. Drops pairs pulled onto the rim of a partial target.
    #[serde(default)]
    pub reciprocal: bool,
}

impl Default for IcpConfig {
    fn default() -> Self {
        IcpConfig {
            max_iters: 50,
            tol: 1e-9,
            max_correspondence_distance: None,
            reciprocal: false,
        }
    }
}

/// Point-to-point ICP from `init`, matching each moved source point to its
/// nearest target point.
pub fn icp(
    source: &PointCloud,
    target: &PointCloud,
    init: &RigidTransform,
    cfg: &IcpConfig,
) -> Result<RegistrationResult> {
    if source.is_empty() {
        return Err(Error::EmptyCloud("source"));
    }
    if target.is_empty() {
        return Err(Error::EmptyCloud("target"));
    }
    let grid = HashGrid::with_auto_cell(&target.points);
    let source_grid = cfg.reciprocal.then(|| HashGrid::with_auto_cell(&source.points));
    let pairs = |pose: &RigidTransform| pairs(source, &grid, source_grid.as_ref(), pose, cfg.max_correspondence_distance);
    let mut pose = *init;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let (xs, ys, _) = pairs(&pose);
        let delta = procrustes_points(&xs, &ys, None)?;
        pose = delta.compose(&pose);
        iterations += 1;
        let angle = rotation_error_rad(&delta.rotation, &Matrix3::identity());
        if angle < cfg.tol && delta.translation.norm() < cfg.tol {
            converged = true;
            break;
        }
    }
    let (_, _, sq) = pairs(&pose);
    let inlier_rms = if sq.is_empty() {
        f64::INFINITY
    } else {
        (sq.iter().sum::<f64>() / sq.len() as f64).sqrt()
    };
    Ok(RegistrationResult {
        pose,
        normalized_pose: pose,
        correspondence_count: sq.len(),
        inlier_rms,
        converged,
        diagnostics: Diagnostics {
            icp_iterations: Some(iterations),
            ..Diagnostics::default()
        },
    })
}

/// Moved source points with their nearest targets, plus squared distances,
/// after the distance gate and the optional reciprocal check.
fn pairs(
    source: &PointCloud,
    grid: &HashGrid,
    source_grid: Option<&HashGrid>,
    pose: &RigidTransform,
    max_dist: Option<f64>,
) -> (Vec<Vec3>, Vec<Vec3>, Vec<f64>) {
    let mut xs = Vec::with_capacity(source.len());
    let mut ys = Vec::with_capacity(source.len());
    let mut sq = Vec::with_capacity(source.len());
    let inverse = pose.inverse();
    for (i, p) in source.points.iter().enumerate() {
        let q = pose.apply_point(p);
        let bound = max_dist.unwrap_or(f64::INFINITY);
        if let Some((j, d)) = grid.nearest_within(&q, bound) {
            let mutual = source_grid.is_none_or(|sg| {
                sg.nearest_within(&inverse.apply_point(&grid.points()[j]), d * (1.0 + 1e-9) + 1e-12).is_some_and(|(k, _)| k == i)
            });
            if mutual {
                xs.push(q);
                ys.push(grid.points()[j]);
                sq.push(d * d);
            }
        }
    }
    (xs, ys, sq)
}
