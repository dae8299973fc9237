use nalgebra::Matrix3;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec3};
use crate::linalg::svd3;
use crate::matching::CorrespondenceSet;

/// Relative singular-value cutoff below which the cross-covariance is treated
/// as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Weighted rigid alignment of corresponding pairs: minimizes
/// `Σ w‖R·x + t − y‖²` with `det R = +1`.
pub fn procrustes(
    corr: &CorrespondenceSet,
    source: &PointCloud,
    target: &PointCloud,
) -> Result<RigidTransform> {
    let mut xs = Vec::with_capacity(corr.len());
    let mut ys = Vec::with_capacity(corr.len());
    let mut ws = Vec::with_capacity(corr.len());
    for c in &corr.pairs {
        if c.source >= source.len() || c.target >= target.len() {
            return Err(Error::DimensionMismatch(format!(
                "correspondence ({}, {}) out of range for clouds of {} and {} points",
                c.source,
                c.target,
                source.len(),
                target.len()
            )));
        }
        xs.push(source.points[c.source]);
        ys.push(target.points[c.target]);
        ws.push(c.weight);
    }
    procrustes_points(&xs, &ys, Some(&ws))
}

/// [`procrustes`] on paired point lists; `None` means unit weights.
pub fn procrustes_points(xs: &[Vec3], ys: &[Vec3], weights: Option<&[f64]>) -> Result<RigidTransform> {
    if xs.len() != ys.len() || weights.is_some_and(|w| w.len() != xs.len()) {
        return Err(Error::DimensionMismatch("procrustes inputs differ in length".into()));
    }
    if xs.len() < 3 {
        return Err(Error::TooFewCorrespondences(xs.len()));
    }
    let w = |k: usize| weights.map_or(1.0, |w| w[k]);
    if (0..xs.len()).any(|k| !(w(k) > 0.0) || !w(k).is_finite()) {
        return Err(Error::InvalidConfig("correspondence weights must be positive".into()));
    }
    let total: f64 = (0..xs.len()).map(w).sum();
    let mut xbar = Vec3::zeros();
    let mut ybar = Vec3::zeros();
    for k in 0..xs.len() {
        xbar += xs[k] * w(k);
        ybar += ys[k] * w(k);
    }
    xbar /= total;
    ybar /= total;
    let mut h = Matrix3::zeros();
    for k in 0..xs.len() {
        h += (xs[k] - xbar) * (ys[k] - ybar).transpose() * w(k);
    }
    let svd = svd3(&h);
    if svd.rank(RANK_TOL) < 2 {
        return Err(Error::DegenerateConfiguration);
    }
    let rotation = best_rotation(&svd.u, &svd.v);
    Ok(RigidTransform::new(rotation, ybar - rotation * xbar))
}

/// `V·diag(1, 1, det(V·Uᵀ))·Uᵀ`.
pub(crate) fn best_rotation(u: &Matrix3<f64>, v: &Matrix3<f64>) -> Matrix3<f64> {
    let d = (v * u.transpose()).determinant().signum();
    v * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose()
}
