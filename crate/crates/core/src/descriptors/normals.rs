use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::linalg::symmetric_eigen;
use crate::spatial::HashGrid;

/// How the sign ambiguity of PCA normals is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Orientation {
    /// `n·(viewpoint − p) ≥ 0`; use the sensor origin for scans.
    TowardViewpoint(Vec3),
    /// `n·(p − centroid) ≥ 0`; suits closed model surfaces and is invariant
    /// to rigid motion of the cloud.
    AwayFromCentroid,
    /// Agree with the normals the cloud already carries (e.g. mesh face
    /// normals); falls back to [`Orientation::AwayFromCentroid`] without them.
    AlongExisting,
}

#[derive(Debug, Clone)]
pub struct NormalEstimate {
    pub cloud: PointCloud,
    /// Points whose neighborhood had rank < 2; their normal is set to +z.
    pub degenerate: Vec<usize>,
}

/// PCA normals from the `k` nearest neighbors (the point itself included).
pub fn estimate_normals(pc: &PointCloud, k: usize, orientation: Orientation) -> Result<NormalEstimate> {
    if k < 3 {
        return Err(Error::InvalidConfig(format!("normal estimation needs k >= 3, got {k}")));
    }
    if pc.len() < k {
        return Err(Error::NotEnoughPoints {
            requested: k,
            available: pc.len(),
        });
    }
    let grid = HashGrid::with_auto_cell(&pc.points);
    let centroid = pc.centroid().unwrap_or_else(Vec3::zeros);
    let existing = pc.normals.as_deref();
    let results: Vec<(Vec3, bool)> = pc
        .points
        .par_iter()
        .enumerate()
        .map(|(idx, p)| {
            let nbrs = grid.knn(p, k);
            let mean = nbrs.iter().map(|&(i, _)| pc.points[i]).sum::<Vec3>() / nbrs.len() as f64;
            let mut cov = Matrix3::zeros();
            for &(i, _) in &nbrs {
                let d = pc.points[i] - mean;
                cov += d * d.transpose();
            }
            let (vals, vecs) = symmetric_eigen(&cov);
            if !(vals[0] > 0.0) || vals[1] <= 1e-12 * vals[0] {
                return (Vec3::z(), true);
            }
            let mut n: Vec3 = vecs.column(2).into_owned().normalize();
            let flip = match orientation {
                Orientation::TowardViewpoint(v) => n.dot(&(v - p)) < 0.0,
                Orientation::AlongExisting if existing.is_some() => n.dot(&existing.unwrap()[idx]) < 0.0,
                Orientation::AwayFromCentroid | Orientation::AlongExisting => n.dot(&(p - centroid)) < 0.0,
            };
            if flip {
                n = -n;
            }
            (n, false)
        })
        .collect();
    let degenerate = results
        .iter()
        .enumerate()
        .filter(|(_, r)| r.1)
        .map(|(i, _)| i)
        .collect();
    let normals = results.into_iter().map(|r| r.0).collect();
    Ok(NormalEstimate {
        cloud: PointCloud::with_normals(pc.points.clone(), normals)?,
        degenerate,
    })
}
