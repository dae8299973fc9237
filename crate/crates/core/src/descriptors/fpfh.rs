//! Fast Point Feature Histograms.
//!
//! For every neighbor pair the Darboux frame gives three angular features;
//! each is quantized into 11 bins, giving a 33-dimensional simplified
//! histogram (SPFH) per point. The FPFH of a point is its SPFH plus the
//! inverse-distance weighted mean of its neighbors' SPFHs, with every 11-bin
//! block normalized to unit L1 mass.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::spatial::HashGrid;

pub const FPFH_BINS: usize = 11;
pub const FPFH_DIM: usize = 3 * FPFH_BINS;

/// One descriptor row per point, aligned with the cloud by index.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    dim: usize,
    values: Vec<f64>,
    /// Points that had no neighbor within the radius (zero descriptor).
    pub isolated: Vec<bool>,
}

impl DescriptorSet {
    pub fn new(dim: usize, values: Vec<f64>) -> Self {
        assert!(dim > 0 && values.len() % dim == 0);
        let n = values.len() / dim;
        DescriptorSet {
            dim,
            values,
            isolated: vec![false; n],
        }
    }

    pub fn from_rows(dim: usize, rows: Vec<Vec<f64>>) -> Self {
        assert!(rows.iter().all(|r| r.len() == dim));
        Self::new(dim, rows.into_iter().flatten().collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Rows scaled to unit L2 norm; zero rows stay zero.
    pub fn unit_rows(&self) -> Vec<f64> {
        let mut out = self.values.clone();
        for row in out.chunks_mut(self.dim) {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
        out
    }

    pub fn l1_distance(&self, i: usize, other: &DescriptorSet, j: usize) -> f64 {
        self.row(i).iter().zip(other.row(j)).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// Darboux-frame pair features `(θ, α, φ)`: `θ ∈ [-π, π]`, `α, φ ∈ [-1, 1]`.
///
/// The frame is always anchored at `p1`. Choosing the endpoint by comparing
/// normal angles (as PCL does) makes near-ties flip under rotation.
pub fn pair_features(p1: &Vec3, n1: &Vec3, p2: &Vec3, n2: &Vec3) -> Option<(f64, f64, f64)> {
    let dp = p2 - p1;
    let dist = dp.norm();
    if dist == 0.0 {
        return None;
    }
    let (na, nb) = (n1, n2);
    let phi = na.dot(&dp) / dist;
    let v = dp.cross(na);
    let vn = v.norm();
    if vn == 0.0 {
        return Some((0.0, 0.0, 0.0));
    }
    let v = v / vn;
    let w = na.cross(&v);
    let alpha = v.dot(nb);
    let theta = w.dot(nb).atan2(na.dot(nb));
    Some((theta, alpha, phi))
}

#[inline]
fn bin(value: f64, lo: f64, hi: f64) -> usize {
    let b = ((value - lo) / (hi - lo) * FPFH_BINS as f64).floor();
    (b.max(0.0) as usize).min(FPFH_BINS - 1)
}

/// FPFH descriptors; requires normals. Points with no neighbor inside
/// `radius` receive a zero descriptor and are flagged as isolated.
pub fn fpfh(pc: &PointCloud, radius: f64) -> Result<DescriptorSet> {
    let normals = pc
        .normals
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("FPFH needs normals".into()))?;
    if !(radius > 0.0) {
        return Err(Error::InvalidConfig(format!("FPFH radius must be positive, got {radius}")));
    }
    let grid = HashGrid::new(&pc.points, radius);
    let neighborhoods: Vec<Vec<(usize, f64)>> = pc
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            grid.radius_search(p, radius)
                .into_iter()
                .filter(|&(j, d)| j != i && d > 0.0)
                .collect()
        })
        .collect();

    let spfh: Vec<[f64; FPFH_DIM]> = neighborhoods
        .par_iter()
        .enumerate()
        .map(|(i, nbrs)| {
            let mut h = [0.0; FPFH_DIM];
            if nbrs.is_empty() {
                return h;
            }
            let w = 1.0 / nbrs.len() as f64;
            for &(j, _) in nbrs {
                if let Some((theta, alpha, phi)) =
                    pair_features(&pc.points[i], &normals[i], &pc.points[j], &normals[j])
                {
                    h[bin(theta, -PI, PI)] += w;
                    h[FPFH_BINS + bin(alpha, -1.0, 1.0)] += w;
                    h[2 * FPFH_BINS + bin(phi, -1.0, 1.0)] += w;
                }
            }
            h
        })
        .collect();

    let rows: Vec<([f64; FPFH_DIM], bool)> = neighborhoods
        .par_iter()
        .enumerate()
        .map(|(i, nbrs)| {
            let mut h = spfh[i];
            if nbrs.is_empty() {
                return ([0.0; FPFH_DIM], true);
            }
            let k = nbrs.len() as f64;
            for &(j, d) in nbrs {
                let w = 1.0 / (k * d);
                for (acc, v) in h.iter_mut().zip(&spfh[j]) {
                    *acc += w * v;
                }
            }
            for block in h.chunks_mut(FPFH_BINS) {
                let s: f64 = block.iter().sum();
                if s > 0.0 {
                    block.iter_mut().for_each(|v| *v /= s);
                }
            }
            (h, false)
        })
        .collect();

    let isolated = rows.iter().map(|r| r.1).collect();
    let values = rows.iter().flat_map(|r| r.0).collect();
    Ok(DescriptorSet {
        dim: FPFH_DIM,
        values,
        isolated,
    })
}
