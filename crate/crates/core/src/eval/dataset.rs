//! On-disk registration pairs.
//!
//! A pair directory holds `source.ply` (point cloud or mesh) and either
//! `target.ply` or a depth view `target_depth.png` + `intrinsics.json`
//! (+ optional `target_mask.png`). `gt.json`, when present, is the pose
//! mapping source onto target.

use std::fs;
use std::path::{Path, PathBuf};

use crate::cloud::PointCloud;
use crate::descriptors::{estimate_normals, Orientation};
use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec3};
use crate::io::{
    depth_to_pointcloud, read_depth_png, read_geometry, read_intrinsics, read_mask_png, write_pointcloud,
    DepthImage, Geometry, Mask, PinholeIntrinsics,
};
use crate::sampling::sample_surface;

pub const SOURCE_FILE: &str = "source.ply";
pub const TARGET_FILE: &str = "target.ply";
pub const DEPTH_FILE: &str = "target_depth.png";
pub const MASK_FILE: &str = "target_mask.png";
pub const INTRINSICS_FILE: &str = "intrinsics.json";
pub const GT_FILE: &str = "gt.json";

/// Points drawn from mesh inputs.
pub const MESH_SAMPLES: usize = 8192;
/// Neighborhood for normals estimated on depth clouds.
pub const DEPTH_NORMAL_NEIGHBORS: usize = 16;

#[derive(Debug, Clone)]
pub struct PairData {
    pub name: String,
    pub source: PointCloud,
    pub target: PointCloud,
    pub gt: Option<RigidTransform>,
}

/// Reads a cloud, sampling [`MESH_SAMPLES`] points (with face normals) from
/// mesh files.
pub fn load_cloud(path: impl AsRef<Path>, seed: u64) -> Result<PointCloud> {
    match read_geometry(path)? {
        Geometry::Cloud(pc) => Ok(pc),
        Geometry::Mesh(mesh) => sample_surface(&mesh, MESH_SAMPLES, seed),
    }
}

/// Back-projected depth view with normals oriented toward the camera.
pub fn depth_cloud(img: &DepthImage, k: &PinholeIntrinsics, mask: Option<&Mask>) -> Result<PointCloud> {
    let pc = depth_to_pointcloud(img, k, mask)?;
    if pc.len() < DEPTH_NORMAL_NEIGHBORS {
        return Err(Error::NotEnoughPoints {
            requested: DEPTH_NORMAL_NEIGHBORS,
            available: pc.len(),
        });
    }
    Ok(estimate_normals(&pc, DEPTH_NORMAL_NEIGHBORS, Orientation::TowardViewpoint(Vec3::zeros()))?.cloud)
}

pub fn read_pair_dir(dir: impl AsRef<Path>, seed: u64) -> Result<PairData> {
    let dir = dir.as_ref();
    let source = load_cloud(dir.join(SOURCE_FILE), seed)?;
    let target = if dir.join(TARGET_FILE).exists() {
        load_cloud(dir.join(TARGET_FILE), seed)?
    } else {
        let img = read_depth_png(dir.join(DEPTH_FILE))?;
        let k = read_intrinsics(dir.join(INTRINSICS_FILE))?;
        let mask_path = dir.join(MASK_FILE);
        let mask = if mask_path.exists() { Some(read_mask_png(mask_path)?) } else { None };
        depth_cloud(&img, &k, mask.as_ref())?
    };
    let gt_path = dir.join(GT_FILE);
    let gt = if gt_path.exists() {
        let text = fs::read_to_string(&gt_path).map_err(|e| Error::io(&gt_path, e))?;
        Some(serde_json::from_str(&text)?)
    } else {
        None
    };
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(PairData { name, source, target, gt })
}

pub fn write_pair_dir(dir: impl AsRef<Path>, source: &PointCloud, target: &PointCloud, gt: Option<&RigidTransform>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_pointcloud(source, dir.join(SOURCE_FILE))?;
    write_pointcloud(target, dir.join(TARGET_FILE))?;
    if let Some(gt) = gt {
        write_json(dir.join(GT_FILE), gt)?;
    }
    Ok(())
}

/// Pair directories under `root`, sorted by name; `root` itself if it is one.
pub fn list_pair_dirs(root: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let root = root.as_ref();
    if root.join(SOURCE_FILE).exists() {
        return Ok(vec![root.to_path_buf()]);
    }
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        if path.join(SOURCE_FILE).exists() {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::InvalidConfig(format!("{} contains no pair directories", root.display())));
    }
    Ok(dirs)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
