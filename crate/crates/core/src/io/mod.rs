//! File formats: OBJ and ASCII-PLY meshes, ASCII-PLY point clouds, and depth
//! maps stored as 16-bit grayscale PNG with a JSON intrinsics sidecar.

mod depth;
mod mesh;
mod ply;

pub use depth::{
    depth_to_pointcloud, read_depth_png, read_intrinsics, read_mask_png, write_depth_png,
    write_intrinsics, write_mask_png, DepthImage, Mask, PinholeIntrinsics,
};
pub use mesh::{load_mesh, parse_obj, parse_ply_mesh, write_obj};
pub use ply::{parse_pointcloud, read_pointcloud, render_pointcloud, write_pointcloud};

use std::fs;
use std::path::Path;

use crate::cloud::{PointCloud, TriangleMesh};
use crate::error::{Error, Result};

/// Contents of a geometry file whose kind is only known after parsing.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Cloud(PointCloud),
    Mesh(TriangleMesh),
}

/// `.obj` is always a mesh; `.ply` is a mesh when it has faces and a point
/// cloud (normals kept) otherwise.
pub fn read_geometry(path: impl AsRef<Path>) -> Result<Geometry> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "obj" => Ok(Geometry::Mesh(load_mesh(path)?)),
        "ply" => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let body = mesh::parse_ply_body(&text, path)?;
            if body.faces.is_empty() {
                Ok(Geometry::Cloud(PointCloud {
                    points: body.vertices,
                    normals: body.normals,
                }))
            } else {
                Ok(Geometry::Mesh(TriangleMesh {
                    vertices: body.vertices,
                    faces: body.faces,
                }))
            }
        }
        _ => Err(Error::UnsupportedFormat(format!("{}: expected .obj or .ply", path.display()))),
    }
}
