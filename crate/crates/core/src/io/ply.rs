use std::fs;
use std::path::Path;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

use super::mesh::parse_ply_body;

/// ASCII-PLY text for a cloud; coordinates round-trip exactly.
pub fn render_pointcloud(pc: &PointCloud) -> String {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", pc.len()));
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if pc.normals.is_some() {
        out.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    out.push_str("end_header\n");
    for (i, p) in pc.points.iter().enumerate() {
        out.push_str(&format!("{:e} {:e} {:e}", p.x, p.y, p.z));
        if let Some(n) = &pc.normals {
            let n = n[i];
            out.push_str(&format!(" {:e} {:e} {:e}", n.x, n.y, n.z));
        }
        out.push('\n');
    }
    out
}

pub fn write_pointcloud(pc: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_pointcloud(pc)).map_err(|e| Error::io(path, e))
}

pub fn parse_pointcloud(text: &str, path: &Path) -> Result<PointCloud> {
    let body = parse_ply_body(text, path)?;
    Ok(PointCloud {
        points: body.vertices,
        normals: body.normals,
    })
}

/// Reads the vertex element of an ASCII-PLY file (faces are ignored).
pub fn read_pointcloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pointcloud(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::seed::rng_from_seed;
    use rand::Rng;

    #[test]
    fn round_trip_random_points() {
        let mut rng = rng_from_seed(3);
        let pts: Vec<Vec3> = (0..100)
            .map(|_| Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
            .collect();
        let pc = PointCloud::new(pts);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        write_pointcloud(&pc, &path).unwrap();
        let back = read_pointcloud(&path).unwrap();
        assert_eq!(back.len(), 100);
        assert!(back.normals.is_none());
        assert_eq!(back.points, pc.points);
    }

    #[test]
    fn empty_cloud_round_trips() {
        let text = render_pointcloud(&PointCloud::default());
        let back = parse_pointcloud(&text, Path::new("e.ply")).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn normals_preserved() {
        let pc = PointCloud::with_normals(vec![Vec3::new(1.0, 2.0, 3.0)], vec![Vec3::new(0.0, 0.6, 0.8)]).unwrap();
        let back = parse_pointcloud(&render_pointcloud(&pc), Path::new("n.ply")).unwrap();
        let n = back.normals.unwrap();
        assert!((n[0] - Vec3::new(0.0, 0.6, 0.8)).norm() < 1e-8);
    }

    #[test]
    fn truncated_body_reports_line() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n";
        match parse_pointcloud(text, Path::new("t.ply")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 9),
            other => panic!("unexpected {other:?}"),
        }
    }
}
