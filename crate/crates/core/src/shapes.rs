//! Procedural meshes used by tests, examples and the synthetic benchmark.

use std::collections::HashMap;

use rand::Rng;

use crate::cloud::TriangleMesh;
use crate::geometry::Vec3;
use crate::seed::rng_from_seed;

/// Unit square in the z = 0 plane, centered at the origin, facing −z (toward
/// a camera placed on the −z side looking down +z).
pub fn unit_square() -> TriangleMesh {
    TriangleMesh {
        vertices: vec![
            Vec3::new(-0.5, -0.5, 0.0),
            Vec3::new(0.5, -0.5, 0.0),
            Vec3::new(0.5, 0.5, 0.0),
            Vec3::new(-0.5, 0.5, 0.0),
        ],
        faces: vec![[0, 2, 1], [0, 3, 2]],
    }
}

/// Axis-aligned cube `[-1, 1]³` with outward-facing triangles.
pub fn unit_cube() -> TriangleMesh {
    let mut vertices = Vec::with_capacity(8);
    for i in 0..8 {
        let c = |bit: usize| if i & bit != 0 { 1.0 } else { -1.0 };
        vertices.push(Vec3::new(c(1), c(2), c(4)));
    }
    let faces = vec![
        [0, 2, 3], [0, 3, 1], // z = -1
        [4, 5, 7], [4, 7, 6], // z = +1
        [0, 1, 5], [0, 5, 4], // y = -1
        [2, 6, 7], [2, 7, 3], // y = +1
        [0, 4, 6], [0, 6, 2], // x = -1
        [1, 3, 7], [1, 7, 5], // x = +1
    ];
    TriangleMesh { vertices, faces }
}

pub fn tetrahedron() -> TriangleMesh {
    TriangleMesh {
        vertices: vec![
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(1.0, -1.0, -1.0),
            Vec3::new(-1.0, 1.0, -1.0),
            Vec3::new(-1.0, -1.0, 1.0),
        ],
        faces: vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]],
    }
}

/// Unit icosphere after `subdivisions` rounds of 4-way splitting.
pub fn icosphere(subdivisions: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0), (1.0, t, 0.0), (-1.0, -t, 0.0), (1.0, -t, 0.0),
        (0.0, -1.0, t), (0.0, 1.0, t), (0.0, -1.0, -t), (0.0, 1.0, -t),
        (t, 0.0, -1.0), (t, 0.0, 1.0), (-t, 0.0, -1.0), (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vec3>| {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriangleMesh { vertices, faces }
}

/// Smooth, asymmetric closed surface: an icosphere whose radius is modulated
/// by a handful of random Gaussian bumps and dents, stretched per axis and
/// rescaled so its largest absolute coordinate is 1.
pub fn blob(seed: u64) -> TriangleMesh {
    let mut rng = rng_from_seed(seed ^ 0xB10B);
    let base = icosphere(3);
    let bumps: Vec<(Vec3, f64, f64)> = (0..7)
        .map(|_| {
            let dir = loop {
                let v = Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                let n = v.norm();
                if n > 0.1 && n <= 1.0 {
                    break v / n;
                }
            };
            let amplitude = rng.random_range(-0.25..0.45);
            let sharpness = rng.random_range(3.0..9.0);
            (dir, amplitude, sharpness)
        })
        .collect();
    let stretch = Vec3::new(
        rng.random_range(0.7..1.0),
        rng.random_range(0.55..0.9),
        rng.random_range(0.45..0.8),
    );
    let mut vertices: Vec<Vec3> = base
        .vertices
        .iter()
        .map(|d| {
            let r = 1.0
                + bumps
                    .iter()
                    .map(|(c, a, s)| a * (s * (d.dot(c) - 1.0)).exp())
                    .sum::<f64>();
            (d * r.max(0.3)).component_mul(&stretch)
        })
        .collect();
    let max_abs = vertices.iter().map(|v| v.abs().max()).fold(0.0, f64::max);
    for v in &mut vertices {
        *v /= max_abs;
    }
    TriangleMesh {
        vertices,
        faces: base.faces,
    }
}

/// CAD-like part: three overlapping boxes of random size, offset and yaw,
/// rescaled so its largest absolute coordinate is 1. Edges and corners give
/// local descriptors something to latch onto.
pub fn block_part(seed: u64) -> TriangleMesh {
    let mut rng = rng_from_seed(seed ^ 0xB10C);
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let cube = unit_cube();
    for k in 0..3 {
        let half = Vec3::new(
            rng.random_range(0.15..0.6),
            rng.random_range(0.15..0.6),
            rng.random_range(0.1..0.45),
        );
        let offset = if k == 0 {
            Vec3::zeros()
        } else {
            Vec3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.3..0.3),
            )
        };
        let yaw = crate::geometry::rot_z(rng.random_range(-40.0..40.0));
        let base = vertices.len();
        vertices.extend(cube.vertices.iter().map(|v| yaw * v.component_mul(&half) + offset));
        faces.extend(cube.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
    }
    let (lo, hi) = vertices
        .iter()
        .fold((vertices[0], vertices[0]), |(lo, hi), v| (lo.inf(v), hi.sup(v)));
    let center = (lo + hi) * 0.5;
    let max_abs = vertices.iter().map(|v| (v - center).abs().max()).fold(0.0, f64::max);
    for v in &mut vertices {
        *v = (*v - center) / max_abs;
    }
    TriangleMesh { vertices, faces }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_sizes() {
        assert_eq!(unit_cube().faces.len(), 12);
        assert!((unit_cube().total_area() - 24.0).abs() < 1e-12);
        assert_eq!(icosphere(2).faces.len(), 320);
        assert_eq!(icosphere(3).vertices.len(), 642);
    }

    #[test]
    fn faces_point_outward() {
        for mesh in [unit_cube(), tetrahedron(), icosphere(1), blob(4)] {
            let centroid: Vec3 = mesh.vertices.iter().sum::<Vec3>() / mesh.vertices.len() as f64;
            for f in 0..mesh.faces.len() {
                let [a, b, c] = mesh.triangle(f);
                let center = (a + b + c) / 3.0;
                assert!(mesh.face_cross(f).dot(&(center - centroid)) > 0.0);
            }
        }
    }

    #[test]
    fn blob_fits_unit_cube() {
        let m = blob(11);
        let max_abs = m.vertices.iter().map(|v| v.abs().max()).fold(0.0, f64::max);
        assert!((max_abs - 1.0).abs() < 1e-12);
        assert_ne!(blob(1), blob(2));
    }
}
