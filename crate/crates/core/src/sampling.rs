use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::cloud::{PointCloud, TriangleMesh};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Area-weighted uniform sampling of a mesh surface. Each point carries the
/// unit normal of the face it was drawn from.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    let (cloud, _) = sample_surface_with_faces(mesh, n, seed)?;
    Ok(cloud)
}

/// Like [`sample_surface`], also returning the source face of every point.
pub fn sample_surface_with_faces(
    mesh: &TriangleMesh,
    n: usize,
    seed: u64,
) -> Result<(PointCloud, Vec<usize>)> {
    if n == 0 {
        return Err(Error::InvalidConfig("sample count must be at least 1".into()));
    }
    let areas: Vec<f64> = (0..mesh.faces.len()).map(|f| mesh.face_area(f)).collect();
    let total: f64 = areas.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroAreaMesh);
    }
    let picker = WeightedIndex::new(&areas).map_err(|_| Error::ZeroAreaMesh)?;
    let mut rng = rng_from_seed(seed);
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut faces = Vec::with_capacity(n);
    for _ in 0..n {
        let f = picker.sample(&mut rng);
        let [a, b, c] = mesh.triangle(f);
        let r1: f64 = rng.random::<f64>().sqrt();
        let r2: f64 = rng.random();
        points.push(a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2));
        normals.push(mesh.face_cross(f).normalize());
        faces.push(f);
    }
    Ok((PointCloud::with_normals(points, normals)?, faces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::shapes;

    #[test]
    fn exact_count() {
        let pc = sample_surface(&shapes::blob(2), 1024, 9).unwrap();
        assert_eq!(pc.len(), 1024);
        assert_eq!(pc.normals.as_ref().unwrap().len(), 1024);
    }

    #[test]
    fn square_halves_are_equally_likely() {
        let (_, faces) = sample_surface_with_faces(&shapes::unit_square(), 100_000, 1).unwrap();
        let first = faces.iter().filter(|&&f| f == 0).count() as f64 / 1e5;
        assert!((first - 0.5).abs() < 0.05, "{first}");
    }

    #[test]
    fn chi_square_face_occupancy() {
        // Tetrahedron with unequal faces; chi-square with 3 degrees of freedom.
        let mesh = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 0.5)],
            vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        )
        .unwrap();
        let n = 100_000;
        let (_, faces) = sample_surface_with_faces(&mesh, n, 4).unwrap();
        let total = mesh.total_area();
        let chi2: f64 = (0..4)
            .map(|f| {
                let expected = n as f64 * mesh.face_area(f) / total;
                let observed = faces.iter().filter(|&&g| g == f).count() as f64;
                (observed - expected).powi(2) / expected
            })
            .sum();
        // 99th percentile of chi-square(3) is 11.345
        assert!(chi2 < 11.345, "chi2 = {chi2}");
    }

    #[test]
    fn points_lie_on_their_face_plane() {
        let mesh = shapes::blob(5);
        let (pc, faces) = sample_surface_with_faces(&mesh, 2000, 2).unwrap();
        for (p, &f) in pc.points.iter().zip(&faces) {
            let [a, _, _] = mesh.triangle(f);
            let n = mesh.face_cross(f).normalize();
            assert!(n.dot(&(p - a)).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_and_zero_area_error() {
        let m = shapes::unit_cube();
        assert_eq!(sample_surface(&m, 50, 3).unwrap(), sample_surface(&m, 50, 3).unwrap());
        let flat = TriangleMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0], vec![[0, 1, 2]]).unwrap();
        assert!(matches!(sample_surface(&flat, 10, 0), Err(Error::ZeroAreaMesh)));
    }
}
