//! Small dense kernels for 3×3 problems.
//!
//! The SVD is obtained from a cyclic Jacobi eigen-decomposition of `AᵀA`, which
//! is deterministic and accurate to a few ulps for well-conditioned inputs.

use nalgebra::{Matrix3, Vector3};

/// Eigen-decomposition of a symmetric 3×3 matrix.
///
/// Returns eigenvalues sorted in decreasing order and the matching unit
/// eigenvectors as the columns of the second matrix.
pub fn symmetric_eigen(m: &Matrix3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let mut a = *m;
    let mut v = Matrix3::identity();
    for _sweep in 0..64 {
        let off = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        let scale = a[(0, 0)].powi(2) + a[(1, 1)].powi(2) + a[(2, 2)].powi(2);
        if off <= f64::EPSILON * f64::EPSILON * scale || off == 0.0 {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            // a <- Jᵀ a J with J the Givens rotation in the (p, q) plane
            for k in 0..3 {
                let akp = a[(k, p)];
                let akq = a[(k, q)];
                a[(k, p)] = c * akp - s * akq;
                a[(k, q)] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[(p, k)];
                let aqk = a[(q, k)];
                a[(p, k)] = c * apk - s * aqk;
                a[(q, k)] = s * apk + c * aqk;
            }
            for k in 0..3 {
                let vkp = v[(k, p)];
                let vkq = v[(k, q)];
                v[(k, p)] = c * vkp - s * vkq;
                v[(k, q)] = s * vkp + c * vkq;
            }
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = Vector3::new(a[(order[0], order[0])], a[(order[1], order[1])], a[(order[2], order[2])]);
    let vectors = Matrix3::from_columns(&[v.column(order[0]), v.column(order[1]), v.column(order[2])]);
    (values, vectors)
}

/// Singular value decomposition `A = U·diag(σ)·Vᵀ` of a 3×3 matrix.
#[derive(Debug, Clone, Copy)]
pub struct Svd3 {
    pub u: Matrix3<f64>,
    pub singular_values: Vector3<f64>,
    pub v: Matrix3<f64>,
}

impl Svd3 {
    /// Numerical rank relative to the largest singular value.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let top = self.singular_values[0];
        if top <= 0.0 {
            return 0;
        }
        self.singular_values.iter().filter(|&&s| s > rel_tol * top).count()
    }

    pub fn reconstruct(&self) -> Matrix3<f64> {
        self.u * Matrix3::from_diagonal(&self.singular_values) * self.v.transpose()
    }
}

/// SVD through the eigen-decomposition of `AᵀA`.
///
/// `V` holds the eigenvectors, `σ = √λ`, and `U` columns are recovered as
/// `A·vₖ/σₖ`. Columns belonging to vanishing singular values are completed
/// with cross products so that `U` is always orthonormal. Singular values are
/// nonnegative and sorted in decreasing order.
pub fn svd3(a: &Matrix3<f64>) -> Svd3 {
    let (lambda, mut v) = symmetric_eigen(&(a.transpose() * a));
    if v.determinant() < 0.0 {
        v.set_column(2, &(-v.column(2)));
    }
    let sigma = lambda.map(|l| l.max(0.0).sqrt());
    let tiny = sigma[0] * 1e-13;

    let mut u = Matrix3::zeros();
    let u0 = if sigma[0] > 0.0 {
        (a * v.column(0)) / sigma[0]
    } else {
        Vector3::x()
    };
    let u0 = u0.normalize();
    let mut u1 = if sigma[1] > tiny {
        a * v.column(1) / sigma[1]
    } else {
        any_orthogonal(&u0)
    };
    u1 -= u0 * u0.dot(&u1);
    let u1 = u1.normalize();
    let mut u2 = u0.cross(&u1);
    if sigma[2] > tiny && (a * v.column(2)).dot(&u2) < 0.0 {
        // A·v₂ = σ₂·u₂ fixes the sign of the last column.
        u2 = -u2;
    }
    u.set_column(0, &u0);
    u.set_column(1, &u1);
    u.set_column(2, &u2);
    Svd3 {
        u,
        singular_values: sigma,
        v,
    }
}

fn any_orthogonal(n: &Vector3<f64>) -> Vector3<f64> {
    let pick = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    n.cross(&pick).normalize()
}
