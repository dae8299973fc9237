//! How the backward pass of an SVD-based rotation layer behaves as two
//! singular values approach each other.
//!
//! The probed loss is `L(A) = <V·Uᵀ, D>` for `A = U·Σ·Vᵀ`. Backpropagating
//! through `U` and `V` separately uses the factor `K_ij = 1/(σ_j² − σ_i²)`.
//! Each factor's contribution blows up like `1/Δ(σ²)`; for this particular
//! loss the two contributions cancel analytically, so the assembled gradient
//! stays bounded (`−(G_ij − G_ji)/(σ_i + σ_j)` with `G = Vᵀ·D·U`) and can be
//! checked against finite differences. Frameworks that evaluate the two paths
//! numerically see the blow-up, and `inf − inf` once the values coincide.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::svd3;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdGradientReport {
    /// Nonincreasing.
    pub singular_values: [f64; 3],
    /// Smallest gap between consecutive singular values.
    pub gap: f64,
    /// Frobenius norm of the assembled analytic gradient; `None` if unbounded.
    pub analytic_norm: Option<f64>,
    /// Norm of the gradient carried by the `U` path alone; `None` if unbounded.
    pub factor_path_norm: Option<f64>,
    pub finite_difference_norm: f64,
    /// `‖analytic − fd‖ / ‖fd‖`; `None` if unbounded.
    pub relative_error: Option<f64>,
    /// Set when two singular values are exactly equal.
    pub unbounded: bool,
}

/// `e₁·e₂ᵀ`, which couples the first two singular directions.
pub fn default_loss_direction() -> Matrix3<f64> {
    let mut d = Matrix3::zeros();
    d[(0, 1)] = 1.0;
    d
}

/// `diag(1, 1 − gap, 0.5)`.
pub fn gap_matrix(gap: f64) -> Matrix3<f64> {
    Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0 - gap, 0.5))
}

pub fn svd_loss(a: &Matrix3<f64>, d: &Matrix3<f64>) -> f64 {
    let s = svd3(a);
    (s.v * s.u.transpose()).component_mul(d).sum()
}

pub fn svd_gradient_probe(a: &Matrix3<f64>, d: &Matrix3<f64>) -> Result<SvdGradientReport> {
    let s = svd3(a);
    let sigma = s.singular_values;
    if s.rank(1e-12) < 3 {
        return Err(Error::DegenerateConfiguration);
    }
    let fd = finite_difference(a, d);
    let fd_norm = fd.norm();
    let gap = (sigma[0] - sigma[1]).min(sigma[1] - sigma[2]);
    let unbounded = (0..3).any(|i| (0..3).any(|j| i != j && sigma[i] * sigma[i] == sigma[j] * sigma[j]));
    let mut report = SvdGradientReport {
        singular_values: [sigma[0], sigma[1], sigma[2]],
        gap,
        analytic_norm: None,
        factor_path_norm: None,
        finite_difference_norm: fd_norm,
        relative_error: None,
        unbounded,
    };
    if unbounded {
        return Ok(report);
    }

    let g = s.v.transpose() * d * s.u;
    let k = |i: usize, j: usize| 1.0 / (sigma[j] * sigma[j] - sigma[i] * sigma[i]);
    // Gradients with respect to P = Uᵀ·dA·V.
    let mut through_u = Matrix3::zeros();
    let mut through_v = Matrix3::zeros();
    for a_ in 0..3 {
        for b in 0..3 {
            if a_ == b {
                continue;
            }
            let skew = g[(a_, b)] - g[(b, a_)];
            through_u[(a_, b)] = -sigma[b] * k(a_, b) * skew;
            through_v[(a_, b)] = sigma[a_] * k(a_, b) * skew;
        }
    }
    let analytic = s.u * (through_u + through_v) * s.v.transpose();
    report.analytic_norm = Some(analytic.norm());
    report.factor_path_norm = Some(through_u.norm());
    report.relative_error = Some((analytic - fd).norm() / fd_norm.max(f64::MIN_POSITIVE));
    Ok(report)
}

fn finite_difference(a: &Matrix3<f64>, d: &Matrix3<f64>) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| {
        let mut plus = *a;
        let mut minus = *a;
        plus[(i, j)] += FD_STEP;
        minus[(i, j)] -= FD_STEP;
        (svd_loss(&plus, d) - svd_loss(&minus, d)) / (2.0 * FD_STEP)
    })
}

/// Least-squares slope of `ln y` against `ln x`; `None` with fewer than two
/// points.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_matches_finite_difference() {
        let a = Matrix3::from_diagonal(&nalgebra::Vector3::new(3.0, 2.0, 1.0));
        let r = svd_gradient_probe(&a, &default_loss_direction()).unwrap();
        assert!(r.relative_error.unwrap() < 1e-4);
        let dense = Matrix3::new(2.0, 0.3, -0.5, 0.1, 1.5, 0.2, 0.4, -0.3, 0.9);
        let d = Matrix3::new(0.3, -1.0, 0.2, 0.5, 0.1, 0.7, -0.4, 0.6, 0.2);
        let r = svd_gradient_probe(&dense, &d).unwrap();
        assert!(r.relative_error.unwrap() < 1e-4, "{r:?}");
    }

    #[test]
    fn factor_path_matches_closed_form() {
        // For diag(1, 1 − δ, 0.5) and D = e₁e₂ᵀ only the (1, 2) pair couples:
        // ‖∂L_U/∂A‖ = √(σ₁² + σ₂²) / (σ₁² − σ₂²).
        for delta in [1e-1, 1e-2, 1e-3] {
            let r = svd_gradient_probe(&gap_matrix(delta), &default_loss_direction()).unwrap();
            let s2 = 1.0 - delta;
            let expected = (1.0 + s2 * s2).sqrt() / (1.0 - s2 * s2);
            assert!((r.factor_path_norm.unwrap() / expected - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn scaling_with_gap() {
        let gaps = [1e-1, 1e-2, 1e-3, 1e-4];
        let norms: Vec<f64> = gaps
            .iter()
            .map(|&g| {
                svd_gradient_probe(&gap_matrix(g), &default_loss_direction())
                    .unwrap()
                    .factor_path_norm
                    .unwrap()
            })
            .collect();
        let slope = loglog_slope(&gaps, &norms).unwrap();
        assert!((slope + 1.0).abs() < 0.1, "slope {slope}");
        let ratio = norms[2] / norms[0];
        assert!((ratio / 100.0 - 1.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn repeated_singular_values_flagged() {
        let r = svd_gradient_probe(&gap_matrix(0.0), &default_loss_direction()).unwrap();
        assert!(r.unbounded);
        assert!(r.analytic_norm.is_none());
        assert!(r.finite_difference_norm.is_finite());
    }

    #[test]
    fn singular_input_rejected() {
        let a = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, 0.0));
        assert!(svd_gradient_probe(&a, &default_loss_direction()).is_err());
    }

    #[test]
    fn slope_needs_two_points() {
        assert!(loglog_slope(&[1.0], &[2.0]).is_none());
        assert!((loglog_slope(&[1.0, 10.0], &[5.0, 0.5]).unwrap() + 1.0).abs() < 1e-12);
    }
}
