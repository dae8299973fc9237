use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{translation_error_l2, translation_mse, RigidTransform};

/// Which translation error the translation thresholds apply to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TranslationMetric {
    /// `‖t̂ − t‖`.
    Norm,
    /// Mean of squared per-component differences.
    Mse,
}

impl TranslationMetric {
    pub fn eval(self, pred: &RigidTransform, gt: &RigidTransform) -> f64 {
        match self {
            TranslationMetric::Norm => translation_error_l2(&pred.translation, &gt.translation).sqrt(),
            TranslationMetric::Mse => translation_mse(&pred.translation, &gt.translation),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub rotation_deg: Vec<f64>,
    pub translation: Vec<f64>,
    pub translation_metric: TranslationMetric,
    /// ADD success radius as a fraction of the model diameter.
    pub add_fraction: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            rotation_deg: vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            translation: vec![0.005, 0.01, 0.02, 0.05, 0.1, 0.15],
            translation_metric: TranslationMetric::Norm,
            add_fraction: 0.1,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        check_increasing(&self.rotation_deg, "rotation")?;
        check_increasing(&self.translation, "translation")?;
        if !(self.add_fraction > 0.0) {
            return Err(Error::InvalidConfig(format!("ADD fraction must be positive, got {}", self.add_fraction)));
        }
        Ok(())
    }
}

fn check_increasing(t: &[f64], what: &str) -> Result<()> {
    if t.is_empty() || t.iter().any(|v| !v.is_finite()) || t.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(format!("{what} thresholds must be finite and strictly increasing: {t:?}")));
    }
    Ok(())
}

/// Fraction of `errors` at or below each threshold. NaN and infinite errors
/// (failed registrations) count in the denominator only.
pub fn map_at_thresholds(errors: &[f64], thresholds: &[f64]) -> Result<Vec<f64>> {
    if errors.is_empty() {
        return Err(Error::InvalidConfig("mAP of an empty error list".into()));
    }
    check_increasing(thresholds, "mAP")?;
    let n = errors.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| errors.iter().filter(|&&e| e <= t).count() as f64 / n)
        .collect())
}

/// Mean distance between model points moved by the predicted and by the
/// ground-truth pose.
pub fn add_metric(model: &PointCloud, pred: &RigidTransform, gt: &RigidTransform) -> Result<f64> {
    if model.is_empty() {
        return Err(Error::EmptyCloud("ADD model"));
    }
    let sum: f64 = model
        .points
        .iter()
        .map(|p| (pred.apply_point(p) - gt.apply_point(p)).norm())
        .sum();
    Ok(sum / model.len() as f64)
}

/// Largest pairwise distance, computed exactly.
pub fn model_diameter(pc: &PointCloud) -> Result<f64> {
    if pc.len() < 2 {
        return Err(Error::NotEnoughPoints {
            requested: 2,
            available: pc.len(),
        });
    }
    let pts = &pc.points;
    let best = (0..pts.len())
        .into_par_iter()
        .map(|i| pts[i + 1..].iter().map(|q| (pts[i] - q).norm_squared()).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max);
    Ok(best.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{euler_xyz, rot_z, Vec3};
    use proptest::prelude::*;

    #[test]
    fn map_counting_example() {
        let m = map_at_thresholds(&[3.0, 8.0, 40.0], &[5.0, 10.0, 30.0]).unwrap();
        assert_eq!(m, vec![1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0]);
        assert_eq!(map_at_thresholds(&[0.0; 4], &[1.0, 2.0]).unwrap(), vec![1.0, 1.0]);
        assert!(map_at_thresholds(&[], &[1.0]).is_err());
        assert!(map_at_thresholds(&[1.0], &[2.0, 1.0]).is_err());
    }

    #[test]
    fn failures_stay_in_denominator() {
        let m = map_at_thresholds(&[1.0, f64::INFINITY, f64::NAN, 2.0], &[1.5, 10.0]).unwrap();
        assert_eq!(m, vec![0.25, 0.5]);
    }

    #[test]
    fn add_cases() {
        let model = PointCloud::new(vec![Vec3::x(), Vec3::y(), Vec3::new(0.3, -2.0, 1.0)]);
        let gt = RigidTransform::new(euler_xyz(10.0, 20.0, 30.0), Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(add_metric(&model, &gt, &gt).unwrap(), 0.0);
        let shifted = RigidTransform::new(gt.rotation, gt.translation + Vec3::new(0.25, 0.0, 0.0));
        assert_eq!(add_metric(&model, &shifted, &gt).unwrap(), 0.25);
        assert!(add_metric(&PointCloud::default(), &gt, &gt).is_err());
    }

    #[test]
    fn add_chord_length() {
        let circle = PointCloud::new((0..36).map(|k| {
            let a = (k as f64 * 10.0).to_radians();
            Vec3::new(a.cos(), a.sin(), 0.0)
        }).collect());
        let gt = RigidTransform::new(euler_xyz(5.0, -3.0, 40.0), Vec3::new(0.1, 0.0, 0.2));
        for theta in [1.0, 30.0, 90.0, 179.0] {
            let pred = gt.compose(&RigidTransform::from_rotation(rot_z(theta)));
            let chord = 2.0 * (theta.to_radians() / 2.0).sin();
            assert!((add_metric(&circle, &pred, &gt).unwrap() - chord).abs() < 1e-9);
        }
    }

    #[test]
    fn diameter_cases() {
        let two = PointCloud::new(vec![Vec3::zeros(), Vec3::new(0.0, 3.0, 0.0)]);
        assert_eq!(model_diameter(&two).unwrap(), 3.0);
        let corners = PointCloud::new((0..8).map(|i| {
            Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64)
        }).collect());
        assert!((model_diameter(&corners).unwrap() - 3f64.sqrt()).abs() < 1e-15);
        assert!(model_diameter(&PointCloud::new(vec![Vec3::zeros()])).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn map_is_monotone(errors in proptest::collection::vec(0.0f64..50.0, 1..40)) {
            let t = Thresholds::default().rotation_deg;
            let m = map_at_thresholds(&errors, &t).unwrap();
            prop_assert!(m.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(m.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn add_and_diameter_rigid_invariance(
            seed in 0u64..1000,
            ax in -180.0f64..180.0, ay in -90.0f64..90.0, az in -180.0f64..180.0,
        ) {
            let model = crate::sampling::sample_surface(&crate::shapes::blob(seed), 200, seed).unwrap();
            let q = RigidTransform::new(euler_xyz(ax, ay, az), Vec3::new(0.5, -1.0, 2.0));
            let gt = RigidTransform::new(euler_xyz(ay, az, ax), Vec3::new(0.0, 0.3, 0.1));
            let pred = RigidTransform::new(euler_xyz(ay + 3.0, az, ax - 2.0), Vec3::new(0.05, 0.3, 0.1));
            let a = add_metric(&model, &pred, &gt).unwrap();
            let b = add_metric(&model, &q.compose(&pred), &q.compose(&gt)).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
            let d = model_diameter(&model).unwrap();
            prop_assert!((d - model_diameter(&model.transformed(&q)).unwrap()).abs() < 1e-9);
        }
    }
}
