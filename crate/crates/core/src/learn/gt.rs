use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::matching::AssignmentPlan;
use crate::spatial::HashGrid;

/// Binary `(M+1)×(N+1)` assignment stored as the two partial matchings.
///
/// Matched rows and columns hold a single interior one; unmatched ones hold
/// a one in their bin. The bin–bin cell is always zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthAssignment {
    pub source_match: Vec<Option<usize>>,
    pub target_match: Vec<Option<usize>>,
}

impl GroundTruthAssignment {
    /// Panics if the two sides disagree.
    pub fn from_source_matches(source_match: Vec<Option<usize>>, n_target: usize) -> Self {
        let mut target_match = vec![None; n_target];
        for (i, m) in source_match.iter().enumerate() {
            if let Some(j) = *m {
                assert!(target_match[j].is_none(), "target {j} matched twice");
                target_match[j] = Some(i);
            }
        }
        GroundTruthAssignment {
            source_match,
            target_match,
        }
    }

    pub fn sources(&self) -> usize {
        self.source_match.len()
    }

    pub fn targets(&self) -> usize {
        self.target_match.len()
    }

    pub fn matched(&self) -> usize {
        self.source_match.iter().flatten().count()
    }

    /// Every cell holding a one, row-major.
    pub fn ones(&self) -> Vec<(usize, usize)> {
        let (m, n) = (self.sources(), self.targets());
        let mut out: Vec<(usize, usize)> = self
            .source_match
            .iter()
            .enumerate()
            .map(|(i, j)| (i, j.unwrap_or(n)))
            .collect();
        out.extend(
            self.target_match
                .iter()
                .enumerate()
                .filter(|(_, i)| i.is_none())
                .map(|(j, _)| (m, j)),
        );
        out
    }

    pub fn to_matrix(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.sources() + 1, self.targets() + 1);
        for (i, j) in self.ones() {
            out.set(i, j, 1.0);
        }
        out
    }

    /// Roles of source and target swapped.
    pub fn transposed(&self) -> Self {
        GroundTruthAssignment {
            source_match: self.target_match.clone(),
            target_match: self.source_match.clone(),
        }
    }
}

/// Mutual-nearest pairs closer than `threshold` after moving the source by
/// `gt`. Distance ties go to the lower index.
pub fn build_gt_assignment(
    source: &PointCloud,
    target: &PointCloud,
    gt: &RigidTransform,
    threshold: f64,
) -> GroundTruthAssignment {
    let moved = source.transformed(gt);
    let mut source_match = vec![None; source.len()];
    if source.is_empty() || target.is_empty() {
        return GroundTruthAssignment::from_source_matches(source_match, target.len());
    }
    let tgrid = HashGrid::new(&target.points, threshold.max(1e-9));
    let sgrid = HashGrid::new(&moved.points, threshold.max(1e-9));
    for (i, p) in moved.points.iter().enumerate() {
        let Some((j, d)) = tgrid.nearest(p) else { continue };
        if d >= threshold {
            continue;
        }
        if sgrid.nearest(&target.points[j]).map(|(back, _)| back) == Some(i) {
            source_match[i] = Some(j);
        }
    }
    GroundTruthAssignment::from_source_matches(source_match, target.len())
}

/// `−(1/K)·Σ log(P + 1e-9)` over the `K` cells where the assignment is one.
pub fn nll_loss(plan: &AssignmentPlan, gt: &GroundTruthAssignment) -> Result<f64> {
    if plan.sources() != gt.sources() || plan.targets() != gt.targets() {
        return Err(Error::DimensionMismatch(format!(
            "plan is {}×{}, assignment {}×{}",
            plan.sources() + 1,
            plan.targets() + 1,
            gt.sources() + 1,
            gt.targets() + 1
        )));
    }
    let ones = gt.ones();
    if ones.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = ones.iter().map(|&(i, j)| (plan.get(i, j) + 1e-9).ln()).sum();
    Ok(-sum / ones.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{euler_xyz, EulerRanges, Vec3};
    use crate::preprocess::make_synthetic_pair;
    use crate::shapes;
    use proptest::prelude::*;

    fn grid_cloud() -> PointCloud {
        PointCloud::new((0..27).map(|k| Vec3::new((k % 3) as f64, ((k / 3) % 3) as f64, (k / 9) as f64) * 0.2).collect())
    }

    fn assert_one_hot(gt: &GroundTruthAssignment) {
        let m = gt.to_matrix();
        let rows = m.row_sums();
        let cols = m.col_sums();
        assert!(rows[..gt.sources()].iter().all(|&r| r == 1.0));
        assert!(cols[..gt.targets()].iter().all(|&c| c == 1.0));
        assert_eq!(m.get(gt.sources(), gt.targets()), 0.0);
    }

    #[test]
    fn exact_copy_is_identity() {
        let src = grid_cloud();
        let gt = RigidTransform::new(euler_xyz(10.0, 20.0, 30.0), Vec3::new(1.0, 0.0, 0.0));
        let a = build_gt_assignment(&src, &src.transformed(&gt), &gt, 0.05);
        assert!(a.source_match.iter().enumerate().all(|(i, m)| *m == Some(i)));
        assert_eq!(a.ones().len(), 27);
        assert_one_hot(&a);
    }

    #[test]
    fn missing_target_goes_to_bin() {
        let src = grid_cloud();
        let keep: Vec<usize> = (0..27).filter(|&i| i != 13).collect();
        let a = build_gt_assignment(&src, &src.select(&keep), &RigidTransform::identity(), 0.05);
        assert_eq!(a.source_match[13], None);
        assert!(a.ones().contains(&(13, 26)));
        assert_one_hot(&a);
    }

    #[test]
    fn two_candidates_keep_mutual_nearest() {
        let src = PointCloud::new(vec![Vec3::zeros()]);
        let tgt = PointCloud::new(vec![Vec3::new(0.03, 0.0, 0.0), Vec3::new(0.0, 0.02, 0.0)]);
        let a = build_gt_assignment(&src, &tgt, &RigidTransform::identity(), 0.05);
        assert_eq!(a.source_match, vec![Some(1)]);
        assert_eq!(a.target_match, vec![None, Some(0)]);
        assert_eq!(a.ones(), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn nll_values() {
        let gt = GroundTruthAssignment::from_source_matches(vec![Some(1), None], 2);
        let one_hot = AssignmentPlan::from_matrix(gt.to_matrix());
        let l = nll_loss(&one_hot, &gt).unwrap();
        assert!(l.abs() < 1e-8);

        let n = 4;
        let gt = GroundTruthAssignment::from_source_matches(vec![Some(0), Some(2), None], n);
        let uniform = AssignmentPlan::from_matrix(DenseMatrix::filled(4, n + 1, 1.0 / (n + 1) as f64));
        let l = nll_loss(&uniform, &gt).unwrap();
        assert!((l - ((n + 1) as f64).ln()).abs() < 1e-6);

        let mut better = uniform.clone();
        better.matrix.set(0, 0, 0.5);
        assert!(nll_loss(&better, &gt).unwrap() < l);

        let wrong = AssignmentPlan::from_matrix(DenseMatrix::zeros(2, 2));
        assert!(nll_loss(&wrong, &gt).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn one_hot_and_swap_symmetry(seed in 0u64..5_000) {
            let pair = make_synthetic_pair(&shapes::blob(seed), &EulerRanges::full(), 200, 150, seed).unwrap();
            let a = build_gt_assignment(&pair.source, &pair.target, &pair.gt, 0.05);
            assert_one_hot(&a);
            let b = build_gt_assignment(&pair.target, &pair.source, &pair.gt.inverse(), 0.05);
            prop_assert_eq!(b, a.transposed());
        }
    }
}
