//! Pose solving: Procrustes, ICP, the end-to-end registration pipeline, and
//! the SVD gradient probe.

mod consistency;
mod icp;
mod pipeline;
mod procrustes;
pub mod svd_probe;

use serde::{Deserialize, Serialize};

use crate::geometry::RigidTransform;
use crate::matching::SinkhornStats;
use crate::preprocess::NormalizationRecord;

pub use consistency::consistent_subset;
pub use icp::{icp, IcpConfig};
pub use pipeline::{register, MatchingMode, PipelineConfig, SelectionMode};
pub use procrustes::{procrustes, procrustes_points};
pub use svd_probe::{svd_gradient_probe, SvdGradientReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    /// Maps source onto target in original units.
    pub pose: RigidTransform,
    /// The same pose between the normalized clouds.
    pub normalized_pose: RigidTransform,
    pub correspondence_count: usize,
    /// RMS residual of the final correspondences, in original units.
    pub inlier_rms: f64,
    pub converged: bool,
    pub diagnostics: Diagnostics,
}

/// Per-stage record of a registration run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub normalization: Option<NormalizationRecord>,
    /// Point counts entering descriptor computation.
    pub source_points: usize,
    pub target_points: usize,
    pub fpfh_radius: Option<f64>,
    pub degenerate_normals: usize,
    pub isolated_points: usize,
    pub sinkhorn: Option<SinkhornStats>,
    pub selection_threshold: Option<f64>,
    /// Correspondences out of the selection step.
    pub selected: usize,
    /// Survivors of length-consistency pruning, when enabled.
    pub consistent: Option<usize>,
    pub icp_iterations: Option<usize>,
}
