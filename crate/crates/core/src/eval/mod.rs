//! Pose metrics, score-map simulation, pair datasets and the benchmark
//! harness.

pub mod benchmark;
pub mod dataset;
mod metrics;
pub mod simulate;

pub use benchmark::{
    instance_mesh, render_csv, render_summary, resolve_method, run_benchmark, synthetic_depth_view, synthetic_instance, view_intrinsics, write_report, BenchmarkReport,
    BenchmarkSpec, DepthView, InstanceRecord, Method, MethodSummary, Scenario, ShapeFamily, METHOD_NAMES, SCENARIO_NAMES, VIEW_CAMERA_DISTANCE, VIEW_IMAGE_SIZE,
};
pub use metrics::{add_metric, map_at_thresholds, model_diameter, Thresholds, TranslationMetric};
pub use simulate::{selection_trial, simulate_matching_problem, MatchingProblem, MatchingProblemConfig, SelectionTrial};
