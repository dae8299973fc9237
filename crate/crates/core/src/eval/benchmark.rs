//! Benchmark harness: scenarios, the method registry, per-instance
//! evaluation and report files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, TriangleMesh};
use crate::error::{Error, Result};
use crate::geometry::{rotation_error, EulerRanges, RigidTransform, Vec3};
use crate::io::{DepthImage, PinholeIntrinsics};
use crate::matching::SinkhornConfig;
use crate::preprocess::{denormalize_pose, make_synthetic_pair, normalize_pair, partial_crop};
use crate::sampling::sample_surface;
use crate::render::render_depth;
use crate::seed::{derive_seed, rng_from_seed};
use crate::shapes;
use crate::solver::{icp, register, IcpConfig, MatchingMode, PipelineConfig, SelectionMode};
use crate::spatial::HashGrid;

use super::dataset::{list_pair_dirs, read_pair_dir, write_json};
use super::metrics::{add_metric, map_at_thresholds, model_diameter, Thresholds};

/// Geodesic error charged to failed registrations when averaging.
pub const FAILURE_ROTATION_DEG: f64 = 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeFamily {
    Blob,
    Block,
    /// Blobs on even instances, block parts on odd ones.
    Mixed,
}

impl ShapeFamily {
    pub fn mesh(self, index: usize, seed: u64) -> TriangleMesh {
        match self {
            ShapeFamily::Blob => shapes::blob(seed),
            ShapeFamily::Block => shapes::block_part(seed),
            ShapeFamily::Mixed if index % 2 == 0 => shapes::blob(seed),
            ShapeFamily::Mixed => shapes::block_part(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Scenario {
    /// Partial-to-partial pairs cut from one surface sample.
    Synthetic {
        ranges: EulerRanges,
        shape: ShapeFamily,
        n_sample: usize,
        n_keep: usize,
        /// Both clouds and the ground-truth translation are multiplied by this.
        scale: f64,
        /// When nonzero the target is sampled independently of the source and
        /// gets this many extra samples per base sample on the `+x` half of
        /// its crop.
        half_density_boost: usize,
    },
    Directory { path: PathBuf },
}

pub const SCENARIO_NAMES: &[&str] = &["45deg", "full", "45deg-x100", "45deg-density"];

impl Scenario {
    /// Named synthetic scenario, or a pair directory for any other existing path.
    pub fn parse(name: &str) -> Result<Scenario> {
        let synthetic = |ranges, scale, boost| Scenario::Synthetic {
            ranges,
            shape: ShapeFamily::Mixed,
            n_sample: 1024,
            n_keep: 768,
            scale,
            half_density_boost: boost,
        };
        match name {
            "45deg" => Ok(synthetic(EulerRanges::partial_45(), 1.0, 0)),
            "full" => Ok(synthetic(EulerRanges::full(), 1.0, 0)),
            "45deg-x100" => Ok(synthetic(EulerRanges::partial_45(), 100.0, 0)),
            "45deg-density" => Ok(synthetic(EulerRanges::partial_45(), 1.0, 3)),
            _ if Path::new(name).is_dir() => Ok(Scenario::Directory { path: name.into() }),
            _ => Err(Error::InvalidConfig(format!(
                "unknown scenario `{name}`; expected one of {} or a pair directory",
                SCENARIO_NAMES.join(", ")
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Scenario::Synthetic { ranges, n_sample, n_keep, scale, .. } = self {
            if !ranges.is_valid() || *n_keep == 0 || n_keep > n_sample || !(*scale > 0.0) {
                return Err(Error::InvalidConfig(format!("invalid scenario {self:?}")));
            }
        }
        Ok(())
    }
}

/// One evaluated pair. `model` carries the ADD points in the source frame.
#[derive(Debug, Clone)]
pub struct Instance {
    pub index: usize,
    pub seed: u64,
    pub source: PointCloud,
    pub target: PointCloud,
    pub gt: Option<RigidTransform>,
}

/// Instance `index` of a synthetic scenario; deterministic in `(seed, index)`.
pub fn synthetic_instance(scenario: &Scenario, index: usize, seed: u64) -> Result<Instance> {
    let Scenario::Synthetic { ranges, n_sample, n_keep, scale, half_density_boost, .. } = scenario else {
        return Err(Error::InvalidConfig("not a synthetic scenario".into()));
    };
    let inst_seed = derive_seed(seed, index as u64);
    let mesh = instance_mesh(scenario, index, seed)?;
    let pair = make_synthetic_pair(&mesh, ranges, *n_sample, *n_keep, inst_seed)?;
    let mut target = pair.target;
    if *half_density_boost > 0 {
        // Independent target sampling so that no source point has an exact twin.
        let moved = mesh.transformed(&pair.gt);
        let resampled = sample_surface(&moved, *n_sample, derive_seed(inst_seed, 12))?;
        let base = partial_crop(&resampled, *n_keep, derive_seed(inst_seed, 3))?;
        target = densify_half(&base, &moved, *n_sample * half_density_boost, derive_seed(inst_seed, 11))?;
    }
    let s = *scale;
    let gt = RigidTransform::new(pair.gt.rotation, pair.gt.translation * s);
    Ok(Instance {
        index,
        seed: inst_seed,
        source: pair.source.map_points(|p| p * s),
        target: target.map_points(|p| p * s),
        gt: Some(gt),
    })
}

/// Unscaled surface behind instance `index` of a synthetic scenario.
pub fn instance_mesh(scenario: &Scenario, index: usize, seed: u64) -> Result<TriangleMesh> {
    let Scenario::Synthetic { shape, .. } = scenario else {
        return Err(Error::InvalidConfig("not a synthetic scenario".into()));
    };
    Ok(shape.mesh(index, derive_seed(derive_seed(seed, index as u64), 10)))
}

/// The posed mesh sits this many (scaled) units in front of the depth camera.
pub const VIEW_CAMERA_DISTANCE: f64 = 4.0;
pub const VIEW_IMAGE_SIZE: usize = 128;

/// Rendered depth view of a synthetic instance's surface.
#[derive(Debug, Clone)]
pub struct DepthView {
    /// Scaled surface in model coordinates.
    pub mesh: TriangleMesh,
    pub depth: DepthImage,
    pub intrinsics: PinholeIntrinsics,
    /// Model to camera.
    pub pose: RigidTransform,
}

/// Camera for views of a surface scaled by `scale`.
pub fn view_intrinsics(scale: f64) -> PinholeIntrinsics {
    PinholeIntrinsics { fx: 200.0, fy: 200.0, cx: 64.0, cy: 64.0, depth_scale: 0.001 * scale }
}

/// Renders instance `index` of a synthetic scenario with the instance's
/// ground-truth rotation, pushed [`VIEW_CAMERA_DISTANCE`] along the optical axis.
pub fn synthetic_depth_view(scenario: &Scenario, index: usize, seed: u64) -> Result<DepthView> {
    let Scenario::Synthetic { ranges, scale, .. } = scenario else {
        return Err(Error::InvalidConfig("not a synthetic scenario".into()));
    };
    let mesh = instance_mesh(scenario, index, seed)?.scaled(*scale);
    let gt = ranges.sample(&mut rng_from_seed(derive_seed(derive_seed(seed, index as u64), 1)));
    let pose = RigidTransform::new(
        gt.rotation,
        (gt.translation + Vec3::new(0.0, 0.0, VIEW_CAMERA_DISTANCE)) * *scale,
    );
    let intrinsics = view_intrinsics(*scale);
    let depth = render_depth(&mesh, &pose, &intrinsics, VIEW_IMAGE_SIZE, VIEW_IMAGE_SIZE);
    Ok(DepthView { mesh, depth, intrinsics, pose })
}

/// Adds fresh surface samples lying on the `+x` half of `crop` (relative to
/// its centroid) and within reach of existing crop points.
fn densify_half(crop: &PointCloud, mesh: &TriangleMesh, extra: usize, seed: u64) -> Result<PointCloud> {
    let center = crop.centroid().ok_or(Error::EmptyCloud("target"))?;
    let fresh = sample_surface(mesh, extra, seed)?;
    let grid = HashGrid::with_auto_cell(&crop.points);
    let reach = 0.05;
    let mut points = crop.points.clone();
    let mut normals = crop.normals.clone();
    for (i, p) in fresh.points.iter().enumerate() {
        let near = grid.nearest(p).is_some_and(|(_, d)| d < reach);
        if p.x > center.x && near {
            points.push(*p);
            if let (Some(n), Some(fnorm)) = (normals.as_mut(), fresh.normals.as_ref()) {
                n.push(fnorm[i]);
            }
        }
    }
    Ok(PointCloud { points, normals })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    Pipeline(PipelineConfig),
    /// ICP from the identity on the normalized pair.
    IcpOnly(IcpConfig),
    /// Returns the ground truth.
    Oracle,
    Identity,
}

pub const METHOD_NAMES: &[&str] = &[
    "bpnet",
    "icp",
    "oracle",
    "identity",
    "no-normalize",
    "no-voxel",
    "no-icp",
    "top3",
    "softmax-weighted",
    "softmax-hard",
    "sinkhorn-weighted",
    "sinkhorn-hard",
];

/// Registry lookup. Ablations start from `base`, the full recipe.
pub fn resolve_method(name: &str, base: &PipelineConfig) -> Result<Method> {
    let epsilon = match base.matching {
        MatchingMode::Sinkhorn(s) => s.epsilon,
        MatchingMode::Softmax { temperature } => temperature,
    };
    let sinkhorn = match base.matching {
        MatchingMode::Sinkhorn(s) => s,
        MatchingMode::Softmax { temperature } => SinkhornConfig { epsilon: temperature, ..SinkhornConfig::default() },
    };
    let threshold = match base.selection {
        SelectionMode::Hard { threshold } => threshold,
        SelectionMode::Weighted | SelectionMode::TopK { .. } => 0.05,
    };
    let ablate = |matching, selection| {
        Method::Pipeline(PipelineConfig { matching, selection, icp: None, ..*base })
    };
    Ok(match name {
        "bpnet" => Method::Pipeline(*base),
        "icp" => Method::IcpOnly(IcpConfig { max_iters: 50, tol: 1e-6, ..IcpConfig::default() }),
        "oracle" => Method::Oracle,
        "identity" => Method::Identity,
        "no-normalize" => Method::Pipeline(PipelineConfig { normalize: false, ..*base }),
        "no-voxel" => Method::Pipeline(PipelineConfig { voxel: false, ..*base }),
        "no-icp" => Method::Pipeline(PipelineConfig { icp: None, ..*base }),
        "top3" => Method::Pipeline(PipelineConfig { selection: SelectionMode::top_k(3), ..*base }),
        "softmax-weighted" => ablate(MatchingMode::Softmax { temperature: epsilon }, SelectionMode::Weighted),
        "softmax-hard" => ablate(MatchingMode::Softmax { temperature: epsilon }, SelectionMode::Hard { threshold }),
        "sinkhorn-weighted" => ablate(MatchingMode::Sinkhorn(sinkhorn), SelectionMode::Weighted),
        "sinkhorn-hard" => ablate(MatchingMode::Sinkhorn(sinkhorn), SelectionMode::Hard { threshold }),
        _ => {
            return Err(Error::InvalidConfig(format!(
                "unknown method `{name}`; valid methods: {}",
                METHOD_NAMES.join(", ")
            )))
        }
    })
}

impl Method {
    pub fn estimate(&self, inst: &Instance) -> Result<RigidTransform> {
        match self {
            Method::Pipeline(cfg) => Ok(register(&inst.source, &inst.target, cfg)?.pose),
            Method::IcpOnly(cfg) => {
                let (s, t, rec) = normalize_pair(&inst.source, &inst.target)?;
                let r = icp(&s, &t, &RigidTransform::identity(), cfg)?;
                Ok(denormalize_pose(&r.pose, &rec))
            }
            Method::Oracle => inst.gt.ok_or_else(|| Error::InvalidConfig("oracle needs a ground-truth pose".into())),
            Method::Identity => Ok(RigidTransform::identity()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    /// Scenario name or pair directory.
    pub scenario: String,
    pub methods: Vec<String>,
    pub n_instances: usize,
    pub seed: u64,
    pub pipeline: PipelineConfig,
    pub thresholds: Thresholds,
    /// Record wall-clock runtimes (makes reports non-reproducible).
    pub timing: bool,
}

impl BenchmarkSpec {
    pub fn new(scenario: &str, methods: &[&str], n_instances: usize, seed: u64) -> Self {
        BenchmarkSpec {
            scenario: scenario.to_string(),
            methods: methods.iter().map(|m| m.to_string()).collect(),
            n_instances,
            seed,
            pipeline: PipelineConfig::default(),
            thresholds: Thresholds::default(),
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub instance: usize,
    pub name: String,
    pub seed: u64,
    pub method: String,
    /// `None` when the method failed.
    pub rot_err_deg: Option<f64>,
    pub trans_err: Option<f64>,
    pub add: Option<f64>,
    /// Whether ADD is under the fraction of the model diameter.
    pub add_ok: bool,
    pub runtime_ms: Option<f64>,
    pub failure: Option<String>,
}

impl InstanceRecord {
    pub fn rotation_error(&self) -> f64 {
        self.rot_err_deg.unwrap_or(f64::INFINITY)
    }

    pub fn translation_error(&self) -> f64 {
        self.trans_err.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub instances: usize,
    pub failures: usize,
    pub rotation_map: Vec<f64>,
    pub translation_map: Vec<f64>,
    pub add_accuracy: f64,
    /// Failures count as [`FAILURE_ROTATION_DEG`].
    pub mean_rotation_error_deg: f64,
    pub mean_runtime_ms: Option<f64>,
}

impl MethodSummary {
    /// mAP at a rotation threshold that is part of the report's ladder.
    pub fn rotation_map_at(&self, thresholds: &Thresholds, deg: f64) -> Option<f64> {
        thresholds.rotation_deg.iter().position(|&t| t == deg).map(|i| self.rotation_map[i])
    }

    pub fn translation_map_at(&self, thresholds: &Thresholds, t: f64) -> Option<f64> {
        thresholds.translation.iter().position(|&x| x == t).map(|i| self.translation_map[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub version: String,
    pub spec: BenchmarkSpec,
    pub summaries: Vec<MethodSummary>,
    /// Instance-major, methods in spec order.
    pub instances: Vec<InstanceRecord>,
}

impl BenchmarkReport {
    pub fn summary(&self, method: &str) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn records(&self, method: &str) -> impl Iterator<Item = &InstanceRecord> {
        let method = method.to_string();
        self.instances.iter().filter(move |r| r.method == method)
    }
}

/// Runs every method on every instance. Instances are evaluated in parallel
/// on the current rayon pool; results are ordered by instance index.
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<BenchmarkReport> {
    if spec.n_instances == 0 {
        return Err(Error::InvalidConfig("benchmark needs at least one instance".into()));
    }
    if spec.methods.is_empty() {
        return Err(Error::InvalidConfig("benchmark needs at least one method".into()));
    }
    spec.thresholds.validate()?;
    spec.pipeline.validate()?;
    let scenario = Scenario::parse(&spec.scenario)?;
    scenario.validate()?;
    let methods: Vec<Method> = spec
        .methods
        .iter()
        .map(|m| resolve_method(m, &spec.pipeline))
        .collect::<Result<_>>()?;
    let dirs = match &scenario {
        Scenario::Directory { path } => list_pair_dirs(path)?,
        Scenario::Synthetic { .. } => Vec::new(),
    };
    let n = match &scenario {
        Scenario::Directory { .. } => spec.n_instances.min(dirs.len()),
        Scenario::Synthetic { .. } => spec.n_instances,
    };

    let per_instance: Vec<Vec<InstanceRecord>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let (name, inst) = match &scenario {
                Scenario::Synthetic { .. } => (format!("{k:04}"), synthetic_instance(&scenario, k, spec.seed)),
                Scenario::Directory { .. } => {
                    let inst_seed = derive_seed(spec.seed, k as u64);
                    match read_pair_dir(&dirs[k], inst_seed) {
                        Ok(p) => (
                            p.name,
                            Ok(Instance { index: k, seed: inst_seed, source: p.source, target: p.target, gt: p.gt }),
                        ),
                        Err(e) => (dirs[k].display().to_string(), Err(e)),
                    }
                }
            };
            spec.methods
                .iter()
                .zip(&methods)
                .map(|(mname, method)| evaluate(&name, k, spec, mname, method, inst.as_ref()))
                .collect()
        })
        .collect();
    let instances: Vec<InstanceRecord> = per_instance.into_iter().flatten().collect();

    let summaries = spec
        .methods
        .iter()
        .map(|m| summarize(m, &instances, spec))
        .collect::<Result<_>>()?;
    Ok(BenchmarkReport {
        version: crate::VERSION.to_string(),
        spec: spec.clone(),
        summaries,
        instances,
    })
}

fn evaluate(
    name: &str,
    index: usize,
    spec: &BenchmarkSpec,
    method_name: &str,
    method: &Method,
    inst: std::result::Result<&Instance, &Error>,
) -> InstanceRecord {
    let mut rec = InstanceRecord {
        instance: index,
        name: name.to_string(),
        seed: derive_seed(spec.seed, index as u64),
        method: method_name.to_string(),
        rot_err_deg: None,
        trans_err: None,
        add: None,
        add_ok: false,
        runtime_ms: None,
        failure: None,
    };
    let inst = match inst {
        Ok(i) => i,
        Err(e) => {
            rec.failure = Some(e.to_string());
            return rec;
        }
    };
    let Some(gt) = inst.gt else {
        rec.failure = Some("pair has no ground-truth pose".into());
        return rec;
    };
    let start = Instant::now();
    let estimate = method.estimate(inst);
    if spec.timing {
        rec.runtime_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    match estimate.and_then(|pose| {
        let add = add_metric(&inst.source, &pose, &gt)?;
        let diameter = model_diameter(&inst.source)?;
        Ok((pose, add, diameter))
    }) {
        Ok((pose, add, diameter)) => {
            rec.rot_err_deg = Some(rotation_error(&pose.rotation, &gt.rotation));
            rec.trans_err = Some(spec.thresholds.translation_metric.eval(&pose, &gt));
            rec.add = Some(add);
            rec.add_ok = add < spec.thresholds.add_fraction * diameter;
        }
        Err(e) => rec.failure = Some(e.to_string()),
    }
    rec
}

fn summarize(method: &str, records: &[InstanceRecord], spec: &BenchmarkSpec) -> Result<MethodSummary> {
    let rows: Vec<&InstanceRecord> = records.iter().filter(|r| r.method == method).collect();
    let rot: Vec<f64> = rows.iter().map(|r| r.rotation_error()).collect();
    let trans: Vec<f64> = rows.iter().map(|r| r.translation_error()).collect();
    let n = rows.len() as f64;
    let mean_rot = rows.iter().map(|r| r.rot_err_deg.unwrap_or(FAILURE_ROTATION_DEG)).sum::<f64>() / n;
    let mean_runtime_ms = if spec.timing {
        Some(rows.iter().filter_map(|r| r.runtime_ms).sum::<f64>() / n)
    } else {
        None
    };
    Ok(MethodSummary {
        method: method.to_string(),
        instances: rows.len(),
        failures: rows.iter().filter(|r| r.failure.is_some()).count(),
        rotation_map: map_at_thresholds(&rot, &spec.thresholds.rotation_deg)?,
        translation_map: map_at_thresholds(&trans, &spec.thresholds.translation)?,
        add_accuracy: rows.iter().filter(|r| r.add_ok).count() as f64 / n,
        mean_rotation_error_deg: mean_rot,
        mean_runtime_ms,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "inf".to_string(), |x| x.to_string())
}

/// One row per instance and method. Leading `#` lines carry the toolkit
/// version and the run configuration as compact JSON.
pub fn render_csv(report: &BenchmarkReport, config: &serde_json::Value) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# regkit {}", report.version);
    let _ = writeln!(out, "# config: {config}");
    out.push_str("scenario,method,instance,name,seed,rot_err_deg,trans_err,add,add_ok,runtime_ms,failure\n");
    for r in &report.instances {
        let failure = r.failure.as_deref().unwrap_or("").replace(['"', ',', '\n'], " ");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            report.spec.scenario,
            r.method,
            r.instance,
            r.name,
            r.seed,
            fmt_opt(r.rot_err_deg),
            fmt_opt(r.trans_err),
            fmt_opt(r.add),
            r.add_ok,
            r.runtime_ms.map_or_else(String::new, |t| format!("{t:.3}")),
            failure
        );
    }
    out
}

/// Aligned plain-text table: one row per method, one column per threshold.
pub fn render_summary(report: &BenchmarkReport) -> String {
    let th = &report.spec.thresholds;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "regkit {}  scenario {}  instances {}  seed {}  translation metric {:?}",
        report.version, report.spec.scenario, report.spec.n_instances, report.spec.seed, th.translation_metric
    );
    let mut header = format!("{:<18}", "method");
    for t in &th.rotation_deg {
        header += &format!(" {:>8}", format!("R@{t}"));
    }
    for t in &th.translation {
        header += &format!(" {:>8}", format!("t@{t}"));
    }
    header += &format!(" {:>8} {:>6} {:>9}", format!("ADD{}", th.add_fraction), "fail", "meanR");
    if report.spec.timing {
        header += &format!(" {:>9}", "ms");
    }
    out.push_str(header.trim_end());
    out.push('\n');
    for s in &report.summaries {
        let mut row = format!("{:<18}", s.method);
        for v in s.rotation_map.iter().chain(&s.translation_map) {
            row += &format!(" {v:>8.3}");
        }
        row += &format!(" {:>8.3} {:>6} {:>9.3}", s.add_accuracy, s.failures, s.mean_rotation_error_deg);
        if let Some(ms) = s.mean_runtime_ms {
            row += &format!(" {ms:>9.1}");
        }
        out.push_str(&row);
        out.push('\n');
    }
    out
}

/// Writes `report.json`, `instances.csv` and `summary.txt` into `dir`.
pub fn write_report(report: &BenchmarkReport, dir: impl AsRef<Path>, config: &serde_json::Value) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    #[derive(Serialize)]
    struct Envelope<'a> {
        version: &'a str,
        config: &'a serde_json::Value,
        report: &'a BenchmarkReport,
    }
    write_json(dir.join("report.json"), &Envelope { version: &report.version, config, report })?;
    let csv = dir.join("instances.csv");
    fs::write(&csv, render_csv(report, config)).map_err(|e| Error::io(&csv, e))?;
    let txt = dir.join("summary.txt");
    fs::write(&txt, render_summary(report)).map_err(|e| Error::io(&txt, e))
}
