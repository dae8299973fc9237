//! The `regkit` command line.
//!
//! Exit codes: 0 success, 1 usage/I/O/config errors, 2 when no usable
//! correspondences survive selection, 3 when training diverges.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::eval::dataset::{
    depth_cloud, list_pair_dirs, load_cloud, read_pair_dir, write_json, write_pair_dir, DEPTH_FILE, GT_FILE, MESH_SAMPLES,
    INTRINSICS_FILE, SOURCE_FILE,
};
use crate::eval::{
    instance_mesh, render_summary, run_benchmark, synthetic_depth_view, synthetic_instance, write_report, BenchmarkSpec,
    Scenario,
};
use crate::geometry::{rotation_error, translation_error_l2, RigidTransform};
use crate::io::{read_depth_png, read_intrinsics, read_mask_png, write_depth_png, write_intrinsics, write_obj, write_pointcloud};
use crate::learn::{toy_dataset, train_toy_encoder, training_sample, BnMode, Checkpoint, TrainConfig};
use crate::matching::SinkhornConfig;
use crate::sampling::sample_surface;
use crate::seed::derive_seed;
use crate::solver::svd_probe::{default_loss_direction, gap_matrix, loglog_slope};
use crate::solver::{register, svd_gradient_probe, MatchingMode, PipelineConfig, SelectionMode, SvdGradientReport};
use crate::VERSION;

#[derive(Parser, Debug)]
#[command(name = "regkit", version, about = "Rigid point-cloud registration toolkit")]
pub struct Cli {
    /// Master seed for every stochastic step.
    #[arg(long, global = true, env = "REGKIT_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// JSON file with base settings: a pipeline config for `register` and
    /// `benchmark`, a training config for `train-toy`. Flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Align a source cloud or mesh onto a target cloud, mesh or depth image.
    Register(RegisterArgs),
    /// Run methods over a scenario and write CSV/JSON/text reports.
    Benchmark(BenchmarkArgs),
    /// Tabulate SVD backward-pass gradient norms against the singular-value gap.
    SvdProbe(SvdProbeArgs),
    /// Train the toy encoder through unrolled Sinkhorn.
    TrainToy(TrainArgs),
    /// Write synthetic pairs to disk.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatchingArg {
    Sinkhorn,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectionArg {
    Hard,
    Weighted,
    /// Several candidates per source point, disambiguated by the consistency filter.
    TopK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BnModeArg {
    Current,
    Running,
}

#[derive(Args, Debug, Clone, Default)]
pub struct PipelineFlags {
    /// Skip scale normalization.
    #[arg(long)]
    pub no_normalize: bool,
    /// Skip voxel downsampling and the target count cap.
    #[arg(long)]
    pub no_voxel: bool,
    #[arg(long)]
    pub voxel_size: Option<f64>,
    /// Defaults to ten voxel edges.
    #[arg(long)]
    pub fpfh_radius: Option<f64>,
    #[arg(long, value_enum)]
    pub matching: Option<MatchingArg>,
    #[arg(long, value_enum)]
    pub selection: Option<SelectionArg>,
    /// Candidates per source point for `--selection top-k`.
    #[arg(long, default_value_t = 3)]
    pub top_k: usize,
    /// Skip length-consistency pruning.
    #[arg(long)]
    pub no_consistency: bool,
    /// Skip ICP refinement.
    #[arg(long)]
    pub no_icp: bool,
}

impl PipelineFlags {
    pub fn apply(&self, mut cfg: PipelineConfig) -> PipelineConfig {
        cfg.normalize &= !self.no_normalize;
        cfg.voxel &= !self.no_voxel;
        if let Some(v) = self.voxel_size {
            cfg.voxel_params.voxel_size = v;
        }
        if self.fpfh_radius.is_some() {
            cfg.fpfh_radius = self.fpfh_radius;
        }
        let epsilon = match cfg.matching {
            MatchingMode::Sinkhorn(s) => s.epsilon,
            MatchingMode::Softmax { temperature } => temperature,
        };
        match self.matching {
            Some(MatchingArg::Softmax) => cfg.matching = MatchingMode::Softmax { temperature: epsilon },
            Some(MatchingArg::Sinkhorn) if matches!(cfg.matching, MatchingMode::Softmax { .. }) => {
                let defaults = match PipelineConfig::default().matching {
                    MatchingMode::Sinkhorn(s) => s,
                    MatchingMode::Softmax { .. } => SinkhornConfig::default(),
                };
                cfg.matching = MatchingMode::Sinkhorn(SinkhornConfig { epsilon, ..defaults })
            }
            _ => {}
        }
        match self.selection {
            Some(SelectionArg::Weighted) => cfg.selection = SelectionMode::Weighted,
            Some(SelectionArg::TopK) => cfg.selection = SelectionMode::top_k(self.top_k),
            Some(SelectionArg::Hard) if cfg.selection == SelectionMode::Weighted => {
                cfg.selection = PipelineConfig::default().selection
            }
            _ => {}
        }
        if self.no_consistency {
            cfg.consistency_tolerance = None;
        }
        if self.no_icp {
            cfg.icp = None;
        }
        cfg
    }
}

#[derive(Args, Debug)]
pub struct RegisterArgs {
    /// PLY point cloud, or PLY/OBJ mesh (surface-sampled).
    pub source: PathBuf,
    /// PLY/OBJ file, or a 16-bit depth PNG (needs --intrinsics).
    pub target: PathBuf,
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    /// 8-bit PNG; nonzero pixels are kept.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Ground-truth pose JSON; adds pose errors to the report.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
    /// Result JSON (printed to stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the source moved by the estimated pose as PLY.
    #[arg(long)]
    pub aligned: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    /// Named scenario (45deg, full, 45deg-x100, 45deg-density) or a directory of pairs.
    #[arg(long, default_value = "45deg")]
    pub scenario: String,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',', default_value = "bpnet")]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Record per-instance runtimes (outputs are then no longer reproducible).
    #[arg(long)]
    pub timing: bool,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
}

#[derive(Args, Debug)]
pub struct SvdProbeArgs {
    /// Singular-value gaps; 0 yields an unbounded row.
    #[arg(long, value_delimiter = ',', default_value = "1e-1,1e-2,1e-3,1e-4", allow_hyphen_values = true)]
    pub gaps: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory of pairs with gt.json (synthetic pairs when omitted).
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub pairs: usize,
    #[arg(long, default_value_t = 64)]
    pub points: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum)]
    pub bn_mode: Option<BnModeArg>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Named synthetic scenario.
    #[arg(long, default_value = "45deg")]
    pub scenario: String,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Replace the target cloud by a rendered depth view of the posed mesh.
    #[arg(long)]
    pub depth: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Everything that determines a command's output. Written into every report;
/// output locations and the thread count are deliberately left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: String,
    pub seed: u64,
    #[serde(flatten)]
    pub command: CommandConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum CommandConfig {
    Register {
        source: PathBuf,
        target: PathBuf,
        intrinsics: Option<PathBuf>,
        mask: Option<PathBuf>,
        gt: Option<PathBuf>,
        pipeline: PipelineConfig,
    },
    Benchmark {
        scenario: String,
        methods: Vec<String>,
        n: usize,
        timing: bool,
        pipeline: PipelineConfig,
    },
    SvdProbe {
        gaps: Vec<f64>,
    },
    TrainToy {
        data: Option<PathBuf>,
        pairs: usize,
        points: usize,
        resume: Option<PathBuf>,
        train: TrainConfig,
    },
    Synth {
        scenario: String,
        n: usize,
        depth: bool,
    },
}

impl RunConfig {
    fn new(seed: u64, command: CommandConfig) -> Self {
        RunConfig { version: VERSION.to_string(), seed, command }
    }

    fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }

    /// Single-line JSON for CSV comment headers.
    fn to_line(&self) -> String {
        serde_json::to_string(self).expect("run config serializes")
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NoCorrespondences | Error::TooFewCorrespondences(_) => 2,
        Error::Diverged { .. } => 3,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let base = cli.config.as_deref().map(read_config_text).transpose()?;
    let seed = cli.seed;
    pool.install(|| match &cli.command {
        Command::Register(a) => cmd_register(a, seed, base.as_deref()),
        Command::Benchmark(a) => cmd_benchmark(a, seed, base.as_deref()),
        Command::SvdProbe(a) => cmd_svd_probe(a, seed),
        Command::TrainToy(a) => cmd_train_toy(a, seed, base.as_deref()),
        Command::Synth(a) => cmd_synth(a, seed),
    })
}

fn read_config_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn base_pipeline(text: Option<&str>, seed: u64) -> Result<PipelineConfig> {
    let mut cfg: PipelineConfig = match text {
        Some(t) => serde_json::from_str(t)?,
        None => PipelineConfig::default(),
    };
    cfg.seed = seed;
    Ok(cfg)
}

fn cmd_register(a: &RegisterArgs, seed: u64, base: Option<&str>) -> Result<()> {
    let pipeline = a.pipeline.apply(base_pipeline(base, seed)?);
    pipeline.validate()?;
    let run = RunConfig::new(
        seed,
        CommandConfig::Register {
            source: a.source.clone(),
            target: a.target.clone(),
            intrinsics: a.intrinsics.clone(),
            mask: a.mask.clone(),
            gt: a.gt.clone(),
            pipeline,
        },
    );
    let source = load_cloud(&a.source, derive_seed(seed, 1))?;
    let target = load_target(a, seed)?;
    let gt: Option<RigidTransform> = match &a.gt {
        Some(p) => Some(serde_json::from_str(&read_config_text(p)?)?),
        None => None,
    };
    let result = match register(&source, &target, &pipeline) {
        Ok(r) => r,
        Err(e) => {
            // Keep a record of the failed run; the error still sets the exit code.
            if let Some(path) = &a.out {
                let failure = serde_json::json!({ "version": VERSION, "config": run, "error": e.to_string() });
                write_json(path, &failure)?;
            }
            return Err(e);
        }
    };
    let evaluation = gt.map(|gt| PoseErrors {
        rotation_error_deg: rotation_error(&result.pose.rotation, &gt.rotation),
        translation_error: translation_error_l2(&result.pose.translation, &gt.translation).sqrt(),
    });

    #[derive(Serialize)]
    struct Report<'a> {
        version: &'a str,
        config: &'a RunConfig,
        result: &'a crate::solver::RegistrationResult,
        evaluation: Option<PoseErrors>,
    }
    let report = Report { version: VERSION, config: &run, result: &result, evaluation };
    match &a.out {
        Some(path) => {
            write_json(path, &report)?;
            print!("{} correspondences, rms {:.6}", result.correspondence_count, result.inlier_rms);
            if let Some(e) = evaluation {
                print!(", rotation error {:.4}°, translation error {:.6}", e.rotation_error_deg, e.translation_error);
            }
            println!();
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    if let Some(path) = &a.aligned {
        write_pointcloud(&source.transformed(&result.pose), path)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize)]
struct PoseErrors {
    rotation_error_deg: f64,
    translation_error: f64,
}

fn load_target(a: &RegisterArgs, seed: u64) -> Result<PointCloud> {
    let is_png = a.target.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if !is_png {
        return load_cloud(&a.target, derive_seed(seed, 2));
    }
    let k_path = a
        .intrinsics
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("a depth target needs --intrinsics".into()))?;
    let img = read_depth_png(&a.target)?;
    let k = read_intrinsics(k_path)?;
    let mask = a.mask.as_ref().map(read_mask_png).transpose()?;
    depth_cloud(&img, &k, mask.as_ref())
}

fn cmd_benchmark(a: &BenchmarkArgs, seed: u64, base: Option<&str>) -> Result<()> {
    let pipeline = a.pipeline.apply(base_pipeline(base, seed)?);
    let methods: Vec<&str> = a.methods.iter().map(String::as_str).collect();
    let mut spec = BenchmarkSpec::new(&a.scenario, &methods, a.n as usize, seed);
    spec.pipeline = pipeline;
    spec.timing = a.timing;
    let run = RunConfig::new(
        seed,
        CommandConfig::Benchmark {
            scenario: a.scenario.clone(),
            methods: a.methods.clone(),
            n: a.n as usize,
            timing: a.timing,
            pipeline,
        },
    );
    let report = run_benchmark(&spec)?;
    write_report(&report, &a.out, &run.to_value())?;
    print!("{}", render_summary(&report));
    Ok(())
}

/// One line of the SVD probe table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdProbeRow {
    pub requested_gap: f64,
    pub report: SvdGradientReport,
}

/// Slope of the `U`-path norm against the gap over the bounded rows.
pub fn svd_probe_rows(gaps: &[f64]) -> Result<(Vec<SvdProbeRow>, Option<f64>)> {
    if let Some(g) = gaps.iter().find(|g| !(**g >= 0.0 && **g < 0.5)) {
        return Err(Error::InvalidConfig(format!("gaps must lie in [0, 0.5), got {g}")));
    }
    let d = default_loss_direction();
    let rows: Vec<SvdProbeRow> = gaps
        .iter()
        .map(|&g| Ok(SvdProbeRow { requested_gap: g, report: svd_gradient_probe(&gap_matrix(g), &d)? }))
        .collect::<Result<_>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| r.report.factor_path_norm.map(|n| (r.requested_gap, n)))
        .unzip();
    Ok((rows, loglog_slope(&xs, &ys)))
}

fn cmd_svd_probe(a: &SvdProbeArgs, seed: u64) -> Result<()> {
    let run = RunConfig::new(seed, CommandConfig::SvdProbe { gaps: a.gaps.clone() });
    let (rows, slope) = svd_probe_rows(&a.gaps)?;
    let fmt = |v: Option<f64>| v.map_or_else(|| "unbounded".to_string(), |v| format!("{v:.6e}"));
    println!("{:>10}  {:>14}  {:>14}  {:>14}  {:>10}", "gap", "u-path norm", "assembled", "finite diff", "rel err");
    for r in &rows {
        println!(
            "{:>10.3e}  {:>14}  {:>14}  {:>14.6e}  {:>10}",
            r.requested_gap,
            fmt(r.report.factor_path_norm),
            fmt(r.report.analytic_norm),
            r.report.finite_difference_norm,
            r.report.relative_error.map_or_else(|| "-".to_string(), |e| format!("{e:.2e}")),
        );
    }
    if let Some(s) = slope {
        println!("log-log slope of u-path norm vs gap: {s:.4}");
    }
    if let Some(path) = &a.out {
        #[derive(Serialize)]
        struct Out<'a> {
            version: &'a str,
            config: &'a RunConfig,
            rows: &'a [SvdProbeRow],
            slope: Option<f64>,
        }
        write_json(path, &Out { version: VERSION, config: &run, rows: &rows, slope })?;
    }
    Ok(())
}

fn cmd_train_toy(a: &TrainArgs, seed: u64, base: Option<&str>) -> Result<()> {
    let mut train: TrainConfig = match base {
        Some(t) => serde_json::from_str(t)?,
        None => TrainConfig::default(),
    };
    train.seed = seed;
    if let Some(e) = a.epochs {
        train.epochs = e;
    }
    if let Some(lr) = a.lr {
        train.learning_rate = lr;
    }
    if let Some(m) = a.bn_mode {
        train.bn_mode = match m {
            BnModeArg::Current => BnMode::Current,
            BnModeArg::Running => BnMode::Running,
        };
    }
    train.validate()?;
    let run = RunConfig::new(
        seed,
        CommandConfig::TrainToy {
            data: a.data.clone(),
            pairs: a.pairs,
            points: a.points,
            resume: a.resume.clone(),
            train,
        },
    );
    let samples = match &a.data {
        Some(dir) => list_pair_dirs(dir)?
            .iter()
            .enumerate()
            .map(|(k, d)| {
                let pair = read_pair_dir(d, derive_seed(seed, k as u64))?;
                let gt = pair
                    .gt
                    .ok_or_else(|| Error::InvalidConfig(format!("{} has no {}", d.display(), GT_FILE)))?;
                training_sample(&pair.source, &pair.target, &gt)
            })
            .collect::<Result<Vec<_>>>()?,
        None => toy_dataset(a.pairs, a.points, seed)?,
    };
    let resume = a.resume.as_deref().map(read_checkpoint).transpose()?;
    let ck = train_toy_encoder(&samples, &train, resume)?;

    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    #[derive(Serialize)]
    struct Out<'a> {
        version: &'a str,
        config: &'a RunConfig,
        checkpoint: &'a Checkpoint,
    }
    write_json(a.out.join("checkpoint.json"), &Out { version: VERSION, config: &run, checkpoint: &ck })?;
    let mut csv = format!("# regkit {VERSION}\n# config: {}\nepoch,loss\n0,{}\n", run.to_line(), ck.initial_loss);
    for (e, l) in ck.loss_history.iter().enumerate() {
        csv.push_str(&format!("{},{l}\n", e + 1));
    }
    let csv_path = a.out.join("loss.csv");
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    println!(
        "epoch {}: loss {:.6} (initial {:.6})",
        ck.epoch,
        ck.loss_history.last().copied().unwrap_or(ck.initial_loss),
        ck.initial_loss
    );
    Ok(())
}

/// Accepts both the `train-toy` output envelope and a bare checkpoint.
pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut value: serde_json::Value = serde_json::from_str(&read_config_text(path)?)?;
    let inner = value.get_mut("checkpoint").map(serde_json::Value::take);
    Ok(serde_json::from_value(inner.unwrap_or(value))?)
}

fn cmd_synth(a: &SynthArgs, seed: u64) -> Result<()> {
    let scenario = Scenario::parse(&a.scenario)?;
    scenario.validate()?;
    let Scenario::Synthetic { scale, .. } = scenario else {
        return Err(Error::InvalidConfig("synth needs a named synthetic scenario".into()));
    };
    if a.n == 0 {
        return Err(Error::InvalidConfig("synth needs at least one pair".into()));
    }
    let run = RunConfig::new(seed, CommandConfig::Synth { scenario: a.scenario.clone(), n: a.n, depth: a.depth });
    for index in 0..a.n {
        let dir = a.out.join(format!("pair_{index:03}"));
        let inst = synthetic_instance(&scenario, index, seed)?;
        let gt = inst.gt.expect("synthetic instances carry ground truth");
        let mesh = instance_mesh(&scenario, index, seed)?.scaled(scale);
        if a.depth {
            let view = synthetic_depth_view(&scenario, index, seed)?;
            let source = sample_surface(&mesh, MESH_SAMPLES, derive_seed(inst.seed, 20))?;
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            write_pointcloud(&source, dir.join(SOURCE_FILE))?;
            write_depth_png(&view.depth, dir.join(DEPTH_FILE))?;
            write_intrinsics(&view.intrinsics, dir.join(INTRINSICS_FILE))?;
            write_json(dir.join(GT_FILE), &view.pose)?;
        } else {
            write_pair_dir(&dir, &inst.source, &inst.target, Some(&gt))?;
        }
        write_obj(&mesh, dir.join("mesh.obj"))?;
        write_json(dir.join("run.json"), &run)?;
    }
    println!("wrote {} pair(s) to {}", a.n, a.out.display());
    Ok(())
}
