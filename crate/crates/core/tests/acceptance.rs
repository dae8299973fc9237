//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use regkit::dense::DenseMatrix;
use regkit::eval::{
    add_metric, map_at_thresholds, run_benchmark, selection_trial, simulate_matching_problem, BenchmarkReport,
    BenchmarkSpec, MatchingProblemConfig,
};
use regkit::geometry::{rot_z, rotation_error, rotation_error_rad, EulerRanges, RigidTransform, Vec3};
use regkit::learn::{batchnorm_forward, gradient_check, random_problem, BatchNormState, BnMode, ToyEncoder, TrainConfig};
use regkit::matching::{sinkhorn, SinkhornConfig};
use regkit::seed::{derive_seed, rng_from_seed};
use regkit::cli::svd_probe_rows;
use regkit::cloud::PointCloud;
use regkit::solver::procrustes_points;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("procrustes exactness", procrustes_exactness),
        ("sinkhorn correctness", sinkhorn_correctness),
        ("gradient fidelity", gradient_fidelity),
        ("svd instability", svd_instability),
        ("hard beats weighted selection", hard_vs_weighted),
        ("scale normalization", scale_normalization),
        ("voxel bijection under density mismatch", voxel_bijection),
        ("desk-scale benchmark", desk_scale_benchmark),
        ("metric unit suite", metric_suite),
        ("cli determinism across --jobs", cli_determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} criterion {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, k + 1, o.detail);
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn procrustes_exactness() -> Outcome {
    let mut rng = rng_from_seed(1);
    let mut worst_rot: f64 = 0.0;
    let mut worst_t: f64 = 0.0;
    let start = Instant::now();
    let mut solved = 0;
    while solved < 1000 {
        let n = rng.random_range(3..=50);
        let xs: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        // Skip near-collinear draws: the problem is only well posed in 2+ dimensions.
        let c = xs.iter().sum::<Vec3>() / n as f64;
        let spread = xs.iter().map(|x| (x - c).cross(&(xs[0] - c)).norm()).fold(0.0, f64::max);
        if spread < 1e-3 {
            continue;
        }
        let gt = EulerRanges::full().sample(&mut rng);
        let ys: Vec<Vec3> = xs.iter().map(|x| gt.apply_point(x)).collect();
        let pose = procrustes_points(&xs, &ys, None).expect("non-degenerate instance");
        worst_rot = worst_rot.max(rotation_error_rad(&pose.rotation, &gt.rotation));
        worst_t = worst_t.max((pose.translation - gt.translation).norm());
        solved += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_rot <= 1e-9 && worst_t <= 1e-9 && secs < 2.0,
        format!("max rotation err {worst_rot:.2e} rad, max translation err {worst_t:.2e}, {secs:.3} s"),
    )
}

/// Exponential-domain scaling iterations on the bin-augmented kernel.
fn naive_sinkhorn(s: &DenseMatrix, eps: f64, iters: usize) -> DenseMatrix {
    let (m, n) = (s.rows(), s.cols());
    let k = DenseMatrix::from_fn(m + 1, n + 1, |i, j| if i < m && j < n { (s.get(i, j) / eps).exp() } else { 1.0 });
    let a: Vec<f64> = (0..=m).map(|i| if i < m { 1.0 } else { n as f64 }).collect();
    let b: Vec<f64> = (0..=n).map(|j| if j < n { 1.0 } else { m as f64 }).collect();
    let mut u = vec![1.0; m + 1];
    let mut v = vec![1.0; n + 1];
    for _ in 0..iters {
        for i in 0..=m {
            u[i] = a[i] / (0..=n).map(|j| k.get(i, j) * v[j]).sum::<f64>();
        }
        for j in 0..=n {
            v[j] = b[j] / (0..=m).map(|i| k.get(i, j) * u[i]).sum::<f64>();
        }
    }
    DenseMatrix::from_fn(m + 1, n + 1, |i, j| u[i] * k.get(i, j) * v[j])
}

fn sinkhorn_correctness() -> Outcome {
    let cfg = SinkhornConfig { bin_score: 0.0, iters: 300, epsilon: 0.1, tolerance: 1e-6 };
    let mut worst_violation: f64 = 0.0;
    let mut worst_diff: f64 = 0.0;
    let mut max_iters = 0;
    let mut all_converged = true;
    for seed in 0..100 {
        let mut rng = rng_from_seed(derive_seed(2, seed));
        let s = DenseMatrix::from_fn(64, 64, |_, _| rng.random_range(-1.0..1.0));
        let (plan, stats) = sinkhorn(&s, &cfg);
        all_converged &= stats.converged;
        max_iters = max_iters.max(stats.iterations);
        // Recompute both marginals of the returned plan directly.
        let (rows, cols) = (plan.matrix.rows(), plan.matrix.cols());
        for i in 0..rows {
            let target = if i < 64 { 1.0 } else { 64.0 };
            let sum: f64 = (0..cols).map(|j| plan.matrix.get(i, j)).sum();
            worst_violation = worst_violation.max((sum - target).abs() / target);
        }
        for j in 0..cols {
            let target = if j < 64 { 1.0 } else { 64.0 };
            let sum: f64 = (0..rows).map(|i| plan.matrix.get(i, j)).sum();
            worst_violation = worst_violation.max((sum - target).abs() / target);
        }
        let oracle = naive_sinkhorn(&s, cfg.epsilon, stats.iterations);
        for i in 0..rows {
            for j in 0..cols {
                worst_diff = worst_diff.max((plan.matrix.get(i, j) - oracle.get(i, j)).abs());
            }
        }
    }
    outcome(
        all_converged && max_iters <= 300 && worst_violation < 1e-6 && worst_diff < 1e-8,
        format!("max marginal violation {worst_violation:.2e}, max |log-domain − naive| {worst_diff:.2e}, ≤ {max_iters} iterations"),
    )
}

fn gradient_fidelity() -> Outcome {
    let base = TrainConfig { embed_dim: 4, sinkhorn_iters: 10, ..TrainConfig::default() };
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let sample = random_problem(8, 6, derive_seed(3, seed));
        let cfg = TrainConfig { seed, ..base };
        let enc = ToyEncoder::new(&cfg, 6);
        let check = gradient_check(&enc, &sample, &cfg, 1e-6).expect("gradient check runs");
        worst = worst.max(check.relative_error);
    }
    outcome(worst < 1e-4, format!("max relative error {worst:.2e} over 20 problems"))
}

fn svd_instability() -> Outcome {
    let (rows, slope) = svd_probe_rows(&[1e-1, 1e-2, 1e-3, 1e-4]).expect("probe runs");
    let norm = |g: f64| rows.iter().find(|r| r.requested_gap == g).and_then(|r| r.report.factor_path_norm);
    let ratio = match (norm(1e-3), norm(1e-1)) {
        (Some(a), Some(b)) => a / b,
        _ => f64::NAN,
    };
    let slope = slope.unwrap_or(f64::NAN);
    outcome(
        (slope + 1.0).abs() <= 0.1 && (ratio / 100.0 - 1.0).abs() <= 0.1,
        format!("log-log slope {slope:.4}, norm ratio δ=1e-3 / δ=1e-1 = {ratio:.2}"),
    )
}

fn hard_vs_weighted() -> Outcome {
    let cfg = MatchingProblemConfig::default();
    let sk = SinkhornConfig::default();
    let mut wins = 0;
    let (mut hard_sum, mut weighted_sum) = (0.0, 0.0);
    for seed in 0..200 {
        let p = simulate_matching_problem(&cfg, derive_seed(5, seed)).expect("valid problem");
        let t = selection_trial(&p, &sk, 0.05);
        if t.hard_deg <= t.weighted_deg {
            wins += 1;
        }
        hard_sum += t.hard_deg;
        weighted_sum += t.weighted_deg;
    }
    let (hard_mean, weighted_mean) = (hard_sum / 200.0, weighted_sum / 200.0);
    outcome(
        wins as f64 >= 0.8 * 200.0 && hard_mean < weighted_mean,
        format!(
            "hard ≤ weighted in {wins}/200 trials, mean error hard {hard_mean:.4}° vs weighted {weighted_mean:.4}° ({:.0}% outliers, margin {})",
            cfg.outlier_fraction * 100.0,
            cfg.margin
        ),
    )
}

fn benchmark(scenario: &str, methods: &[&str]) -> BenchmarkReport {
    run_benchmark(&BenchmarkSpec::new(scenario, methods, 50, 0)).expect("benchmark runs")
}

fn scale_normalization() -> Outcome {
    let r = benchmark("45deg-x100", &["bpnet", "no-normalize"]);
    let t = &r.spec.thresholds;
    let with = r.summary("bpnet").unwrap().rotation_map_at(t, 30.0).unwrap();
    let without = r.summary("no-normalize").unwrap().rotation_map_at(t, 30.0).unwrap();
    outcome(
        with >= 0.9 && without <= 0.5,
        format!("rotation mAP@30° with normalization {with:.2}, without {without:.2} (50 pairs ×100)"),
    )
}

fn voxel_bijection() -> Outcome {
    let r = benchmark("45deg-density", &["bpnet", "no-voxel"]);
    let with = r.summary("bpnet").unwrap().mean_rotation_error_deg;
    let without = r.summary("no-voxel").unwrap().mean_rotation_error_deg;
    let gain = (without - with) / without;
    outcome(
        gain >= 0.2,
        format!("mean rotation error voxel {with:.2}° vs no-voxel {without:.2}°, relative improvement {:.1}% (need ≥ 20%)", gain * 100.0),
    )
}

fn desk_scale_benchmark() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let r = pool.install(|| benchmark("45deg", &["bpnet"]));
    let secs = start.elapsed().as_secs_f64();
    let t = &r.spec.thresholds;
    let s = r.summary("bpnet").unwrap();
    let rot = s.rotation_map_at(t, 10.0).unwrap();
    let trans = s.translation_map_at(t, 0.05).unwrap();
    outcome(
        rot >= 0.7 && trans >= 0.7 && secs < 60.0,
        format!("rotation mAP@10° {rot:.2}, translation mAP@0.05 {trans:.2}, {secs:.1} s single-threaded"),
    )
}

fn metric_suite() -> Outcome {
    let mut failures = Vec::new();
    let rz = rotation_error(&rot_z(30.0), &nalgebra::Matrix3::identity());
    if (rz - 30.0).abs() > 1e-6 {
        failures.push(format!("rotation_error(Rz 30°) = {rz}"));
    }
    let map = map_at_thresholds(&[3.0, 8.0, 40.0], &[5.0, 10.0, 30.0]).unwrap();
    if map != [1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0] {
        failures.push(format!("mAP example = {map:?}"));
    }
    let model = PointCloud::new(vec![Vec3::new(0.1, 0.2, 0.3), Vec3::new(-1.0, 0.5, 2.0), Vec3::new(0.7, -0.4, 0.0)]);
    let gt = RigidTransform::new(rot_z(25.0), Vec3::new(1.0, -2.0, 0.5));
    let add_id = add_metric(&model, &gt, &gt).unwrap();
    if add_id != 0.0 {
        failures.push(format!("ADD identity = {add_id}"));
    }
    let shift = Vec3::new(0.0, 0.375, 0.0);
    let shifted = RigidTransform::new(gt.rotation, gt.translation + shift);
    let add_shift = add_metric(&model, &shifted, &gt).unwrap();
    if add_shift != shift.norm() {
        failures.push(format!("ADD pure translation = {add_shift}, expected {}", shift.norm()));
    }
    let mut state = BatchNormState::new(1, BnMode::Current);
    let y = batchnorm_forward(&DenseMatrix::from_fn(3, 1, |i, _| (i + 1) as f64), &mut state, false).unwrap();
    let expected = [-1.2247, 0.0, 1.2247];
    if (0..3).any(|i| (y.get(i, 0) - expected[i]).abs() > 1e-4) {
        failures.push(format!("batchnorm [1,2,3] = {:?}", (0..3).map(|i| y.get(i, 0)).collect::<Vec<_>>()));
    }
    let pass = failures.is_empty();
    outcome(pass, if pass { "5/5 checks".into() } else { failures.join("; ") })
}

fn cli_determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let mut notes = Vec::new();
    let runs: Vec<_> = ["1", "8"]
        .iter()
        .map(|jobs| {
            let dir = root.path().join(format!("jobs{jobs}"));
            std::fs::create_dir_all(&dir).unwrap();
            run_all_commands(&dir, jobs, &mut notes);
            dir
        })
        .collect();
    let a = collect_files(&runs[0]);
    let b = collect_files(&runs[1]);
    let mut differing: Vec<String> = Vec::new();
    if a.iter().map(|f| &f.0).ne(b.iter().map(|f| &f.0)) {
        differing.push("file sets differ".into());
    }
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        if x != y {
            differing.push(name.clone());
        }
    }
    notes.extend(differing.iter().map(|d| format!("differs: {d}")));
    outcome(
        notes.is_empty() && a.len() > 10,
        if notes.is_empty() {
            format!("{} output files byte-identical for --jobs 1 and 8 across 5 commands", a.len())
        } else {
            notes.join("; ")
        },
    )
}

fn regkit(dir: &Path, jobs: &str, args: &[&str], notes: &mut Vec<String>) {
    let out = Command::new(env!("CARGO_BIN_EXE_regkit"))
        .current_dir(dir)
        .args(["--seed", "7", "--jobs", jobs])
        .args(args)
        .output()
        .expect("regkit runs");
    if !out.status.success() {
        notes.push(format!("`regkit {}` exited with {}", args.join(" "), out.status));
    }
}

fn run_all_commands(dir: &Path, jobs: &str, notes: &mut Vec<String>) {
    regkit(dir, jobs, &["synth", "--n", "2", "--out", "synth"], notes);
    regkit(dir, jobs, &["synth", "--depth", "--out", "synth-depth"], notes);
    regkit(
        dir,
        jobs,
        &[
            "register",
            "synth/pair_000/source.ply",
            "synth/pair_000/target.ply",
            "--gt",
            "synth/pair_000/gt.json",
            "--out",
            "register.json",
            "--aligned",
            "aligned.ply",
        ],
        notes,
    );
    regkit(dir, jobs, &["benchmark", "--scenario", "45deg", "--methods", "bpnet,icp,sinkhorn-weighted", "--n", "4", "--out", "bench"], notes);
    regkit(dir, jobs, &["benchmark", "--scenario", "synth", "--methods", "bpnet", "--n", "2", "--out", "bench-dir"], notes);
    regkit(dir, jobs, &["svd-probe", "--out", "svd.json"], notes);
    regkit(dir, jobs, &["train-toy", "--pairs", "4", "--points", "48", "--epochs", "3", "--out", "train"], notes);
}

fn collect_files(root: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                let name = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((name, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out
}
