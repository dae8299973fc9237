//! Small ablation run: the full pipeline against variants with one stage
//! switched off.

use regkit::eval::{render_summary, run_benchmark, BenchmarkSpec};

fn main() -> regkit::Result<()> {
    let methods = ["bpnet", "no-voxel", "no-normalize", "sinkhorn-weighted", "softmax-hard", "icp"];
    let report = run_benchmark(&BenchmarkSpec::new("45deg", &methods, 10, 0))?;
    print!("{}", render_summary(&report));
    Ok(())
}
