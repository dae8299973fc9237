//! Register a synthetic partial pair with the default pipeline and report
//! the error against the known pose.

use regkit::eval::{synthetic_instance, Scenario};
use regkit::geometry::rotation_error;
use regkit::solver::{register, PipelineConfig};

fn main() -> regkit::Result<()> {
    let scenario = Scenario::parse("45deg")?;
    let inst = synthetic_instance(&scenario, 0, 42)?;
    let gt = inst.gt.expect("synthetic instances carry a pose");
    let result = register(&inst.source, &inst.target, &PipelineConfig::default())?;
    let d = &result.diagnostics;
    println!("source {} pts, target {} pts", inst.source.len(), inst.target.len());
    println!(
        "after voxelization {} / {}, selected {}, consistent {:?}, icp iterations {:?}",
        d.source_points, d.target_points, d.selected, d.consistent, d.icp_iterations
    );
    println!("rotation error    {:.4}°", rotation_error(&result.pose.rotation, &gt.rotation));
    println!("translation error {:.2e}", (result.pose.translation - gt.translation).norm());
    println!("inlier rms        {:.2e}", result.inlier_rms);
    Ok(())
}
