//! Render a synthetic surface to a 16-bit depth image, write and re-read it
//! as PNG, back-project it and register the mesh sample against it.

use regkit::eval::{synthetic_depth_view, Scenario};
use regkit::geometry::rotation_error;
use regkit::io::{depth_to_pointcloud, read_depth_png, write_depth_png};
use regkit::sampling::sample_surface;
use regkit::solver::{register, PipelineConfig, SelectionMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = Scenario::parse("45deg")?;
    let view = synthetic_depth_view(&scenario, 0, 5)?;
    let dir = std::env::temp_dir().join("regkit-depth-roundtrip");
    std::fs::create_dir_all(&dir)?;
    let png = dir.join("depth.png");
    write_depth_png(&view.depth, &png)?;
    let depth = read_depth_png(&png)?;
    assert_eq!(depth, view.depth);
    let target = depth_to_pointcloud(&depth, &view.intrinsics, None)?;
    let source = sample_surface(&view.mesh, 4096, 1)?;
    println!("{} valid pixels, {} model samples", target.len(), source.len());
    for (label, selection) in [("mutual", PipelineConfig::default().selection), ("top-3", SelectionMode::top_k(3))] {
        let result = register(&source, &target, &PipelineConfig { selection, ..PipelineConfig::default() })?;
        println!(
            "{label:>6}: rotation error {:.3}°, translation error {:.3e}",
            rotation_error(&result.pose.rotation, &view.pose.rotation),
            (result.pose.translation - view.pose.translation).norm()
        );
    }
    Ok(())
}
