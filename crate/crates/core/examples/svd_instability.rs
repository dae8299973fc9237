//! Gradient norm of an SVD-based loss as two singular values approach each
//! other.

use regkit::cli::svd_probe_rows;

fn main() -> regkit::Result<()> {
    let (rows, slope) = svd_probe_rows(&[1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 1e-4, 0.0])?;
    println!("{:>8} {:>14} {:>14} {:>10}", "gap", "U-path norm", "fd norm", "rel err");
    let show = |v: Option<f64>| v.map_or("unbounded".to_string(), |x| format!("{x:.4e}"));
    for r in &rows {
        println!(
            "{:>8.0e} {:>14} {:>14.4e} {:>10}",
            r.requested_gap,
            show(r.report.factor_path_norm),
            r.report.finite_difference_norm,
            show(r.report.relative_error)
        );
    }
    println!("log-log slope {}", slope.map_or("n/a".into(), |s| format!("{s:.3}")));
    Ok(())
}
