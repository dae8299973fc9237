//! Compare mutual hard selection with soft weighting on simulated score maps
//! that contain a block of outlier rows.

use regkit::eval::{selection_trial, simulate_matching_problem, MatchingProblemConfig};
use regkit::matching::SinkhornConfig;

fn main() -> regkit::Result<()> {
    let sk = SinkhornConfig::default();
    println!("{:>8} {:>10} {:>12} {:>8} {:>10}", "outliers", "hard (°)", "weighted (°)", "pairs", "correct");
    for outlier_fraction in [0.0, 0.1, 0.3, 0.5] {
        let cfg = MatchingProblemConfig { outlier_fraction, ..MatchingProblemConfig::default() };
        let (mut hard, mut weighted, mut pairs, mut correct) = (0.0, 0.0, 0, 0);
        let trials = 50;
        for seed in 0..trials {
            let t = selection_trial(&simulate_matching_problem(&cfg, seed)?, &sk, 0.05);
            hard += t.hard_deg;
            weighted += t.weighted_deg;
            pairs += t.hard_pairs;
            correct += t.hard_correct;
        }
        let n = trials as f64;
        println!(
            "{:>7.0}% {:>10.4} {:>12.4} {:>8.1} {:>10.1}",
            outlier_fraction * 100.0,
            hard / n,
            weighted / n,
            pairs as f64 / n,
            correct as f64 / n
        );
    }
    Ok(())
}
