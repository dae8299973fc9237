//! Pairwise length-consistency pruning of putative correspondences.
//!
//! A rigid motion preserves distances, so two correct pairs `(a, a')` and
//! `(b, b')` satisfy `‖x_a − x_b‖ ≈ ‖y_a' − y_b'‖`. Wrong pairs rarely agree
//! with many others. The leading eigenvector of the compatibility matrix
//! ranks pairs; a greedy pass keeps those compatible with every pair kept so
//! far and sharing no endpoint with one, so the result is one-to-one even
//! when the input offers several candidates per point.

use crate::cloud::PointCloud;
use crate::matching::CorrespondenceSet;

const POWER_ITERS: usize = 60;

/// The largest mutually length-consistent subset found, in ranking order.
/// Returns the input unchanged when fewer than three pairs would survive.
pub fn consistent_subset(
    corr: &CorrespondenceSet,
    source: &PointCloud,
    target: &PointCloud,
    tolerance: f64,
) -> CorrespondenceSet {
    let n = corr.len();
    if n < 3 || !(tolerance > 0.0) {
        return corr.clone();
    }
    let xs: Vec<_> = corr.pairs.iter().map(|c| source.points[c.source]).collect();
    let ys: Vec<_> = corr.pairs.iter().map(|c| target.points[c.target]).collect();
    let t2 = tolerance * tolerance;
    let mut compat = vec![0.0; n * n];
    for a in 0..n {
        for b in a + 1..n {
            let d = (xs[a] - xs[b]).norm() - (ys[a] - ys[b]).norm();
            if d * d < t2 {
                let w = 1.0 - d * d / t2;
                compat[a * n + b] = w;
                compat[b * n + a] = w;
            }
        }
    }

    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut next = vec![0.0; n];
    for _ in 0..POWER_ITERS {
        for (a, out) in next.iter_mut().enumerate() {
            *out = compat[a * n..(a + 1) * n].iter().zip(&v).map(|(m, x)| m * x).sum();
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return corr.clone();
        }
        for (x, y) in v.iter_mut().zip(&next) {
            *x = y / norm;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for a in order {
        let (sa, ta) = (corr.pairs[a].source, corr.pairs[a].target);
        let free = |b: usize| corr.pairs[b].source != sa && corr.pairs[b].target != ta;
        if kept.iter().all(|&b| compat[a * n + b] > 0.0 && free(b)) {
            kept.push(a);
        }
    }
    if kept.len() < 3 {
        return corr.clone();
    }
    let mut out = CorrespondenceSet::default();
    for a in kept {
        let c = corr.pairs[a];
        out.push(c.source, c.target, c.weight);
    }
    out
}
