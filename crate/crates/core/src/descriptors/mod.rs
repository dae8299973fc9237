//! Handcrafted per-point descriptors and the similarity score map built from
//! them.

mod fpfh;
mod normals;

pub use fpfh::{fpfh, pair_features, DescriptorSet, FPFH_BINS, FPFH_DIM};
pub use normals::{estimate_normals, NormalEstimate, Orientation};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// `S[i][j]` is the similarity between source point `i` and target point `j`.
pub type ScoreMap = DenseMatrix;

/// Cosine similarity between every source/target descriptor pair. Zero
/// descriptors score 0 against everything.
pub fn score_map(fx: &DescriptorSet, fy: &DescriptorSet) -> Result<ScoreMap> {
    if fx.dim() != fy.dim() {
        return Err(Error::DimensionMismatch(format!(
            "descriptor dimensions {} and {}",
            fx.dim(),
            fy.dim()
        )));
    }
    let ux = fx.unit_rows();
    let uy = fy.unit_rows();
    let d = fx.dim();
    Ok(DenseMatrix::from_fn(fx.len(), fy.len(), |i, j| {
        let a = &ux[i * d..(i + 1) * d];
        let b = &uy[j * d..(j + 1) * d];
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }))
}

/// Z-scores every descriptor dimension with statistics pooled over both
/// sets. Raw FPFH histograms share a large common component, which makes
/// their cosine similarities bunch up near 1; removing it spreads the scores.
/// Isolated (zero) descriptors stay zero.
pub fn standardize_jointly(fx: &DescriptorSet, fy: &DescriptorSet) -> Result<(DescriptorSet, DescriptorSet)> {
    if fx.dim() != fy.dim() {
        return Err(Error::DimensionMismatch(format!(
            "descriptor dimensions {} and {}",
            fx.dim(),
            fy.dim()
        )));
    }
    let d = fx.dim();
    let live = |s: &DescriptorSet| (0..s.len()).filter(|&i| !s.isolated[i]).collect::<Vec<_>>();
    let (lx, ly) = (live(fx), live(fy));
    let n = (lx.len() + ly.len()) as f64;
    let mut mean = vec![0.0; d];
    let mut var = vec![0.0; d];
    if n > 0.0 {
        for (s, idx) in [(fx, &lx), (fy, &ly)] {
            for &i in idx {
                for (m, v) in mean.iter_mut().zip(s.row(i)) {
                    *m += v / n;
                }
            }
        }
        for (s, idx) in [(fx, &lx), (fy, &ly)] {
            for &i in idx {
                for k in 0..d {
                    var[k] += (s.row(i)[k] - mean[k]).powi(2) / n;
                }
            }
        }
    }
    let apply = |s: &DescriptorSet| {
        let mut values = vec![0.0; s.len() * d];
        for i in 0..s.len() {
            if s.isolated[i] {
                continue;
            }
            for k in 0..d {
                let sd = var[k].sqrt();
                values[i * d + k] = if sd > 1e-12 { (s.row(i)[k] - mean[k]) / sd } else { 0.0 };
            }
        }
        let mut out = DescriptorSet::new(d, values);
        out.isolated = s.isolated.clone();
        out
    };
    Ok((apply(fx), apply(fy)))
}
