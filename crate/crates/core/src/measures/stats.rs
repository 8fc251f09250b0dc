//! Pearson correlation between measures and intra/inter-speaker histograms.

use serde::{Deserialize, Serialize};

pub const HISTOGRAM_BINS: usize = 50;

/// Pearson correlation between every pair of columns. `rows[i][j]` is the
/// value of measure j for sample i. Entries touching a zero-variance column
/// are `None`; fewer than two rows gives all `None`.
pub fn correlation_matrix(rows: &[Vec<f64>]) -> Vec<Vec<Option<f64>>> {
    let m = rows.first().map_or(0, Vec::len);
    let n = rows.len();
    if n < 2 {
        return vec![vec![None; m]; m];
    }
    let means: Vec<f64> = (0..m)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let centred: Vec<Vec<f64>> = (0..m)
        .map(|j| rows.iter().map(|r| r[j] - means[j]).collect())
        .collect();
    let norms: Vec<f64> = centred
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut out = vec![vec![None; m]; m];
    for i in 0..m {
        for j in i..m {
            if norms[i] == 0.0 || norms[j] == 0.0 {
                continue;
            }
            let rho = if i == j {
                1.0
            } else {
                let dot: f64 = centred[i].iter().zip(&centred[j]).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            out[i][j] = Some(rho);
            out[j][i] = Some(rho);
        }
    }
    out
}

/// Mean distortion of one test sentence against one speaker's model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub truth: String,
    pub speaker: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub intra: usize,
    pub inter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histograms {
    pub intra: Vec<f64>,
    pub inter: Vec<f64>,
    pub bins: Vec<HistogramBin>,
}

/// Splits scores into same-speaker and different-speaker sets and bins both
/// over the pooled range with equal-width bins.
pub fn distortion_histograms(scores: &[LabeledScore], n_bins: usize) -> Histograms {
    let (intra, inter): (Vec<&LabeledScore>, Vec<&LabeledScore>) =
        scores.iter().partition(|s| s.truth == s.speaker);
    let intra: Vec<f64> = intra.iter().map(|s| s.value).collect();
    let inter: Vec<f64> = inter.iter().map(|s| s.value).collect();
    let n_bins = n_bins.max(1);
    let lo = scores.iter().map(|s| s.value).fold(f64::INFINITY, f64::min);
    let hi = scores.iter().map(|s| s.value).fold(f64::NEG_INFINITY, f64::max);
    if scores.is_empty() {
        return Histograms { intra, inter, bins: Vec::new() };
    }
    let width = if hi > lo { (hi - lo) / n_bins as f64 } else { 1.0 };
    let mut bins: Vec<HistogramBin> = (0..n_bins)
        .map(|b| HistogramBin {
            lo: lo + b as f64 * width,
            hi: if b + 1 == n_bins && hi > lo { hi } else { lo + (b + 1) as f64 * width },
            intra: 0,
            inter: 0,
        })
        .collect();
    let slot = |v: f64| (((v - lo) / width) as usize).min(n_bins - 1);
    for &v in &intra {
        bins[slot(v)].intra += 1;
    }
    for &v in &inter {
        bins[slot(v)].inter += 1;
    }
    Histograms { intra, inter, bins }
}
