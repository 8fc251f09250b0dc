//! The six frame distance measures, sentence accumulation and score fusion.

mod stats;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lpc::{residual_with_mode, FrameFeatures, ResidualMode};
use crate::vq::{Codeword, LinearCodebook};

pub use stats::{
    correlation_matrix, distortion_histograms, HistogramBin, Histograms, LabeledScore,
    HISTOGRAM_BINS,
};

/// Frame-level distance between a test frame and a codeword.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum MeasureKind {
    /// Mean squared LPCC difference.
    #[default]
    M1,
    /// Mean absolute LPCC difference.
    M2,
    /// Mean square of the residual.
    M3,
    /// Mean absolute residual.
    M4,
    /// Maximum absolute residual.
    M5,
    /// Variance of the residual.
    M6,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 6] = [
        MeasureKind::M1,
        MeasureKind::M2,
        MeasureKind::M3,
        MeasureKind::M4,
        MeasureKind::M5,
        MeasureKind::M6,
    ];

    pub fn is_coefficient(self) -> bool {
        matches!(self, MeasureKind::M1 | MeasureKind::M2)
    }

    /// 1-based measure number.
    pub fn number(self) -> usize {
        self as usize + 1
    }

    pub fn from_number(n: usize) -> Option<Self> {
        Self::ALL.get(n.wrapping_sub(1)).copied()
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M{}", self.number())
    }
}

/// M1 or M2 between two coefficient vectors. Residual kinds fall back to M1.
#[inline]
pub fn coefficient_distance(kind: MeasureKind, c: &[f64], centroid: &[f64]) -> f64 {
    let n = c.len().max(1) as f64;
    match kind {
        MeasureKind::M2 => c.iter().zip(centroid).map(|(a, b)| (a - b).abs()).sum::<f64>() / n,
        _ => {
            c.iter()
                .zip(centroid)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n
        }
    }
}

/// M3-M6 over a residual sequence. Coefficient kinds return M3.
pub fn residual_measure(kind: MeasureKind, e: &[f64]) -> f64 {
    let n = e.len().max(1) as f64;
    match kind {
        MeasureKind::M4 => e.iter().map(|v| v.abs()).sum::<f64>() / n,
        MeasureKind::M5 => e.iter().fold(0.0, |m, v| m.max(v.abs())),
        MeasureKind::M6 => {
            let mean = e.iter().sum::<f64>() / n;
            e.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
        }
        _ => e.iter().map(|v| v * v).sum::<f64>() / n,
    }
}

/// Distance between one analysed frame and one codeword. Residual measures
/// inverse-filter the frame with the codeword's mean LPC vector.
pub fn frame_distance(
    features: &FrameFeatures,
    cw: &Codeword,
    kind: MeasureKind,
    mode: ResidualMode,
) -> f64 {
    if kind.is_coefficient() {
        coefficient_distance(kind, &features.lpcc, &cw.lpcc)
    } else {
        let mut e = Vec::with_capacity(features.frame.len());
        residual_with_mode(&features.frame, &cw.lpc, mode, &mut e);
        residual_measure(kind, &e)
    }
}

/// Minimum frame distance over all codewords.
pub fn min_frame_distance(
    features: &FrameFeatures,
    cb: &LinearCodebook,
    kind: MeasureKind,
    mode: ResidualMode,
) -> f64 {
    if kind.is_coefficient() {
        cb.codewords
            .iter()
            .map(|cw| coefficient_distance(kind, &features.lpcc, &cw.lpcc))
            .fold(f64::INFINITY, f64::min)
    } else {
        let mut e = Vec::with_capacity(features.frame.len());
        cb.codewords
            .iter()
            .map(|cw| {
                residual_with_mode(&features.frame, &cw.lpc, mode, &mut e);
                residual_measure(kind, &e)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Sentence totals of all six measures, in M1..M6 order. Each residual is
/// computed once per (frame, codeword) and shared by M3-M6.
pub fn all_measure_totals(
    frames: &[FrameFeatures],
    cb: &LinearCodebook,
    mode: ResidualMode,
) -> [f64; 6] {
    let mut totals = [0.0; 6];
    let mut e = Vec::new();
    for f in frames {
        let mut best = [f64::INFINITY; 6];
        for cw in &cb.codewords {
            best[0] = best[0].min(coefficient_distance(MeasureKind::M1, &f.lpcc, &cw.lpcc));
            best[1] = best[1].min(coefficient_distance(MeasureKind::M2, &f.lpcc, &cw.lpcc));
            residual_with_mode(&f.frame, &cw.lpc, mode, &mut e);
            for (k, kind) in MeasureKind::ALL[2..].iter().enumerate() {
                best[k + 2] = best[k + 2].min(residual_measure(*kind, &e));
            }
        }
        for (t, b) in totals.iter_mut().zip(best) {
            *t += b;
        }
    }
    totals
}

/// Accumulated distortion of one sentence against one speaker's codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub speaker_id: String,
    pub total: f64,
    pub n_frames: usize,
}

impl SentenceScore {
    pub fn mean(&self) -> Option<f64> {
        (self.n_frames > 0).then(|| self.total / self.n_frames as f64)
    }
}

/// Sums, over frames, the minimum distance to any codeword.
pub fn score_sentence(
    speaker_id: &str,
    frames: &[FrameFeatures],
    cb: &LinearCodebook,
    kind: MeasureKind,
    mode: ResidualMode,
) -> Result<SentenceScore> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("cannot score an empty frame list".into()));
    }
    let total = frames
        .iter()
        .map(|f| min_frame_distance(f, cb, kind, mode))
        .sum();
    Ok(SentenceScore {
        speaker_id: speaker_id.to_owned(),
        total,
        n_frames: frames.len(),
    })
}

/// coefficient total + alpha · residual total.
pub fn combine_scores(coeff_total: f64, residual_total: f64, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "combination weight must be >= 0, got {alpha}"
        )));
    }
    Ok(coeff_total + alpha * residual_total)
}

/// 13 weights log-spaced over 1e-3 ..= 1e3.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..13).map(|i| 10f64.powf(-3.0 + 0.5 * i as f64)).collect()
}

/// One candidate speaker's pair of scores for a held-out sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScores {
    pub speaker: String,
    pub coeff: f64,
    pub residual: f64,
}

/// A held-out sentence with its true speaker and candidate scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaTrial {
    pub truth: String,
    pub candidates: Vec<CandidateScores>,
}

/// Argmin of combined scores with ties broken by lexicographic speaker id.
pub fn pick_combined(candidates: &[CandidateScores], alpha: f64) -> Option<&str> {
    candidates
        .iter()
        .map(|c| (c.coeff + alpha * c.residual, c.speaker.as_str()))
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
        .map(|(_, s)| s)
}

/// Number of trials misidentified at weight `alpha`.
pub fn trial_errors(trials: &[AlphaTrial], alpha: f64) -> usize {
    trials
        .iter()
        .filter(|t| pick_combined(&t.candidates, alpha) != Some(t.truth.as_str()))
        .count()
}

/// Grid weight with the fewest held-out errors; ties go to the smaller weight.
pub fn grid_search_alpha(trials: &[AlphaTrial], grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("alpha grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|a| !(**a >= 0.0)) {
        return Err(Error::InvalidArgument(format!("negative alpha {bad} in grid")));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = (usize::MAX, sorted[0]);
    for &alpha in &sorted {
        let errs = trial_errors(trials, alpha);
        if errs < best.0 {
            best = (errs, alpha);
        }
    }
    Ok(best.1)
}
