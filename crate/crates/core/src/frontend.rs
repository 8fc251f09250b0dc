//! Pre-emphasis, framing and the Hamming window.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Analysis front-end settings. Defaults give 30 ms frames at 8 kHz with
/// 2/3 overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontendConfig {
    pub preemphasis_mu: f64,
    pub frame_len: usize,
    pub hop: usize,
    pub lpc_order: usize,
    pub cepstral_order: usize,
    /// Compute linear residuals on the windowed frame (zero history)
    /// instead of the raw frame with its true history.
    pub window_before_residual: bool,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            preemphasis_mu: 0.95,
            frame_len: 240,
            hop: 80,
            lpc_order: 10,
            cepstral_order: 12,
            window_before_residual: false,
        }
    }
}

impl FrontendConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.preemphasis_mu) {
            return Err(Error::InvalidConfig(format!(
                "preemphasis_mu must be in [0, 1), got {}",
                self.preemphasis_mu
            )));
        }
        if self.frame_len < 2 || self.hop == 0 {
            return Err(Error::InvalidConfig(
                "frame_len must be >= 2 and hop >= 1".into(),
            ));
        }
        if self.lpc_order == 0 || self.lpc_order > self.frame_len {
            return Err(Error::InvalidConfig(format!(
                "lpc_order must be in [1, frame_len], got {}",
                self.lpc_order
            )));
        }
        if self.cepstral_order == 0 {
            return Err(Error::InvalidConfig("cepstral_order must be >= 1".into()));
        }
        Ok(())
    }
}

/// One analysis frame: unwindowed pre-emphasized samples plus the samples
/// that precede it in the utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisFrame {
    samples: Vec<f64>,
    /// Oldest first; `history[len - 1]` is the sample just before `samples[0]`.
    history: Vec<f64>,
    index: usize,
    energy: f64,
}

impl AnalysisFrame {
    pub fn new(samples: Vec<f64>, history: Vec<f64>, index: usize) -> Self {
        let energy = samples.iter().map(|s| s * s).sum();
        Self {
            samples,
            history,
            index,
            energy,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// Sum of squared (unwindowed) samples.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample at position `n` relative to the frame start; negative `n`
    /// reads from the history.
    ///
    /// Panics if `n` reaches further back than the stored history.
    #[inline]
    pub fn at(&self, n: isize) -> f64 {
        if n >= 0 {
            self.samples[n as usize]
        } else {
            self.history[(self.history.len() as isize + n) as usize]
        }
    }
}

/// y[n] = x[n] - mu x[n-1], with x[-1] = 0.
pub fn preemphasize(x: &[f64], mu: f64) -> Vec<f64> {
    let mut prev = 0.0;
    x.iter()
        .map(|&v| {
            let y = v - mu * prev;
            prev = v;
            y
        })
        .collect()
}

/// Inverse of [`preemphasize`].
pub fn deemphasize(y: &[f64], mu: f64) -> Vec<f64> {
    let mut prev = 0.0;
    y.iter()
        .map(|&v| {
            prev = v + mu * prev;
            prev
        })
        .collect()
}

/// Splits a pre-emphasized signal into overlapping frames starting at
/// 0, hop, 2 hop, ...; each frame carries `lpc_order` history samples.
pub fn frame_signal(y: &[f64], cfg: &FrontendConfig) -> Result<Vec<AnalysisFrame>> {
    if y.len() < cfg.frame_len {
        return Err(Error::TooShort {
            needed: cfg.frame_len,
            got: y.len(),
        });
    }
    let count = (y.len() - cfg.frame_len) / cfg.hop + 1;
    let p = cfg.lpc_order;
    Ok((0..count)
        .map(|i| {
            let start = i * cfg.hop;
            let history = (0..p)
                .map(|j| {
                    // oldest first: start - p + j
                    (start + j).checked_sub(p).map_or(0.0, |idx| y[idx])
                })
                .collect();
            AnalysisFrame::new(y[start..start + cfg.frame_len].to_vec(), history, i)
        })
        .collect())
}

/// Hamming window of length `n`: 0.54 - 0.46 cos(2 pi k / (n - 1)).
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|k| 0.54 - 0.46 * (2.0 * PI * k as f64 / denom).cos())
        .collect()
}

/// Multiplies `frame` by a Hamming window of the same length.
pub fn hamming_window(frame: &[f64]) -> Vec<f64> {
    frame
        .iter()
        .zip(hamming(frame.len()))
        .map(|(s, w)| s * w)
        .collect()
}
