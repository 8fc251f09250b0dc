//! Linear prediction analysis: autocorrelation, Levinson-Durbin, LPC to
//! cepstrum conversion and inverse filtering.
//!
//! Predictor convention: x̂[n] = Σ_{k=1..p} a[k] x[n-k], so the analysis
//! filter is A(z) = 1 - Σ a[k] z^-k. `a[0]` in the slices below is a[1].

use crate::error::Result;
use crate::frontend::{frame_signal, hamming_window, preemphasize, AnalysisFrame, FrontendConfig};

/// Result of a Levinson-Durbin fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LpcModel {
    /// Predictor coefficients a[1..=p].
    pub a: Vec<f64>,
    /// Reflection coefficients k[1..=p].
    pub reflection: Vec<f64>,
    /// Final prediction error energy E_p.
    pub error: f64,
    /// Silent frame (r[0] = 0); coefficients are all zero.
    pub degenerate: bool,
    /// r[0] was inflated by 1e-9 r[0] to keep the recursion positive.
    pub regularized: bool,
}

impl LpcModel {
    pub fn order(&self) -> usize {
        self.a.len()
    }
}

/// r[k] = Σ s[n] s[n+k] for k in 0..=p.
pub fn autocorrelation(s: &[f64], p: usize) -> Vec<f64> {
    (0..=p)
        .map(|k| {
            if k >= s.len() {
                0.0
            } else {
                s.iter().zip(&s[k..]).map(|(a, b)| a * b).sum()
            }
        })
        .collect()
}

/// Autocorrelation of the Hamming-windowed frame.
pub fn autocorrelate(frame: &AnalysisFrame, p: usize) -> Vec<f64> {
    autocorrelation(&hamming_window(frame.samples()), p)
}

fn levinson_recursion(r: &[f64], r0: f64) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let p = r.len() - 1;
    let mut a = vec![0.0; p];
    let mut reflection = vec![0.0; p];
    let mut prev = vec![0.0; p];
    let mut err = r0;
    for i in 0..p {
        let acc = r[i + 1] - (0..i).map(|j| a[j] * r[i - j]).sum::<f64>();
        let k = acc / err;
        reflection[i] = k;
        prev[..i].copy_from_slice(&a[..i]);
        a[i] = k;
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        err *= 1.0 - k * k;
        if !(err > 0.0) || k.abs() >= 1.0 {
            return None;
        }
    }
    Some((a, reflection, err))
}

/// Levinson-Durbin solution of the order-p normal equations for r[0..=p].
///
/// A zero-energy input returns the all-zero degenerate model. If the
/// recursion hits a non-positive error numerically, it is rerun once with
/// r[0] inflated by 1e-9 r[0].
pub fn levinson(r: &[f64]) -> LpcModel {
    let p = r.len().saturating_sub(1);
    if r.is_empty() || !(r[0] > 0.0) {
        return LpcModel {
            a: vec![0.0; p],
            reflection: vec![0.0; p],
            error: 0.0,
            degenerate: true,
            regularized: false,
        };
    }
    if let Some((a, reflection, error)) = levinson_recursion(r, r[0]) {
        return LpcModel {
            a,
            reflection,
            error,
            degenerate: false,
            regularized: false,
        };
    }
    match levinson_recursion(r, r[0] * (1.0 + 1e-9)) {
        Some((a, reflection, error)) => LpcModel {
            a,
            reflection,
            error,
            degenerate: false,
            regularized: true,
        },
        None => LpcModel {
            a: vec![0.0; p],
            reflection: vec![0.0; p],
            error: r[0],
            degenerate: true,
            regularized: true,
        },
    }
}

/// Cepstrum c[1..=q] of 1/A(z) by the standard recursion (no c[0]).
pub fn lpc_to_cepstrum(a: &[f64], q: usize) -> Vec<f64> {
    let p = a.len();
    let coef = |m: usize| if m >= 1 && m <= p { a[m - 1] } else { 0.0 };
    let mut c = vec![0.0; q + 1];
    for n in 1..=q {
        let lo = if n > p { n - p } else { 1 };
        let sum: f64 = (lo..n)
            .map(|k| (k as f64 / n as f64) * c[k] * coef(n - k))
            .sum();
        c[n] = coef(n) + sum;
    }
    c.remove(0);
    c
}

/// How linear residuals are computed from a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualMode {
    /// Raw frame samples with their true history.
    #[default]
    Unwindowed,
    /// Hamming-windowed frame with zero history.
    Windowed,
}

impl ResidualMode {
    pub fn from_config(cfg: &FrontendConfig) -> Self {
        if cfg.window_before_residual {
            ResidualMode::Windowed
        } else {
            ResidualMode::Unwindowed
        }
    }
}

/// e[n] = s[n] - Σ a[k] s[n-k] over the frame, reading s[n-k] from the
/// history when n-k < 0.
///
/// Panics if the frame history is shorter than `a.len()`.
pub fn inverse_filter_residual(frame: &AnalysisFrame, a: &[f64]) -> Vec<f64> {
    assert!(
        frame.history().len() >= a.len(),
        "frame history ({}) shorter than predictor order ({})",
        frame.history().len(),
        a.len()
    );
    let mut out = Vec::with_capacity(frame.len());
    residual_into(frame, a, &mut out);
    out
}

fn residual_into(frame: &AnalysisFrame, a: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let s = frame.samples();
    let h = frame.history();
    for n in 0..s.len() {
        let mut pred = 0.0;
        for (k, ak) in a.iter().enumerate() {
            let lag = k + 1;
            let v = if lag <= n { s[n - lag] } else { h[h.len() + n - lag] };
            pred += ak * v;
        }
        out.push(s[n] - pred);
    }
}

/// Residual under `mode`, written into `out` to avoid reallocations.
pub fn residual_with_mode(frame: &AnalysisFrame, a: &[f64], mode: ResidualMode, out: &mut Vec<f64>) {
    match mode {
        ResidualMode::Unwindowed => residual_into(frame, a, out),
        ResidualMode::Windowed => {
            let w = hamming_window(frame.samples());
            out.clear();
            for n in 0..w.len() {
                let pred: f64 = a
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| k + 1 <= n)
                    .map(|(k, ak)| ak * w[n - k - 1])
                    .sum();
                out.push(w[n] - pred);
            }
        }
    }
}

/// 10 log10(Σs² / Σe²); infinite when the residual vanishes.
pub fn prediction_gain_db(signal: &[f64], residual: &[f64]) -> f64 {
    let es: f64 = signal.iter().map(|v| v * v).sum();
    let ee: f64 = residual.iter().map(|v| v * v).sum();
    10.0 * (es / ee).log10()
}

/// Per-frame analysis products used by every scoring path.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub frame: AnalysisFrame,
    pub lpc: LpcModel,
    pub lpcc: Vec<f64>,
}

impl FrameFeatures {
    pub fn analyze(frame: AnalysisFrame, cfg: &FrontendConfig) -> Self {
        let lpc = levinson(&autocorrelate(&frame, cfg.lpc_order));
        let lpcc = lpc_to_cepstrum(&lpc.a, cfg.cepstral_order);
        Self { frame, lpc, lpcc }
    }
}

/// Pre-emphasis, framing and per-frame LPC/LPCC for one utterance.
pub fn extract_features(samples: &[f64], cfg: &FrontendConfig) -> Result<Vec<FrameFeatures>> {
    let y = preemphasize(samples, cfg.preemphasis_mu);
    Ok(frame_signal(&y, cfg)?
        .into_iter()
        .map(|f| FrameFeatures::analyze(f, cfg))
        .collect())
}
