use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Length of the anti-alias FIR. Odd so the filter has an integer group delay.
pub const ANTIALIAS_TAPS: usize = 127;

/// Cutoff in cycles per input sample: 4 kHz at a 16 kHz input rate.
const CUTOFF: f64 = 0.25;

/// Blackman-windowed sinc low-pass, normalized to unit DC gain.
///
/// Transition band is about 5.5 / 127 of the input rate (~700 Hz), so the
/// stop band (> 70 dB down) starts near 4.4 kHz.
pub fn antialias_taps() -> &'static [f64] {
    static TAPS: OnceLock<Vec<f64>> = OnceLock::new();
    TAPS.get_or_init(|| {
        let m = (ANTIALIAS_TAPS - 1) as f64;
        let mut taps: Vec<f64> = (0..ANTIALIAS_TAPS)
            .map(|n| {
                let t = n as f64 - m / 2.0;
                let sinc = if t == 0.0 {
                    2.0 * CUTOFF
                } else {
                    (2.0 * PI * CUTOFF * t).sin() / (PI * t)
                };
                let w = 0.42 - 0.5 * (2.0 * PI * n as f64 / m).cos()
                    + 0.08 * (4.0 * PI * n as f64 / m).cos();
                sinc * w
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        taps
    })
}

/// Low-pass filters a 16 kHz sequence and keeps every second sample.
///
/// The filter is centred on each kept sample (zero-phase), with zeros
/// assumed outside the input. Output length is `floor(len / 2)`.
pub fn resample_2to1(x: &[f64]) -> Result<Vec<f64>> {
    let taps = antialias_taps();
    if x.len() < taps.len() {
        return Err(Error::TooShort {
            needed: taps.len(),
            got: x.len(),
        });
    }
    let half = (taps.len() / 2) as isize;
    let out = (0..x.len() / 2)
        .map(|m| {
            let centre = 2 * m as isize;
            taps.iter()
                .enumerate()
                .filter_map(|(k, h)| {
                    let idx = centre + half - k as isize;
                    (0..x.len() as isize)
                        .contains(&idx)
                        .then(|| h * x[idx as usize])
                })
                .sum()
        })
        .collect();
    Ok(out)
}
