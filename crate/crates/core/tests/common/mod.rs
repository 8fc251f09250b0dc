//! Reference implementations shared by the integration and acceptance tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Solves the order-p normal equations R a = r[1..] by dense LU.
pub fn toeplitz_solve(r: &[f64]) -> Vec<f64> {
    let p = r.len() - 1;
    let m = DMatrix::from_fn(p, p, |i, j| r[i.abs_diff(j)]);
    let rhs = DVector::from_iterator(p, r[1..].iter().copied());
    m.lu().solve(&rhs).expect("nonsingular Toeplitz system").iter().copied().collect()
}

/// Cepstrum c[1..=q] of 1/A(z) from the log magnitude spectrum.
///
/// For a minimum-phase all-pole model the complex cepstrum at n >= 1 is
/// twice the real cepstrum, which is the inverse DFT of log|1/A|.
pub fn fft_cepstrum(a: &[f64], q: usize, n_fft: usize) -> Vec<f64> {
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    buf[0].re = 1.0;
    for (k, ak) in a.iter().enumerate() {
        buf[k + 1].re = -ak;
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n_fft).process(&mut buf);
    for v in buf.iter_mut() {
        *v = Complex::new(-v.norm().ln(), 0.0);
    }
    planner.plan_fft_inverse(n_fft).process(&mut buf);
    (1..=q).map(|n| 2.0 * buf[n].re / n_fft as f64).collect()
}

/// Predictor coefficients from reflection coefficients (step-up recursion);
/// |k| < 1 for every k gives a stable model.
pub fn step_up(k: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = Vec::with_capacity(k.len());
    for (i, &ki) in k.iter().enumerate() {
        let prev = a.clone();
        for j in 0..i {
            a[j] = prev[j] - ki * prev[i - 1 - j];
        }
        a.push(ki);
    }
    a
}

/// Order-p model (p even) from random conjugate pole pairs with radius
/// at most `max_r`.
pub fn random_stable_lpc(rng: &mut impl Rng, p: usize, max_r: f64) -> Vec<f64> {
    let mut poly = vec![1.0];
    for _ in 0..p / 2 {
        let r = rng.gen_range(0.0..max_r);
        let t: f64 = rng.gen_range(0.0..PI);
        let section = [1.0, -2.0 * r * t.cos(), r * r];
        let mut next = vec![0.0; poly.len() + 2];
        for (i, c) in poly.iter().enumerate() {
            for (j, s) in section.iter().enumerate() {
                next[i + j] += c * s;
            }
        }
        poly = next;
    }
    poly[1..].iter().map(|d| -d).collect()
}

/// White noise coloured by a random stable all-pole filter.
pub fn random_frame(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let order = 2 * rng.gen_range(1..=3);
    let a = random_stable_lpc(rng, order, 0.9);
    let gain: f64 = rng.gen_range(0.01..10.0);
    let mut y = vec![0.0; len + 50];
    for n in 0..y.len() {
        let mut v: f64 = rng.sample::<f64, _>(StandardNormal) * gain;
        for (k, ak) in a.iter().enumerate() {
            if n > k {
                v += ak * y[n - 1 - k];
            }
        }
        y[n] = v;
    }
    y.split_off(50)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
