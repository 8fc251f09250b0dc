//! Nonlinear predictive codebooks: one small MLP per cluster, trained with
//! Levenberg-Marquardt from several starts and refined by Lloyd-style
//! re-clustering on prediction error.

use nalgebra::{DMatrix, DMatrixView, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::AnalysisFrame;
use crate::lpc::FrameFeatures;
use crate::measures::MeasureKind;
use crate::seed::{derive_seed, rng_for};
use crate::vq::{quantize, LinearCodebook};

pub const INPUTS: usize = 10;
pub const HIDDEN1: usize = 4;
pub const HIDDEN2: usize = 2;

const W1: usize = 0;
const B1: usize = W1 + HIDDEN1 * INPUTS;
const W2: usize = B1 + HIDDEN1;
const B2: usize = W2 + HIDDEN2 * HIDDEN1;
const W3: usize = B2 + HIDDEN2;
const B3: usize = W3 + HIDDEN2;
/// Weights and biases of the 10-4-2-1 network.
pub const N_PARAMS: usize = B3 + 1;

/// 10-4-2-1 perceptron with tanh hidden units and a linear output.
///
/// Parameters are stored flat: W1 (row-major, 4x10), b1, W2 (2x4), b2, W3,
/// b3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "NetRecord", try_from = "NetRecord")]
pub struct MlpPredictor {
    params: [f64; N_PARAMS],
}

/// On-disk layout of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct NetRecord {
    pub W1: Vec<f64>,
    pub b1: Vec<f64>,
    pub W2: Vec<f64>,
    pub b2: Vec<f64>,
    pub W3: Vec<f64>,
    pub b3: Vec<f64>,
}

impl From<MlpPredictor> for NetRecord {
    fn from(net: MlpPredictor) -> Self {
        let p = &net.params;
        NetRecord {
            W1: p[W1..B1].to_vec(),
            b1: p[B1..W2].to_vec(),
            W2: p[W2..B2].to_vec(),
            b2: p[B2..W3].to_vec(),
            W3: p[W3..B3].to_vec(),
            b3: p[B3..].to_vec(),
        }
    }
}

impl TryFrom<NetRecord> for MlpPredictor {
    type Error = String;

    fn try_from(r: NetRecord) -> std::result::Result<Self, String> {
        let parts: [(&str, &Vec<f64>, usize); 6] = [
            ("W1", &r.W1, B1 - W1),
            ("b1", &r.b1, W2 - B1),
            ("W2", &r.W2, B2 - W2),
            ("b2", &r.b2, W3 - B2),
            ("W3", &r.W3, B3 - W3),
            ("b3", &r.b3, 1),
        ];
        let mut flat = Vec::with_capacity(N_PARAMS);
        for (name, v, len) in parts {
            if v.len() != len {
                return Err(format!("{name} has {} values, expected {len}", v.len()));
            }
            flat.extend_from_slice(v);
        }
        MlpPredictor::from_params(&flat).ok_or_else(|| "non-finite network parameter".to_string())
    }
}

impl Default for MlpPredictor {
    fn default() -> Self {
        Self::zero()
    }
}

impl MlpPredictor {
    pub fn zero() -> Self {
        Self {
            params: [0.0; N_PARAMS],
        }
    }

    /// `None` on wrong length or non-finite values.
    pub fn from_params(p: &[f64]) -> Option<Self> {
        if p.len() != N_PARAMS || !p.iter().all(|v| v.is_finite()) {
            return None;
        }
        let mut params = [0.0; N_PARAMS];
        params.copy_from_slice(p);
        Some(Self { params })
    }

    pub fn params(&self) -> &[f64; N_PARAMS] {
        &self.params
    }

    /// Uniform in [-0.5, 0.5] / sqrt(fan-in), biases included.
    pub fn random(rng: &mut impl Rng) -> Self {
        let mut params = [0.0; N_PARAMS];
        let scale = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        for (i, p) in params.iter_mut().enumerate() {
            let s = if i < W2 {
                scale(INPUTS)
            } else if i < W3 {
                scale(HIDDEN1)
            } else {
                scale(HIDDEN2)
            };
            *p = rng.gen_range(-0.5..=0.5) * s;
        }
        Self { params }
    }

    fn hidden(&self, x: &[f64; INPUTS]) -> ([f64; HIDDEN1], [f64; HIDDEN2]) {
        let p = &self.params;
        let mut h1 = [0.0; HIDDEN1];
        for (i, h) in h1.iter_mut().enumerate() {
            let row = &p[W1 + i * INPUTS..W1 + (i + 1) * INPUTS];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + p[B1 + i];
            *h = tanh(z);
        }
        let mut h2 = [0.0; HIDDEN2];
        for (k, h) in h2.iter_mut().enumerate() {
            let row = &p[W2 + k * HIDDEN1..W2 + (k + 1) * HIDDEN1];
            let z: f64 = row.iter().zip(&h1).map(|(w, v)| w * v).sum::<f64>() + p[B2 + k];
            *h = tanh(z);
        }
        (h1, h2)
    }

    /// Predicted sample from context `x = [s[n-1], ..., s[n-10]]`.
    pub fn forward(&self, x: &[f64; INPUTS]) -> f64 {
        let (_, h2) = self.hidden(x);
        let p = &self.params;
        p[W3] * h2[0] + p[W3 + 1] * h2[1] + p[B3]
    }

    /// Output and its gradient with respect to every parameter.
    pub fn forward_with_gradient(&self, x: &[f64; INPUTS], grad: &mut [f64]) -> f64 {
        let (h1, h2) = self.hidden(x);
        let p = &self.params;
        let y = p[W3] * h2[0] + p[W3 + 1] * h2[1] + p[B3];
        grad[B3] = 1.0;
        let mut d2 = [0.0; HIDDEN2];
        for k in 0..HIDDEN2 {
            grad[W3 + k] = h2[k];
            d2[k] = p[W3 + k] * (1.0 - h2[k] * h2[k]);
            grad[B2 + k] = d2[k];
            for i in 0..HIDDEN1 {
                grad[W2 + k * HIDDEN1 + i] = d2[k] * h1[i];
            }
        }
        for i in 0..HIDDEN1 {
            let back: f64 = (0..HIDDEN2).map(|k| d2[k] * p[W2 + k * HIDDEN1 + i]).sum();
            let d1 = back * (1.0 - h1[i] * h1[i]);
            grad[B1 + i] = d1;
            for j in 0..INPUTS {
                grad[W1 + i * INPUTS + j] = d1 * x[j];
            }
        }
        y
    }
}

/// tanh via a single exp; within a few ulp of `f64::tanh` and about twice
/// as fast, which matters in the frame scoring loops.
#[inline]
fn tanh(z: f64) -> f64 {
    1.0 - 2.0 / ((2.0 * z).exp() + 1.0)
}

/// Context vector [s[n-1], ..., s[n-10]] for position `n` of `frame`.
#[inline]
fn context(frame: &AnalysisFrame, n: usize) -> [f64; INPUTS] {
    let mut x = [0.0; INPUTS];
    for (k, v) in x.iter_mut().enumerate() {
        *v = frame.at(n as isize - 1 - k as isize);
    }
    x
}

/// Nonlinear prediction residual over the frame, written into `out`;
/// returns its mean absolute value.
///
/// Panics if the frame carries fewer than 10 history samples.
pub fn mlp_residual_into(frame: &AnalysisFrame, net: &MlpPredictor, out: &mut Vec<f64>) -> f64 {
    out.clear();
    let abs = for_each_residual(frame, net, |e| out.push(e));
    abs / frame.len().max(1) as f64
}

/// Runs `net` along the frame, handing each residual to `f`; returns the
/// sum of absolute residuals.
fn for_each_residual(frame: &AnalysisFrame, net: &MlpPredictor, mut f: impl FnMut(f64)) -> f64 {
    let hist = frame.history();
    assert!(
        hist.len() >= INPUTS,
        "frame history ({}) shorter than network context ({INPUTS})",
        hist.len()
    );
    let mut buf = Vec::with_capacity(INPUTS + frame.len());
    buf.extend_from_slice(&hist[hist.len() - INPUTS..]);
    buf.extend_from_slice(frame.samples());
    let mut abs = 0.0;
    for (n, &s) in frame.samples().iter().enumerate() {
        let mut x = [0.0; INPUTS];
        for (k, v) in x.iter_mut().enumerate() {
            *v = buf[n + INPUTS - 1 - k];
        }
        let e = s - net.forward(&x);
        abs += e.abs();
        f(e);
    }
    abs
}

/// Residual sequence and its mean absolute value.
pub fn mlp_residual(frame: &AnalysisFrame, net: &MlpPredictor) -> (Vec<f64>, f64) {
    let mut e = Vec::with_capacity(frame.len());
    let mad = mlp_residual_into(frame, net, &mut e);
    (e, mad)
}

/// Mean absolute residual only.
pub fn mlp_mad(frame: &AnalysisFrame, net: &MlpPredictor) -> f64 {
    for_each_residual(frame, net, |_| {}) / frame.len().max(1) as f64
}

/// (context, next sample) pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainSet {
    pub inputs: Vec<[f64; INPUTS]>,
    pub targets: Vec<f64>,
}

impl TrainSet {
    /// One pair per frame sample, with history supplying the early contexts.
    pub fn from_frames<'a>(frames: impl IntoIterator<Item = &'a AnalysisFrame>) -> Result<Self> {
        let mut set = TrainSet::default();
        for f in frames {
            if f.history().len() < INPUTS {
                return Err(Error::InvalidArgument(format!(
                    "neural training needs {INPUTS} history samples per frame, got {}",
                    f.history().len()
                )));
            }
            for n in 0..f.len() {
                set.inputs.push(context(f, n));
                set.targets.push(f.samples()[n]);
            }
        }
        Ok(set)
    }

    /// Pairs from a plain sequence: target x[n] for n >= 10.
    pub fn from_series(x: &[f64]) -> Self {
        let mut set = TrainSet::default();
        for n in INPUTS..x.len() {
            let mut c = [0.0; INPUTS];
            for (k, v) in c.iter_mut().enumerate() {
                *v = x[n - 1 - k];
            }
            set.inputs.push(c);
            set.targets.push(x[n]);
        }
        set
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn mse(&self, net: &MlpPredictor) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let sse: f64 = self
            .inputs
            .iter()
            .zip(&self.targets)
            .map(|(x, t)| {
                let e = t - net.forward(x);
                e * e
            })
            .sum();
        sse / self.len() as f64
    }
}

/// Training schedule for the per-cluster networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuralConfig {
    /// LM steps per training run.
    pub epochs: usize,
    /// Random initializations per cluster; the previous net is an extra start.
    pub random_starts: usize,
    /// Lloyd refinement passes after the initial linear clustering.
    pub iterations: usize,
    pub lambda_init: f64,
    pub lambda_factor: f64,
    pub lambda_max: f64,
    pub max_retries: usize,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        Self {
            epochs: 8,
            random_starts: 4,
            iterations: 0,
            lambda_init: 1e-3,
            lambda_factor: 10.0,
            lambda_max: 1e10,
            max_retries: 10,
        }
    }
}

impl NeuralConfig {
    pub fn validate(&self) -> Result<()> {
        if self.random_starts == 0 {
            return Err(Error::InvalidConfig("random_starts must be >= 1".into()));
        }
        if !(self.lambda_init > 0.0) || !(self.lambda_factor > 1.0) || !(self.lambda_max >= self.lambda_init) {
            return Err(Error::InvalidConfig(
                "LM damping needs lambda_init > 0, factor > 1 and max >= init".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of one LM run.
#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub net: MlpPredictor,
    /// Training MSE at the start and after each accepted step.
    pub mse_trace: Vec<f64>,
    /// Damping reached its ceiling without an acceptable step.
    pub stalled: bool,
}

impl LmOutcome {
    pub fn final_mse(&self) -> f64 {
        *self.mse_trace.last().expect("trace holds the initial MSE")
    }
}

fn normal_equations(net: &MlpPredictor, data: &TrainSet) -> (DMatrix<f64>, DVector<f64>) {
    // column i of jt is the gradient for pair i
    let n = data.len();
    let mut jt = DMatrix::<f64>::zeros(N_PARAMS, n);
    let mut r = DVector::<f64>::zeros(n);
    for (i, (x, t)) in data.inputs.iter().zip(&data.targets).enumerate() {
        let col = &mut jt.as_mut_slice()[i * N_PARAMS..(i + 1) * N_PARAMS];
        let y = net.forward_with_gradient(x, col);
        r[i] = t - y;
    }
    // strided view of jt as J, so the product needs no transposed copy
    let j = DMatrixView::from_slice_with_strides_generic(jt.as_slice(), Dyn(n), Dyn(N_PARAMS), Dyn(N_PARAMS), Dyn(1));
    let jtj = &jt * j;
    let jtr = &jt * r;
    (jtj, jtr)
}

/// Full-batch Levenberg-Marquardt. Each epoch solves
/// (JᵀJ + λI) δ = Jᵀr and keeps the step only if the MSE drops.
pub fn lm_train(net: &MlpPredictor, data: &TrainSet, epochs: usize, cfg: &NeuralConfig) -> LmOutcome {
    let mut net = net.clone();
    let mut mse = data.mse(&net);
    let mut trace = vec![mse];
    if data.is_empty() {
        return LmOutcome { net, mse_trace: trace, stalled: false };
    }
    let mut lambda = cfg.lambda_init;
    for _ in 0..epochs {
        let (jtj, jtr) = normal_equations(&net, data);
        let mut accepted = false;
        for _ in 0..=cfg.max_retries {
            let mut a = jtj.clone();
            for d in 0..N_PARAMS {
                a[(d, d)] += lambda;
            }
            let step = a.cholesky().map(|c| c.solve(&jtr));
            if let Some(delta) = step {
                let mut p = *net.params();
                p.iter_mut().zip(delta.iter()).for_each(|(v, d)| *v += d);
                if let Some(cand) = MlpPredictor::from_params(&p) {
                    let cand_mse = data.mse(&cand);
                    if cand_mse < mse {
                        net = cand;
                        mse = cand_mse;
                        trace.push(mse);
                        lambda = (lambda / cfg.lambda_factor).max(f64::MIN_POSITIVE);
                        accepted = true;
                        break;
                    }
                }
            }
            if lambda >= cfg.lambda_max {
                return LmOutcome { net, mse_trace: trace, stalled: true };
            }
            lambda = (lambda * cfg.lambda_factor).min(cfg.lambda_max);
        }
        if !accepted && mse == 0.0 {
            break;
        }
    }
    LmOutcome { net, mse_trace: trace, stalled: false }
}

/// One multistart candidate's run.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRun {
    pub from_previous: bool,
    pub outcome: LmOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultistartOutcome {
    pub net: MlpPredictor,
    pub mse: f64,
    pub candidates: Vec<CandidateRun>,
}

/// Trains `random_starts` random networks, plus `prev` when given, and keeps
/// the one with the lowest final training MSE (earliest candidate on ties).
/// Candidate `c` draws its initialization from a stream keyed by (seed, c).
pub fn multistart_train(
    data: &TrainSet,
    prev: Option<&MlpPredictor>,
    seed: u64,
    cfg: &NeuralConfig,
) -> MultistartOutcome {
    let mut candidates = Vec::with_capacity(cfg.random_starts + 1);
    for c in 0..cfg.random_starts {
        let init = MlpPredictor::random(&mut rng_for(&[seed, c as u64]));
        candidates.push(CandidateRun {
            from_previous: false,
            outcome: lm_train(&init, data, cfg.epochs, cfg),
        });
    }
    if let Some(p) = prev {
        candidates.push(CandidateRun {
            from_previous: true,
            outcome: lm_train(p, data, cfg.epochs, cfg),
        });
    }
    let best = candidates
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.outcome.final_mse().total_cmp(&b.1.outcome.final_mse()).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("at least one candidate");
    MultistartOutcome {
        net: candidates[best].outcome.net.clone(),
        mse: candidates[best].outcome.final_mse(),
        candidates,
    }
}

/// 2^b networks derived from a linear codebook of the same size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralCodebook {
    pub bits: u32,
    /// Size of the linear codebook that produced the initial clustering.
    pub source_bits: u32,
    /// Number of nonlinear re-clustering passes applied (0 = initial only).
    pub lloyd_iteration: usize,
    pub nets: Vec<MlpPredictor>,
}

impl NeuralCodebook {
    pub fn size(&self) -> usize {
        self.nets.len()
    }
}

/// Net with the lowest MAD on `frame` (lowest index on ties) and that MAD.
pub fn best_net(frame: &AnalysisFrame, nets: &[MlpPredictor]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, net) in nets.iter().enumerate() {
        let d = mlp_mad(frame, net);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Per-iteration record of a neural codebook build.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralIteration {
    pub codebook: NeuralCodebook,
    /// Cluster index of each training frame used to train `codebook`.
    pub assignment: Vec<usize>,
    /// Σ over training frames of the minimum-net MAD under `codebook`.
    pub total_mad: f64,
    /// Winning multistart MSE per cluster (`None` for empty clusters).
    pub cluster_mse: Vec<Option<f64>>,
    /// Every LM trace run in this iteration.
    pub traces: Vec<Vec<f64>>,
}

/// Builds the neural codebook from a speaker's frames and linear codebook.
///
/// Iteration 0 clusters frames by LPCC quantization against `linear_cb`
/// and trains one network per cluster. Each later iteration re-clusters
/// frames by lowest network MAD and retrains with the previous network as
/// an extra start. Empty clusters keep their previous network; at
/// iteration 0 an empty cluster gets the zero network.
pub fn build_neural_codebook(
    frames: &[FrameFeatures],
    linear_cb: &LinearCodebook,
    iterations: usize,
    seed: u64,
    cfg: &NeuralConfig,
) -> Result<Vec<NeuralIteration>> {
    if frames.is_empty() {
        return Err(Error::InsufficientData("no frames for neural codebook".into()));
    }
    let k = linear_cb.size();
    let mut assignment = Vec::with_capacity(frames.len());
    for f in frames {
        assignment.push(quantize(&f.lpcc, linear_cb, MeasureKind::M1)?.0);
    }
    let mut out: Vec<NeuralIteration> = Vec::with_capacity(iterations + 1);
    let mut nets: Vec<MlpPredictor> = vec![MlpPredictor::zero(); k];
    for it in 0..=iterations {
        if it > 0 {
            assignment = frames.iter().map(|f| best_net(&f.frame, &nets).0).collect();
        }
        let mut cluster_mse = vec![None; k];
        let mut traces = Vec::new();
        for c in 0..k {
            let members = frames
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == c)
                .map(|(f, _)| &f.frame);
            let data = TrainSet::from_frames(members)?;
            if data.is_empty() {
                continue;
            }
            let prev = (it > 0).then(|| nets[c].clone());
            let run = multistart_train(&data, prev.as_ref(), derive_seed(&[seed, it as u64, c as u64]), cfg);
            traces.extend(run.candidates.iter().map(|r| r.outcome.mse_trace.clone()));
            cluster_mse[c] = Some(run.mse);
            nets[c] = run.net;
        }
        let total_mad = frames.iter().map(|f| best_net(&f.frame, &nets).1).sum();
        out.push(NeuralIteration {
            codebook: NeuralCodebook {
                bits: linear_cb.bits,
                source_bits: linear_cb.bits,
                lloyd_iteration: it,
                nets: nets.clone(),
            },
            assignment: assignment.clone(),
            total_mad,
            cluster_mse,
            traces,
        });
    }
    Ok(out)
}
