//! Per-speaker models and their on-disk form.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::FrontendConfig;
use crate::lpc::{extract_features, FrameFeatures};
use crate::neural::{build_neural_codebook, NeuralCodebook, NeuralConfig, NeuralIteration};
use crate::seed::{derive_seed, label_hash};
use crate::vq::{train_codebooks, LinearCodebook, SplitMethod, StageTrace, VqConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Everything that determines a trained speaker model besides its audio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub frontend: FrontendConfig,
    pub split_method: SplitMethod,
    pub vq: VqConfig,
    /// Linear codebook sizes, in bits.
    pub bits: Vec<u32>,
    /// Sizes that also get a neural codebook; each must appear in `bits`.
    pub neural_bits: Vec<u32>,
    pub neural: NeuralConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            frontend: FrontendConfig::default(),
            split_method: SplitMethod::Hyperplane,
            vq: VqConfig::default(),
            bits: vec![4, 5, 6, 7],
            neural_bits: Vec::new(),
            neural: NeuralConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.frontend.validate()?;
        self.neural.validate()?;
        if self.bits.is_empty() {
            return Err(Error::InvalidConfig("no codebook sizes configured".into()));
        }
        if let Some(b) = self.bits.iter().find(|&&b| b == 0 || b > 12) {
            return Err(Error::InvalidConfig(format!("codebook size {b} bits is out of range 1..=12")));
        }
        if let Some(b) = self.neural_bits.iter().find(|b| !self.bits.contains(b)) {
            return Err(Error::InvalidConfig(format!(
                "neural codebook size {b} has no linear codebook of the same size"
            )));
        }
        if !self.neural_bits.is_empty() && self.frontend.lpc_order < crate::neural::INPUTS {
            return Err(Error::InvalidConfig(format!(
                "neural codebooks need lpc_order >= {}",
                crate::neural::INPUTS
            )));
        }
        if !(self.vq.epsilon > 0.0) || !(self.vq.rel_tol >= 0.0) || self.vq.max_iters == 0 {
            return Err(Error::InvalidConfig(
                "vq needs epsilon > 0, rel_tol >= 0 and max_iters >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Same settings, trained only at the given sizes.
    pub fn restricted(&self, linear: &[u32], neural: &[u32]) -> Self {
        let bits: BTreeSet<u32> = linear.iter().chain(neural).copied().collect();
        Self {
            bits: bits.into_iter().collect(),
            neural_bits: neural.to_vec(),
            ..self.clone()
        }
    }
}

/// A speaker's codebooks. On disk, one JSON document per speaker and size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerModel {
    pub schema_version: u32,
    pub speaker: String,
    pub config: TrainConfig,
    pub linear_codebooks: Vec<LinearCodebook>,
    /// Every Lloyd snapshot of every neural size.
    pub neural_codebooks: Vec<NeuralCodebook>,
    pub seed: u64,
}

impl SpeakerModel {
    pub fn linear(&self, bits: u32) -> Result<&LinearCodebook> {
        self.linear_codebooks
            .iter()
            .find(|cb| cb.bits == bits)
            .ok_or_else(|| Error::MissingLinearCodebook {
                speaker: self.speaker.clone(),
                bits,
            })
    }

    pub fn neural(&self, bits: u32, iteration: usize) -> Result<&NeuralCodebook> {
        self.neural_codebooks
            .iter()
            .find(|cb| cb.bits == bits && cb.lloyd_iteration == iteration)
            .ok_or_else(|| {
                Error::MissingNeuralCodebook(format!(
                    "{} ({bits} bits, iteration {iteration})",
                    self.speaker
                ))
            })
    }

    /// Copy holding only the codebooks of one size.
    pub fn restricted_to(&self, bits: u32) -> Self {
        Self {
            linear_codebooks: self.linear_codebooks.iter().filter(|c| c.bits == bits).cloned().collect(),
            neural_codebooks: self.neural_codebooks.iter().filter(|c| c.bits == bits).cloned().collect(),
            ..self.clone()
        }
    }

    /// Adds the codebooks of `other`, which must describe the same speaker.
    pub fn merge(&mut self, other: SpeakerModel) -> Result<()> {
        if other.speaker != self.speaker {
            return Err(Error::InvalidArgument(format!(
                "cannot merge models of {} and {}",
                self.speaker, other.speaker
            )));
        }
        for cb in other.linear_codebooks {
            if self.linear(cb.bits).is_err() {
                self.linear_codebooks.push(cb);
            }
        }
        for cb in other.neural_codebooks {
            if self.neural(cb.bits, cb.lloyd_iteration).is_err() {
                self.neural_codebooks.push(cb);
            }
        }
        self.linear_codebooks.sort_by_key(|c| c.bits);
        self.neural_codebooks.sort_by_key(|c| (c.bits, c.lloyd_iteration));
        Ok(())
    }

    fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("model {}: {msg}", self.speaker)));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema version {}", self.schema_version));
        }
        let q = self.config.frontend.cepstral_order;
        let p = self.config.frontend.lpc_order;
        for cb in &self.linear_codebooks {
            if cb.codewords.len() != 1 << cb.bits {
                return bad(format!("{}-bit codebook has {} codewords", cb.bits, cb.codewords.len()));
            }
            if cb.codewords.iter().any(|c| c.lpcc.len() != q || c.lpc.len() != p) {
                return bad("codeword dimensions disagree with config".into());
            }
        }
        for cb in &self.neural_codebooks {
            if cb.nets.len() != 1 << cb.bits {
                return bad(format!("{}-bit neural codebook has {} nets", cb.bits, cb.nets.len()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: SpeakerModel = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        model.check().map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::InvalidArgument(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        Ok(model)
    }
}

/// Training products kept for diagnostics.
#[derive(Debug, Clone)]
pub struct TrainedSpeaker {
    pub model: SpeakerModel,
    pub stages: Vec<StageTrace>,
    /// (bits, per-iteration record) for every neural size.
    pub neural: Vec<(u32, Vec<NeuralIteration>)>,
}

/// Front-end analysis of each utterance.
pub fn analyze_sentences<'a>(
    samples: impl IntoIterator<Item = &'a [f64]>,
    cfg: &FrontendConfig,
) -> Result<Vec<Vec<FrameFeatures>>> {
    samples.into_iter().map(|s| extract_features(s, cfg)).collect()
}

/// Trains a speaker from already analysed training sentences.
pub fn train_speaker_frames(
    speaker: &str,
    sentences: &[Vec<FrameFeatures>],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainedSpeaker> {
    cfg.validate()?;
    let frames: Vec<FrameFeatures> = sentences.iter().flatten().cloned().collect();
    if frames.is_empty() {
        return Err(Error::InsufficientData(format!("speaker {speaker} has no training frames")));
    }
    let lpcc: Vec<Vec<f64>> = frames.iter().map(|f| f.lpcc.clone()).collect();
    let lpc: Vec<Vec<f64>> = frames.iter().map(|f| f.lpc.a.clone()).collect();
    let trained = train_codebooks(&lpcc, &lpc, &cfg.bits, cfg.split_method, &cfg.vq).map_err(|e| match e {
        Error::InsufficientData(msg) => Error::InsufficientData(format!("speaker {speaker}: {msg}")),
        other => other,
    })?;
    let mut linear_codebooks = trained.codebooks;
    linear_codebooks.sort_by_key(|c| c.bits);
    linear_codebooks.dedup_by_key(|c| c.bits);

    let mut neural = Vec::new();
    let mut neural_codebooks = Vec::new();
    for &b in &cfg.neural_bits {
        let cb = linear_codebooks.iter().find(|c| c.bits == b).expect("validated");
        let job_seed = derive_seed(&[seed, label_hash(speaker), u64::from(b)]);
        let its = build_neural_codebook(&frames, cb, cfg.neural.iterations, job_seed, &cfg.neural)?;
        neural_codebooks.extend(its.iter().map(|i| i.codebook.clone()));
        neural.push((b, its));
    }
    Ok(TrainedSpeaker {
        model: SpeakerModel {
            schema_version: SCHEMA_VERSION,
            speaker: speaker.to_owned(),
            config: cfg.clone(),
            linear_codebooks,
            neural_codebooks,
            seed,
        },
        stages: trained.stages,
        neural,
    })
}

/// Pools the speaker's training utterances and trains every configured
/// codebook.
pub fn train_speaker<'a>(
    speaker: &str,
    utterances: impl IntoIterator<Item = &'a [f64]>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<SpeakerModel> {
    let sentences = analyze_sentences(utterances, &cfg.frontend)?;
    Ok(train_speaker_frames(speaker, &sentences, cfg, seed)?.model)
}
