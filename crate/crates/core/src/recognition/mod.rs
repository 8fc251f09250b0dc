//! Closed-set identification with linear, neural and fused scoring.

mod alpha;
mod model;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lpc::{FrameFeatures, ResidualMode};
use crate::measures::{score_sentence, MeasureKind};
use crate::neural::mlp_mad;

pub use alpha::{loso_alpha, AlphaSelection};
pub use model::{
    analyze_sentences, train_speaker, train_speaker_frames, SpeakerModel, TrainConfig, TrainedSpeaker,
    SCHEMA_VERSION,
};

/// Enrolled speakers keyed (and therefore ordered) by id.
pub type ModelSet = BTreeMap<String, SpeakerModel>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// One linear measure.
    L,
    /// Coefficient measure plus weighted linear-residual measure.
    LC,
    /// Neural codebooks only.
    S1,
    /// LPCC preselection of K speakers, then neural scoring.
    S2,
    /// LPCC preselection, then LPCC plus weighted neural scoring.
    S3,
}

impl Scheme {
    pub fn uses_neural(self) -> bool {
        matches!(self, Scheme::S1 | Scheme::S2 | Scheme::S3)
    }

    pub fn uses_alpha(self) -> bool {
        matches!(self, Scheme::LC | Scheme::S3)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scheme::L => "L",
            Scheme::LC => "LC",
            Scheme::S1 => "S1",
            Scheme::S2 => "S2",
            Scheme::S3 => "S3",
        };
        f.write_str(s)
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "L" => Ok(Scheme::L),
            "LC" => Ok(Scheme::LC),
            "S1" => Ok(Scheme::S1),
            "S2" => Ok(Scheme::S2),
            "S3" => Ok(Scheme::S3),
            _ => Err(Error::InvalidArgument(format!("unknown scheme {s:?}"))),
        }
    }
}

/// Fusion weight: fixed, or chosen by held-out search on training data.
/// Serialized as a number or the string "auto".
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    Value(f64),
    Auto,
}

impl Serialize for Alpha {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Alpha::Value(v) => s.serialize_f64(*v),
            Alpha::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for Alpha {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Alpha::Value(v)),
            Raw::Text(t) if t == "auto" => Ok(Alpha::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"auto\", got {t:?}"
            ))),
        }
    }
}

impl FromStr for Alpha {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Alpha::Auto);
        }
        s.parse::<f64>()
            .map(Alpha::Value)
            .map_err(|_| Error::InvalidArgument(format!("alpha must be a number or \"auto\", got {s:?}")))
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Alpha::Value(v) => write!(f, "{v}"),
            Alpha::Auto => f.write_str("auto"),
        }
    }
}

fn default_k() -> usize {
    2
}

fn default_residual_measure() -> MeasureKind {
    MeasureKind::M3
}

/// How test sentences are scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub scheme: Scheme,
    /// Shortlist size for S2 and S3.
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "Alpha::auto")]
    pub alpha: Alpha,
    /// Measure for L; coefficient measure for LC.
    #[serde(default)]
    pub measure: MeasureKind,
    /// Residual measure for LC.
    #[serde(default = "default_residual_measure")]
    pub residual_measure: MeasureKind,
    /// Linear codebook size (scoring for L/LC, preselection for S2/S3).
    pub linear_bits: u32,
    /// Neural codebook size for S1-S3.
    #[serde(default)]
    pub mlp_bits: u32,
    /// Lloyd snapshot of the neural codebook to use.
    #[serde(default)]
    pub lloyd_iteration: usize,
}

impl Alpha {
    fn auto() -> Self {
        Alpha::Auto
    }
}

impl SchemeSpec {
    pub fn linear(bits: u32, measure: MeasureKind) -> Self {
        Self {
            scheme: Scheme::L,
            k: default_k(),
            alpha: Alpha::Value(0.0),
            measure,
            residual_measure: default_residual_measure(),
            linear_bits: bits,
            mlp_bits: bits,
            lloyd_iteration: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scheme.uses_alpha() {
            if let Alpha::Value(a) = self.alpha {
                if !(a >= 0.0) || !a.is_finite() {
                    return Err(Error::InvalidConfig(format!("alpha must be finite and >= 0, got {a}")));
                }
            }
        }
        if matches!(self.scheme, Scheme::S2 | Scheme::S3) && self.k == 0 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        if self.scheme == Scheme::LC {
            if !self.measure.is_coefficient() || self.residual_measure.is_coefficient() {
                return Err(Error::InvalidConfig(
                    "LC pairs a coefficient measure with a residual measure".into(),
                ));
            }
        }
        Ok(())
    }

    /// Short label for tables and logs.
    pub fn label(&self) -> String {
        match self.scheme {
            Scheme::L => format!("L-{}", self.measure),
            Scheme::LC => format!("LC-{}+{}", self.measure, self.residual_measure),
            Scheme::S1 => format!("S1-it{}", self.lloyd_iteration),
            s => format!("{s}-K{}-it{}", self.k, self.lloyd_iteration),
        }
    }
}

/// One speaker's score for a sentence. `coeff`/`residual` are the parts of
/// a fused score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerScore {
    pub speaker: String,
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coeff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationResult {
    pub predicted: String,
    /// Decision scores, in speaker-id order, of the speakers that competed.
    pub scores: Vec<SpeakerScore>,
    pub scheme: Scheme,
    /// Preselected speakers for S2/S3, in rank order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shortlist: Vec<String>,
    /// Number of frame-by-network residual evaluations performed.
    pub mlp_calls: u64,
}

/// Speaker with the lowest score; ties go to the smaller id.
fn argmin(scores: &[SpeakerScore]) -> Result<String> {
    scores
        .iter()
        .min_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.speaker.cmp(&b.speaker)))
        .map(|s| s.speaker.clone())
        .ok_or_else(|| Error::MissingModels("no speaker models to score against".into()))
}

fn check_frames(frames: &[FrameFeatures]) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("test sentence has no frames".into()));
    }
    Ok(())
}

fn linear_total(
    frames: &[FrameFeatures],
    model: &SpeakerModel,
    bits: u32,
    kind: MeasureKind,
    mode: ResidualMode,
) -> Result<f64> {
    Ok(score_sentence(&model.speaker, frames, model.linear(bits)?, kind, mode)?.total)
}

/// Σ over frames of the minimum network MAD; counts network evaluations.
fn neural_total(
    frames: &[FrameFeatures],
    model: &SpeakerModel,
    bits: u32,
    iteration: usize,
    calls: &mut u64,
) -> Result<f64> {
    let nets = &model.neural(bits, iteration)?.nets;
    let mut total = 0.0;
    for f in frames {
        let best = nets.iter().map(|n| mlp_mad(&f.frame, n)).fold(f64::INFINITY, f64::min);
        *calls += nets.len() as u64;
        total += best;
    }
    Ok(total)
}

fn residual_mode(models: &ModelSet) -> ResidualMode {
    models
        .values()
        .next()
        .map_or(ResidualMode::Unwindowed, |m| ResidualMode::from_config(&m.config.frontend))
}

/// Scores the sentence with one linear measure against every model.
pub fn identify_linear(
    frames: &[FrameFeatures],
    models: &ModelSet,
    bits: u32,
    measure: MeasureKind,
) -> Result<IdentificationResult> {
    check_frames(frames)?;
    let mode = residual_mode(models);
    let scores = models
        .values()
        .map(|m| {
            Ok(SpeakerScore {
                speaker: m.speaker.clone(),
                score: linear_total(frames, m, bits, measure, mode)?,
                coeff: None,
                residual: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IdentificationResult {
        predicted: argmin(&scores)?,
        scores,
        scheme: Scheme::L,
        shortlist: Vec::new(),
        mlp_calls: 0,
    })
}

/// coefficient total + alpha · linear residual total, against every model.
pub fn identify_combined(
    frames: &[FrameFeatures],
    models: &ModelSet,
    bits: u32,
    coeff: MeasureKind,
    residual: MeasureKind,
    alpha: f64,
) -> Result<IdentificationResult> {
    check_frames(frames)?;
    let mode = residual_mode(models);
    let scores = models
        .values()
        .map(|m| {
            let c = linear_total(frames, m, bits, coeff, mode)?;
            let r = linear_total(frames, m, bits, residual, mode)?;
            Ok(SpeakerScore {
                speaker: m.speaker.clone(),
                score: crate::measures::combine_scores(c, r, alpha)?,
                coeff: Some(c),
                residual: Some(r),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IdentificationResult {
        predicted: argmin(&scores)?,
        scores,
        scheme: Scheme::LC,
        shortlist: Vec::new(),
        mlp_calls: 0,
    })
}

/// Neural scoring of every model.
pub fn identify_scheme1(
    frames: &[FrameFeatures],
    models: &ModelSet,
    mlp_bits: u32,
    iteration: usize,
) -> Result<IdentificationResult> {
    check_frames(frames)?;
    let mut calls = 0;
    let scores = models
        .values()
        .map(|m| {
            Ok(SpeakerScore {
                speaker: m.speaker.clone(),
                score: neural_total(frames, m, mlp_bits, iteration, &mut calls)?,
                coeff: None,
                residual: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IdentificationResult {
        predicted: argmin(&scores)?,
        scores,
        scheme: Scheme::S1,
        shortlist: Vec::new(),
        mlp_calls: calls,
    })
}

/// The K speakers with the lowest LPCC (M1) totals, best first, with all
/// totals by speaker.
pub fn preselect(
    frames: &[FrameFeatures],
    models: &ModelSet,
    linear_bits: u32,
    k: usize,
) -> Result<(Vec<String>, BTreeMap<String, f64>)> {
    if k == 0 || k > models.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be in 1..={} (number of models)",
            models.len()
        )));
    }
    let mode = residual_mode(models);
    let totals: BTreeMap<String, f64> = models
        .values()
        .map(|m| Ok((m.speaker.clone(), linear_total(frames, m, linear_bits, MeasureKind::M1, mode)?)))
        .collect::<Result<_>>()?;
    let mut ranked: Vec<(&String, f64)> = totals.iter().map(|(s, &v)| (s, v)).collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    let shortlist = ranked.into_iter().take(k).map(|(s, _)| s.clone()).collect();
    Ok((shortlist, totals))
}

/// LPCC preselection of `k` speakers, neural scoring among them.
pub fn identify_scheme2(
    frames: &[FrameFeatures],
    models: &ModelSet,
    linear_bits: u32,
    mlp_bits: u32,
    iteration: usize,
    k: usize,
) -> Result<IdentificationResult> {
    check_frames(frames)?;
    let (shortlist, _) = preselect(frames, models, linear_bits, k)?;
    let mut calls = 0;
    let mut scores = Vec::with_capacity(k);
    for m in models.values().filter(|m| shortlist.contains(&m.speaker)) {
        scores.push(SpeakerScore {
            speaker: m.speaker.clone(),
            score: neural_total(frames, m, mlp_bits, iteration, &mut calls)?,
            coeff: None,
            residual: None,
        });
    }
    Ok(IdentificationResult {
        predicted: argmin(&scores)?,
        scores,
        scheme: Scheme::S2,
        shortlist,
        mlp_calls: calls,
    })
}

/// LPCC preselection of `k` speakers, then M1 total + alpha · neural MAD
/// total among them.
pub fn identify_scheme3(
    frames: &[FrameFeatures],
    models: &ModelSet,
    linear_bits: u32,
    mlp_bits: u32,
    iteration: usize,
    k: usize,
    alpha: f64,
) -> Result<IdentificationResult> {
    check_frames(frames)?;
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {alpha}")));
    }
    let (shortlist, totals) = preselect(frames, models, linear_bits, k)?;
    let mut calls = 0;
    let mut scores = Vec::with_capacity(k);
    for m in models.values().filter(|m| shortlist.contains(&m.speaker)) {
        let c = totals[&m.speaker];
        let r = neural_total(frames, m, mlp_bits, iteration, &mut calls)?;
        scores.push(SpeakerScore {
            speaker: m.speaker.clone(),
            score: crate::measures::combine_scores(c, r, alpha)?,
            coeff: Some(c),
            residual: Some(r),
        });
    }
    Ok(IdentificationResult {
        predicted: argmin(&scores)?,
        scores,
        scheme: Scheme::S3,
        shortlist,
        mlp_calls: calls,
    })
}

/// Dispatches on `spec`; `alpha` is the resolved fusion weight.
pub fn identify(
    frames: &[FrameFeatures],
    models: &ModelSet,
    spec: &SchemeSpec,
    alpha: f64,
) -> Result<IdentificationResult> {
    match spec.scheme {
        Scheme::L => identify_linear(frames, models, spec.linear_bits, spec.measure),
        Scheme::LC => identify_combined(
            frames,
            models,
            spec.linear_bits,
            spec.measure,
            spec.residual_measure,
            alpha,
        ),
        Scheme::S1 => identify_scheme1(frames, models, spec.mlp_bits, spec.lloyd_iteration),
        Scheme::S2 => identify_scheme2(
            frames,
            models,
            spec.linear_bits,
            spec.mlp_bits,
            spec.lloyd_iteration,
            spec.k,
        ),
        Scheme::S3 => identify_scheme3(
            frames,
            models,
            spec.linear_bits,
            spec.mlp_bits,
            spec.lloyd_iteration,
            spec.k,
            alpha,
        ),
    }
}

/// An analysed test sentence with its true speaker.
#[derive(Debug, Clone)]
pub struct TestSentence {
    pub speaker: String,
    pub sentence: String,
    pub frames: Vec<FrameFeatures>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceOutcome {
    pub speaker: String,
    pub sentence: String,
    pub predicted: String,
    pub scores: Vec<SpeakerScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub spec: SchemeSpec,
    pub alpha: f64,
    pub n_sentences: usize,
    pub n_errors: usize,
    /// Percentage of misidentified sentences.
    pub error_rate: f64,
    /// confusion[truth][predicted] = count.
    pub confusion: BTreeMap<String, BTreeMap<String, usize>>,
    pub sentences: Vec<SentenceOutcome>,
    pub mlp_calls: u64,
    pub frames: u64,
}

/// 100 · errors / total.
pub fn error_rate(errors: usize, total: usize) -> f64 {
    100.0 * errors as f64 / total as f64
}

/// Identifies every test sentence under `spec` with weight `alpha`.
pub fn evaluate(
    tests: &[TestSentence],
    models: &ModelSet,
    spec: &SchemeSpec,
    alpha: f64,
) -> Result<EvaluationReport> {
    spec.validate()?;
    if tests.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    if let Some(t) = tests.iter().find(|t| !models.contains_key(&t.speaker)) {
        return Err(Error::MissingModels(format!("no model for test speaker {}", t.speaker)));
    }
    let mut confusion: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut sentences = Vec::with_capacity(tests.len());
    let mut n_errors = 0;
    let mut mlp_calls = 0;
    let mut frames = 0;
    for t in tests {
        let r = identify(&t.frames, models, spec, alpha)?;
        if r.predicted != t.speaker {
            n_errors += 1;
        }
        mlp_calls += r.mlp_calls;
        frames += t.frames.len() as u64;
        *confusion
            .entry(t.speaker.clone())
            .or_default()
            .entry(r.predicted.clone())
            .or_default() += 1;
        sentences.push(SentenceOutcome {
            speaker: t.speaker.clone(),
            sentence: t.sentence.clone(),
            predicted: r.predicted,
            scores: r.scores,
        });
    }
    Ok(EvaluationReport {
        spec: spec.clone(),
        alpha,
        n_sentences: tests.len(),
        n_errors,
        error_rate: error_rate(n_errors, tests.len()),
        confusion,
        sentences,
        mlp_calls,
        frames,
    })
}
