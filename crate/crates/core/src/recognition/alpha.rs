//! Fusion weight selection by leave-one-sentence-out on training data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{identify, ModelSet, Scheme, SchemeSpec, TrainConfig};
use crate::error::{Error, Result};
use crate::lpc::FrameFeatures;
use crate::measures::{grid_search_alpha, trial_errors, AlphaTrial, CandidateScores};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSelection {
    pub alpha: f64,
    pub grid: Vec<f64>,
    /// Held-out errors at each grid point.
    pub errors: Vec<usize>,
    pub trials: Vec<AlphaTrial>,
}

/// Chooses the fusion weight of `spec` on training sentences only.
///
/// Each training sentence of each speaker is held out in turn: that
/// speaker's model is retrained without it and the sentence is scored
/// against the retrained model and every other speaker's full model. The
/// grid weight with the fewest held-out errors wins, ties going to the
/// smaller weight.
pub fn loso_alpha(
    train: &BTreeMap<String, Vec<Vec<FrameFeatures>>>,
    models: &ModelSet,
    cfg: &TrainConfig,
    spec: &SchemeSpec,
    seed: u64,
    grid: &[f64],
) -> Result<AlphaSelection> {
    if !spec.scheme.uses_alpha() {
        return Err(Error::InvalidArgument(format!(
            "scheme {} has no fusion weight",
            spec.scheme
        )));
    }
    let neural: Vec<u32> = if spec.scheme == Scheme::S3 {
        vec![spec.mlp_bits]
    } else {
        Vec::new()
    };
    let mut fold_cfg = cfg.restricted(&[spec.linear_bits], &neural);
    fold_cfg.neural.iterations = spec.lloyd_iteration;

    let mut trials = Vec::new();
    for (speaker, sentences) in train {
        if sentences.len() < 2 {
            continue;
        }
        for held in 0..sentences.len() {
            let rest: Vec<Vec<FrameFeatures>> = sentences
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != held)
                .map(|(_, s)| s.clone())
                .collect();
            let fold_seed = derive_seed(&[seed, 0x4C4F_534F, held as u64]);
            let fold = super::train_speaker_frames(speaker, &rest, &fold_cfg, fold_seed)?;
            let mut set = models.clone();
            set.insert(speaker.clone(), fold.model);
            let r = identify(&sentences[held], &set, spec, 0.0)?;
            trials.push(AlphaTrial {
                truth: speaker.clone(),
                candidates: r
                    .scores
                    .into_iter()
                    .map(|s| CandidateScores {
                        speaker: s.speaker,
                        coeff: s.coeff.unwrap_or(s.score),
                        residual: s.residual.unwrap_or(0.0),
                    })
                    .collect(),
            });
        }
    }
    if trials.is_empty() {
        return Err(Error::InsufficientData(
            "alpha search needs a speaker with at least two training sentences".into(),
        ));
    }
    let alpha = grid_search_alpha(&trials, grid)?;
    let errors = grid.iter().map(|&a| trial_errors(&trials, a)).collect();
    Ok(AlphaSelection {
        alpha,
        grid: grid.to_vec(),
        errors,
        trials,
    })
}
