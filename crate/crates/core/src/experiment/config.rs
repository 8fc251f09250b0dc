use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::FrontendConfig;
use crate::measures::{default_alpha_grid, MeasureKind};
use crate::neural::NeuralConfig;
use crate::recognition::{Alpha, Scheme, TrainConfig};
use crate::vq::{SplitMethod, VqConfig};

/// Environment variable that overrides `output_dir`.
pub const OUT_DIR_ENV: &str = "SPKID_OUT_DIR";

/// One experiment sweep: what to train, what to evaluate, where to write.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Corpus manifest (JSON list of entries).
    pub corpus: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub frontend: FrontendConfig,
    pub split_method: SplitMethod,
    pub vq: VqConfig,
    /// Linear codebook sizes in bits.
    pub bits: Vec<u32>,
    /// Neural codebook sizes; empty disables the neural stage.
    pub neural_bits: Vec<u32>,
    pub neural: NeuralConfig,
    /// Measures of the single-measure table.
    pub measures: Vec<MeasureKind>,
    /// (coefficient, residual) pairs of the fused linear table.
    pub combinations: Vec<(MeasureKind, MeasureKind)>,
    pub schemes: Vec<Scheme>,
    /// Shortlist size for S2/S3.
    pub k: usize,
    pub alpha: Alpha,
    pub alpha_grid: Vec<f64>,
    /// Keep per-(sentence, speaker) score tables for export-stats.
    pub retain_scores: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            corpus: PathBuf::new(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            frontend: train.frontend,
            split_method: train.split_method,
            vq: train.vq,
            bits: train.bits,
            neural_bits: Vec::new(),
            neural: train.neural,
            measures: MeasureKind::ALL.to_vec(),
            combinations: vec![
                (MeasureKind::M2, MeasureKind::M3),
                (MeasureKind::M2, MeasureKind::M4),
            ],
            schemes: vec![Scheme::L],
            k: 2,
            alpha: Alpha::Auto,
            alpha_grid: default_alpha_grid(),
            retain_scores: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies the output-directory environment override, if set.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|d| !d.is_empty()) {
            self.output_dir = PathBuf::from(dir);
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            frontend: self.frontend.clone(),
            split_method: self.split_method,
            vq: self.vq,
            bits: self.bits.clone(),
            neural_bits: self.neural_bits.clone(),
            neural: self.neural.clone(),
        }
    }

    /// Every check that needs no file access.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.corpus.as_os_str().is_empty() {
            return bad("no corpus manifest given".into());
        }
        if self.output_dir.as_os_str().is_empty() {
            return bad("no output directory given".into());
        }
        self.train_config().validate()?;
        let unique: BTreeSet<u32> = self.bits.iter().copied().collect();
        if unique.len() != self.bits.len() {
            return bad("codebook sizes must be distinct".into());
        }
        if self.schemes.is_empty() {
            return bad("no schemes selected".into());
        }
        if self.schemes.contains(&Scheme::L) && self.measures.is_empty() {
            return bad("scheme L needs at least one measure".into());
        }
        if self.schemes.contains(&Scheme::LC) {
            if self.combinations.is_empty() {
                return bad("scheme LC needs at least one measure combination".into());
            }
            for (c, r) in &self.combinations {
                if !c.is_coefficient() || r.is_coefficient() {
                    return bad(format!("combination ({c}, {r}) must pair a coefficient and a residual measure"));
                }
            }
        }
        if self.schemes.iter().any(|s| s.uses_neural()) && self.neural_bits.is_empty() {
            return bad("neural schemes need neural_bits".into());
        }
        if self.k == 0 {
            return bad("k must be >= 1".into());
        }
        if let Alpha::Value(a) = self.alpha {
            if !(a >= 0.0) || !a.is_finite() {
                return bad(format!("alpha must be finite and >= 0, got {a}"));
            }
        }
        if self.alpha_grid.is_empty() || self.alpha_grid.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return bad("alpha_grid must be a non-empty list of finite weights >= 0".into());
        }
        Ok(())
    }
}
