//! Corpus ingestion: manifests, PCM loading and 16 kHz to 8 kHz conversion.

mod resample;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use resample::{antialias_taps, resample_2to1, ANTIALIAS_TAPS};
pub use synthetic::{generate_synthetic_corpus, quadratic_ar_signal, SyntheticCorpus, SyntheticSpeaker};

/// Sample rate of every utterance after ingestion.
pub const TARGET_RATE: u32 = 8000;
pub const MIN_DURATION_SECS: f64 = 0.5;
pub const MAX_DURATION_SECS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Test,
}

/// One manifest record. Field names are part of the on-disk format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub speaker: String,
    pub sentence: String,
    pub role: Role,
    /// Required for headerless raw PCM, ignored for WAV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<u32>,
}

/// A corpus manifest, serialized as a bare JSON array of entries.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: CorpusManifest =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        manifest.validate_unique()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// (speaker, sentence) pairs must be unique.
    pub fn validate_unique(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert((e.speaker.as_str(), e.sentence.as_str())) {
                return Err(Error::InvalidManifest(format!(
                    "duplicate (speaker, sentence) pair ({}, {})",
                    e.speaker, e.sentence
                )));
            }
        }
        Ok(())
    }

    /// Evaluation runs need every speaker in both the train and test roles.
    pub fn validate_for_evaluation(&self) -> Result<()> {
        self.validate_unique()?;
        if self.entries.is_empty() {
            return Err(Error::InvalidManifest("manifest is empty".into()));
        }
        let mut roles: BTreeMap<&str, (bool, bool)> = BTreeMap::new();
        for e in &self.entries {
            let slot = roles.entry(e.speaker.as_str()).or_default();
            match e.role {
                Role::Train => slot.0 = true,
                Role::Test => slot.1 = true,
            }
        }
        for (speaker, (train, test)) in roles {
            if !train || !test {
                return Err(Error::InvalidManifest(format!(
                    "speaker {speaker} must appear in both train and test roles"
                )));
            }
        }
        Ok(())
    }

    pub fn speakers(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.entries.iter().map(|e| e.speaker.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }
}

/// One spoken sentence at 8 kHz with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub speaker_id: String,
    pub sentence_id: String,
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

impl Utterance {
    /// Builds an utterance, checking the post-ingestion invariants.
    pub fn new(
        speaker_id: impl Into<String>,
        sentence_id: impl Into<String>,
        sample_rate: u32,
        samples: Vec<f64>,
    ) -> Result<Self> {
        if sample_rate != TARGET_RATE {
            return Err(Error::InvalidArgument(format!(
                "utterance sample rate must be {TARGET_RATE} Hz, got {sample_rate}"
            )));
        }
        let duration = samples.len() as f64 / f64::from(sample_rate);
        if !(MIN_DURATION_SECS..=MAX_DURATION_SECS).contains(&duration) {
            return Err(Error::InvalidArgument(format!(
                "utterance duration {duration:.3} s outside [{MIN_DURATION_SECS}, {MAX_DURATION_SECS}] s"
            )));
        }
        if let Some(bad) = samples.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
            return Err(Error::InvalidArgument(format!(
                "sample {bad} outside [-1, 1]"
            )));
        }
        Ok(Self {
            speaker_id: speaker_id.into(),
            sentence_id: sentence_id.into(),
            sample_rate,
            samples,
        })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

#[inline]
pub fn pcm_to_sample(v: i16) -> f64 {
    f64::from(v) / 32768.0
}

#[inline]
pub fn sample_to_pcm(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

fn read_pcm(path: &Path, entry: &ManifestEntry) -> Result<(u32, Vec<i16>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"RIFF") {
        let reader = hound::WavReader::new(std::io::Cursor::new(bytes)).map_err(|source| {
            Error::Wav {
                path: path.to_owned(),
                source,
            }
        })?;
        let spec = reader.spec();
        if spec.channels != 1 {
            return Err(Error::UnsupportedAudio {
                path: path.to_owned(),
                reason: format!("{} channels, expected mono", spec.channels),
            });
        }
        if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
            return Err(Error::UnsupportedAudio {
                path: path.to_owned(),
                reason: format!(
                    "{:?} {}-bit samples, expected 16-bit linear PCM",
                    spec.sample_format, spec.bits_per_sample
                ),
            });
        }
        let samples = reader
            .into_samples::<i16>()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|source| Error::Wav {
                path: path.to_owned(),
                source,
            })?;
        Ok((spec.sample_rate, samples))
    } else {
        let rate = entry.sample_rate.ok_or_else(|| Error::UnsupportedAudio {
            path: path.to_owned(),
            reason: "headerless PCM requires sample_rate in the manifest entry".into(),
        })?;
        if bytes.len() % 2 != 0 {
            return Err(Error::UnsupportedAudio {
                path: path.to_owned(),
                reason: "odd byte count for 16-bit PCM".into(),
            });
        }
        let samples = bytes
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]))
            .collect();
        Ok((rate, samples))
    }
}

/// Loads one manifest entry from `path`, scaling PCM by 1/32768 and
/// decimating 16 kHz input to 8 kHz.
pub fn load_utterance(path: &Path, entry: &ManifestEntry) -> Result<Utterance> {
    let (rate, pcm) = read_pcm(path, entry)?;
    let samples: Vec<f64> = pcm.into_iter().map(pcm_to_sample).collect();
    let samples = match rate {
        8000 => samples,
        16000 => resample_2to1(&samples)?,
        other => {
            return Err(Error::UnsupportedAudio {
                path: path.to_owned(),
                reason: format!("sample rate {other} Hz, expected 8000 or 16000"),
            })
        }
    };
    Utterance::new(&entry.speaker, &entry.sentence, TARGET_RATE, samples).map_err(|e| {
        Error::UnsupportedAudio {
            path: path.to_owned(),
            reason: e.to_string(),
        }
    })
}

/// A manifest entry paired with its decoded audio.
#[derive(Debug, Clone)]
pub struct LoadedEntry {
    pub entry: ManifestEntry,
    pub utterance: Utterance,
}

/// Loads every entry of the manifest at `manifest_path`. Relative audio
/// paths resolve against the manifest's directory.
pub fn load_corpus(manifest_path: &Path) -> Result<Vec<LoadedEntry>> {
    let manifest = CorpusManifest::from_path(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new(""));
    manifest
        .entries
        .iter()
        .map(|entry| {
            let path = if entry.path.is_absolute() {
                entry.path.clone()
            } else {
                base.join(&entry.path)
            };
            Ok(LoadedEntry {
                entry: entry.clone(),
                utterance: load_utterance(&path, entry)?,
            })
        })
        .collect()
}

/// Writes `samples` (8 kHz, [-1, 1]) as a 16-bit mono WAV file.
pub fn write_wav(path: &Path, sample_rate: u32, samples: &[f64]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wav_err = |source| Error::Wav {
        path: path.to_owned(),
        source,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in samples {
        writer.write_sample(sample_to_pcm(s)).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)
}
