//! Experiment commands: training, evaluation sweeps, statistics export and
//! synthetic corpus generation. Every output is written as CSV or JSON.

mod config;
mod csv;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{generate_synthetic_corpus, load_corpus, write_wav, CorpusManifest, LoadedEntry, Role, TARGET_RATE};
use crate::error::{Error, Result};
use crate::lpc::{extract_features, FrameFeatures, ResidualMode};
use crate::measures::{
    all_measure_totals, correlation_matrix, distortion_histograms, LabeledScore, MeasureKind, HISTOGRAM_BINS,
};
use crate::recognition::{
    evaluate, loso_alpha, train_speaker_frames, Alpha, EvaluationReport, ModelSet, Scheme, SchemeSpec,
    SpeakerModel, TestSentence,
};

pub use config::{ExperimentConfig, OUT_DIR_ENV};
pub use csv::format_float;

/// Files written by a command.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub error_tables: Vec<PathBuf>,
    pub alpha_table: Option<PathBuf>,
    pub correlation: Vec<PathBuf>,
    pub histograms: Vec<PathBuf>,
    pub scatter: Vec<PathBuf>,
    pub models: Vec<PathBuf>,
    pub reports: Vec<PathBuf>,
    pub score_tables: Vec<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

impl RunArtifacts {
    pub fn all(&self) -> Vec<&PathBuf> {
        let mut v: Vec<&PathBuf> = Vec::new();
        v.extend(&self.error_tables);
        v.extend(&self.alpha_table);
        v.extend(&self.correlation);
        v.extend(&self.histograms);
        v.extend(&self.scatter);
        v.extend(&self.models);
        v.extend(&self.reports);
        v.extend(&self.score_tables);
        v.extend(&self.manifest);
        v.extend(&self.log);
        v
    }

    /// Every declared file exists and is non-empty.
    pub fn verify(&self) -> Result<()> {
        for p in self.all() {
            let len = fs::metadata(p).map_err(|e| Error::io(p, e))?.len();
            if len == 0 {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "artifact is empty"),
                ));
            }
        }
        Ok(())
    }
}

/// Stage timings and counters, written once at the end of a command.
#[derive(Debug, Default)]
struct RunLog {
    lines: Vec<String>,
}

impl RunLog {
    fn stage(&mut self, name: &str, started: Instant) {
        self.lines
            .push(format!("stage {name} {:.3}s", started.elapsed().as_secs_f64()));
    }

    fn note(&mut self, line: String) {
        self.lines.push(line);
    }

    fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &(self.lines.join("\n") + "\n"))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn models_dir(out: &Path) -> PathBuf {
    out.join("models")
}

pub fn model_path(out: &Path, bits: u32, speaker: &str) -> PathBuf {
    models_dir(out).join(format!("b{bits}")).join(format!("{speaker}.json"))
}

fn group_by_speaker<'a>(
    loaded: &'a [LoadedEntry],
    role: Role,
) -> BTreeMap<String, Vec<&'a LoadedEntry>> {
    let mut map: BTreeMap<String, Vec<&LoadedEntry>> = BTreeMap::new();
    for l in loaded.iter().filter(|l| l.entry.role == role) {
        map.entry(l.entry.speaker.clone()).or_default().push(l);
    }
    map
}

fn analyze_group(
    group: &BTreeMap<String, Vec<&LoadedEntry>>,
    cfg: &ExperimentConfig,
) -> Result<BTreeMap<String, Vec<Vec<FrameFeatures>>>> {
    group
        .iter()
        .map(|(s, entries)| {
            let frames = entries
                .iter()
                .map(|l| extract_features(&l.utterance.samples, &cfg.frontend))
                .collect::<Result<Vec<_>>>()?;
            Ok((s.clone(), frames))
        })
        .collect()
}

/// Trains every speaker at every configured size and writes one model file
/// per speaker and size under `<out>/models/b<bits>/`. Nothing is left in
/// `models/` if any step fails.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let mut log = RunLog::default();
    let t = Instant::now();
    let manifest = CorpusManifest::from_path(&cfg.corpus)?;
    if !manifest.entries.iter().any(|e| e.role == Role::Train) {
        return Err(Error::InvalidManifest("no training entries".into()));
    }
    let loaded = load_corpus(&cfg.corpus)?;
    let train = analyze_group(&group_by_speaker(&loaded, Role::Train), cfg)?;
    log.stage("load", t);

    let t = Instant::now();
    let tcfg = cfg.train_config();
    let mut models = Vec::with_capacity(train.len());
    for (speaker, sentences) in &train {
        let ts = Instant::now();
        let trained = train_speaker_frames(speaker, sentences, &tcfg, cfg.seed)?;
        let frames: usize = sentences.iter().map(Vec::len).sum();
        let repairs: usize = trained.stages.iter().map(|s| s.repaired.iter().filter(|r| **r).count()).sum();
        let lloyd: usize = trained.stages.iter().map(|s| s.distortions.len()).sum();
        let empty: usize = trained
            .neural
            .iter()
            .flat_map(|(_, its)| its)
            .map(|it| it.cluster_mse.iter().filter(|m| m.is_none()).count())
            .sum();
        log.note(format!(
            "speaker {speaker} frames {frames} lloyd_steps {lloyd} cell_repairs {repairs} empty_neural_clusters {empty} time {:.3}s",
            ts.elapsed().as_secs_f64()
        ));
        for (b, its) in &trained.neural {
            let mads: Vec<String> = its.iter().map(|i| format_float(i.total_mad)).collect();
            log.note(format!("speaker {speaker} neural b{b} total_mad_by_iteration {}", mads.join(" ")));
        }
        models.push(trained.model);
    }
    log.stage("train", t);

    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let partial = out.join(".models.partial");
    if partial.exists() {
        fs::remove_dir_all(&partial).map_err(|e| Error::io(&partial, e))?;
    }
    let write_all = || -> Result<Vec<PathBuf>> {
        let mut paths = Vec::new();
        for m in &models {
            for &b in &cfg.bits {
                let rel = Path::new(&format!("b{b}")).join(format!("{}.json", m.speaker));
                write_file(&partial.join(&rel), &m.restricted_to(b).to_json())?;
                paths.push(models_dir(out).join(rel));
            }
        }
        let final_dir = models_dir(out);
        if final_dir.exists() {
            fs::remove_dir_all(&final_dir).map_err(|e| Error::io(&final_dir, e))?;
        }
        fs::rename(&partial, &final_dir).map_err(|e| Error::io(&final_dir, e))?;
        Ok(paths)
    };
    let paths = match write_all() {
        Ok(p) => p,
        Err(e) => {
            let _ = fs::remove_dir_all(&partial);
            return Err(e);
        }
    };
    let log_path = out.join("train.log");
    log.note(format!("model_files {}", paths.len()));
    log.write(&log_path)?;
    let arts = RunArtifacts {
        models: paths,
        log: Some(log_path),
        ..Default::default()
    };
    arts.verify()?;
    Ok(arts)
}

/// Loads the models of every speaker at every size in `bits`.
pub fn load_models(out: &Path, speakers: &[String], bits: &BTreeSet<u32>) -> Result<ModelSet> {
    let mut set = ModelSet::new();
    for s in speakers {
        for &b in bits {
            let p = model_path(out, b, s);
            if !p.exists() {
                return Err(Error::MissingModels(format!("{} (run train first)", p.display())));
            }
            let m = SpeakerModel::from_path(&p)?;
            match set.get_mut(s) {
                Some(existing) => existing.merge(m)?,
                None => {
                    set.insert(s.clone(), m);
                }
            }
        }
    }
    Ok(set)
}

/// Accumulated totals of all six measures for one (test sentence, model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub truth: String,
    pub sentence: String,
    pub speaker: String,
    pub n_frames: usize,
    /// M1..M6 totals.
    pub totals: Vec<f64>,
}

impl ScoreRow {
    pub fn mean(&self, kind: MeasureKind) -> f64 {
        self.totals[kind.number() - 1] / self.n_frames as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub bits: u32,
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn compute(tests: &[TestSentence], models: &ModelSet, bits: u32, mode: ResidualMode) -> Result<Self> {
        let mut rows = Vec::with_capacity(tests.len() * models.len());
        for t in tests {
            for m in models.values() {
                rows.push(ScoreRow {
                    truth: t.speaker.clone(),
                    sentence: t.sentence.clone(),
                    speaker: m.speaker.clone(),
                    n_frames: t.frames.len(),
                    totals: all_measure_totals(&t.frames, m.linear(bits)?, mode).to_vec(),
                });
            }
        }
        Ok(Self { bits, rows })
    }

    /// Error rate (%) of single-measure identification; ties go to the
    /// smaller speaker id.
    pub fn error_rate(&self, kind: MeasureKind) -> f64 {
        let k = kind.number() - 1;
        let mut best: BTreeMap<(&str, &str), (&str, f64)> = BTreeMap::new();
        for r in &self.rows {
            let key = (r.truth.as_str(), r.sentence.as_str());
            let v = r.totals[k];
            best.entry(key)
                .and_modify(|b| {
                    if v < b.1 || (v == b.1 && r.speaker.as_str() < b.0) {
                        *b = (r.speaker.as_str(), v);
                    }
                })
                .or_insert((r.speaker.as_str(), v));
        }
        let errors = best.iter().filter(|((truth, _), (pred, _))| truth != pred).count();
        crate::recognition::error_rate(errors, best.len())
    }

    pub fn path(out: &Path, bits: u32) -> PathBuf {
        out.join("scores").join(format!("scores_b{bits}.json"))
    }
}

struct EvalContext {
    tests: Vec<TestSentence>,
    train: BTreeMap<String, Vec<Vec<FrameFeatures>>>,
    models: ModelSet,
}

fn spec_for(cfg: &ExperimentConfig, scheme: Scheme, linear_bits: u32, mlp_bits: u32, iteration: usize) -> SchemeSpec {
    SchemeSpec {
        scheme,
        k: cfg.k,
        alpha: cfg.alpha,
        linear_bits,
        mlp_bits,
        lloyd_iteration: iteration,
        ..SchemeSpec::linear(linear_bits, MeasureKind::M1)
    }
}

/// Runs every configured scheme over the test set and writes error-rate
/// grids, per-cell reports, retained score tables and a log.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let mut log = RunLog::default();
    let out = &cfg.output_dir;
    let t = Instant::now();
    let manifest = CorpusManifest::from_path(&cfg.corpus)?;
    manifest.validate_for_evaluation()?;
    let speakers = manifest.speakers();
    if cfg.schemes.iter().any(|s| matches!(s, Scheme::S2 | Scheme::S3)) && cfg.k > speakers.len() {
        return Err(Error::InvalidConfig(format!(
            "k = {} exceeds the {} enrolled speakers",
            cfg.k,
            speakers.len()
        )));
    }
    let mut needed: BTreeSet<u32> = cfg.bits.iter().copied().collect();
    needed.extend(cfg.neural_bits.iter().copied());
    let models = load_models(out, &speakers, &needed)?;
    for m in models.values() {
        if m.config.frontend != cfg.frontend {
            return Err(Error::InvalidConfig(format!(
                "model {} was trained with a different front-end configuration",
                m.speaker
            )));
        }
    }
    let loaded = load_corpus(&cfg.corpus)?;
    let test_groups = group_by_speaker(&loaded, Role::Test);
    let mut tests = Vec::new();
    for entries in test_groups.values() {
        for l in entries {
            tests.push(TestSentence {
                speaker: l.entry.speaker.clone(),
                sentence: l.entry.sentence.clone(),
                frames: extract_features(&l.utterance.samples, &cfg.frontend)?,
            });
        }
    }
    let needs_train = cfg.alpha == Alpha::Auto && cfg.schemes.iter().any(|s| s.uses_alpha());
    let train = if needs_train {
        analyze_group(&group_by_speaker(&loaded, Role::Train), cfg)?
    } else {
        BTreeMap::new()
    };
    let ctx = EvalContext { tests, train, models };
    log.stage("load", t);

    let mut arts = RunArtifacts::default();
    let mode = ResidualMode::from_config(&cfg.frontend);
    let mut alpha_rows: Vec<Vec<String>> = Vec::new();

    let t = Instant::now();
    let mut tables = BTreeMap::new();
    for &b in &cfg.bits {
        let table = ScoreTable::compute(&ctx.tests, &ctx.models, b, mode)?;
        if cfg.retain_scores {
            let p = ScoreTable::path(out, b);
            write_file(&p, &serde_json::to_string_pretty(&table).expect("scores serialize"))?;
            arts.score_tables.push(p);
        }
        tables.insert(b, table);
    }
    log.stage("score_tables", t);

    for &scheme in &cfg.schemes {
        let t = Instant::now();
        let mut calls = 0u64;
        let mut frames = 0u64;
        let mut run = |spec: SchemeSpec, arts: &mut RunArtifacts, alpha_rows: &mut Vec<Vec<String>>| -> Result<f64> {
            let alpha = match (spec.scheme.uses_alpha(), spec.alpha) {
                (false, _) => 0.0,
                (true, Alpha::Value(a)) => a,
                (true, Alpha::Auto) => {
                    loso_alpha(&ctx.train, &ctx.models, &cfg.train_config(), &spec, cfg.seed, &cfg.alpha_grid)?.alpha
                }
            };
            let rep = evaluate(&ctx.tests, &ctx.models, &spec, alpha)?;
            if spec.scheme.uses_alpha() {
                alpha_rows.push(vec![
                    spec.label(),
                    spec.linear_bits.to_string(),
                    spec.mlp_bits.to_string(),
                    format_float(alpha),
                ]);
            }
            calls += rep.mlp_calls;
            frames += rep.frames;
            let p = report_path(out, &rep);
            write_file(&p, &serde_json::to_string_pretty(&rep).expect("report serializes"))?;
            arts.reports.push(p);
            Ok(rep.error_rate)
        };
        match scheme {
            Scheme::L => {
                let header: Vec<String> = std::iter::once("bits".to_string())
                    .chain(cfg.measures.iter().map(|m| m.to_string()))
                    .collect();
                let rows: Vec<Vec<String>> = cfg
                    .bits
                    .iter()
                    .map(|b| {
                        std::iter::once(b.to_string())
                            .chain(cfg.measures.iter().map(|&m| format_float(tables[b].error_rate(m))))
                            .collect()
                    })
                    .collect();
                let p = out.join("error_rates_L.csv");
                csv::write(&p, &header, &rows)?;
                arts.error_tables.push(p);
            }
            Scheme::LC => {
                let header: Vec<String> = std::iter::once("bits".to_string())
                    .chain(cfg.combinations.iter().map(|(c, r)| format!("{c}+{r}")))
                    .collect();
                let mut rows = Vec::new();
                for &b in &cfg.bits {
                    let mut row = vec![b.to_string()];
                    for &(c, r) in &cfg.combinations {
                        let spec = SchemeSpec {
                            scheme: Scheme::LC,
                            measure: c,
                            residual_measure: r,
                            ..spec_for(cfg, Scheme::LC, b, b, 0)
                        };
                        row.push(format_float(run(spec, &mut arts, &mut alpha_rows)?));
                    }
                    rows.push(row);
                }
                let p = out.join("error_rates_LC.csv");
                csv::write(&p, &header, &rows)?;
                arts.error_tables.push(p);
            }
            Scheme::S1 => {
                let header: Vec<String> = std::iter::once("iteration".to_string())
                    .chain(cfg.neural_bits.iter().map(|b| format!("mlp_b{b}")))
                    .collect();
                let mut rows = Vec::new();
                for it in 0..=cfg.neural.iterations {
                    let mut row = vec![it.to_string()];
                    for &m in &cfg.neural_bits {
                        row.push(format_float(run(spec_for(cfg, Scheme::S1, m, m, it), &mut arts, &mut alpha_rows)?));
                    }
                    rows.push(row);
                }
                let p = out.join("error_rates_S1.csv");
                csv::write(&p, &header, &rows)?;
                arts.error_tables.push(p);
            }
            Scheme::S2 | Scheme::S3 => {
                let header: Vec<String> = std::iter::once("linear_bits".to_string())
                    .chain(cfg.neural_bits.iter().map(|b| format!("mlp_b{b}")))
                    .collect();
                for it in 0..=cfg.neural.iterations {
                    let mut rows = Vec::new();
                    for &l in &cfg.bits {
                        let mut row = vec![l.to_string()];
                        for &m in &cfg.neural_bits {
                            row.push(format_float(run(spec_for(cfg, scheme, l, m, it), &mut arts, &mut alpha_rows)?));
                        }
                        rows.push(row);
                    }
                    let p = out.join(format!("error_rates_{scheme}_it{it}.csv"));
                    csv::write(&p, &header, &rows)?;
                    arts.error_tables.push(p);
                }
            }
        }
        log.stage(&format!("evaluate_{scheme}"), t);
        if scheme.uses_neural() {
            log.note(format!("counter {scheme} mlp_residual_calls {calls} frames_scored {frames}"));
        }
    }
    if !alpha_rows.is_empty() {
        let p = out.join("alphas.csv");
        let header = ["scheme", "linear_bits", "mlp_bits", "alpha"].map(String::from);
        csv::write(&p, &header, &alpha_rows)?;
        arts.alpha_table = Some(p);
    }
    let log_path = out.join("evaluate.log");
    log.write(&log_path)?;
    arts.log = Some(log_path);
    arts.verify()?;
    Ok(arts)
}

fn report_path(out: &Path, rep: &EvaluationReport) -> PathBuf {
    let s = &rep.spec;
    let name = match s.scheme {
        Scheme::L | Scheme::LC => format!("{}_b{}.json", s.label(), s.linear_bits),
        _ => format!("{}_l{}_m{}.json", s.label(), s.linear_bits, s.mlp_bits),
    };
    out.join("reports").join(name.replace('+', "_"))
}

/// Correlation, intra/inter histograms and pairwise scatter data from the
/// retained score tables.
pub fn cmd_export_stats(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    if cfg.bits.is_empty() {
        return Err(Error::InvalidConfig("no codebook sizes configured".into()));
    }
    let out = &cfg.output_dir;
    let mut log = RunLog::default();
    let t = Instant::now();
    let mut arts = RunArtifacts::default();
    let names: Vec<String> = MeasureKind::ALL.iter().map(|m| m.to_string()).collect();
    for &b in &cfg.bits {
        let p = ScoreTable::path(out, b);
        if !p.exists() {
            return Err(Error::MissingScores(format!(
                "{} (run evaluate with retain_scores first)",
                p.display()
            )));
        }
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let table: ScoreTable = serde_json::from_str(&text).map_err(|e| Error::json(&p, e))?;
        let stats = out.join("stats");

        let rows: Vec<Vec<f64>> = table
            .rows
            .iter()
            .map(|r| MeasureKind::ALL.iter().map(|&k| r.mean(k)).collect())
            .collect();
        let corr = correlation_matrix(&rows);
        let header: Vec<String> = std::iter::once("measure".to_string()).chain(names.iter().cloned()).collect();
        let body: Vec<Vec<String>> = corr
            .iter()
            .zip(&names)
            .map(|(row, n)| {
                std::iter::once(n.clone())
                    .chain(row.iter().map(|v| v.map_or_else(|| "NA".to_string(), format_float)))
                    .collect()
            })
            .collect();
        let cp = stats.join(format!("correlation_b{b}.csv"));
        csv::write(&cp, &header, &body)?;
        arts.correlation.push(cp);

        let mut hist_rows = Vec::new();
        for kind in MeasureKind::ALL {
            let scores: Vec<LabeledScore> = table
                .rows
                .iter()
                .map(|r| LabeledScore {
                    truth: r.truth.clone(),
                    speaker: r.speaker.clone(),
                    value: r.mean(kind),
                })
                .collect();
            let h = distortion_histograms(&scores, HISTOGRAM_BINS);
            for (i, bin) in h.bins.iter().enumerate() {
                hist_rows.push(vec![
                    kind.to_string(),
                    i.to_string(),
                    format_float(bin.lo),
                    format_float(bin.hi),
                    bin.intra.to_string(),
                    bin.inter.to_string(),
                ]);
            }
        }
        let hp = stats.join(format!("histogram_b{b}.csv"));
        let header = ["measure", "bin", "lo", "hi", "intra", "inter"].map(String::from);
        csv::write(&hp, &header, &hist_rows)?;
        arts.histograms.push(hp);

        for (i, a) in MeasureKind::ALL.iter().enumerate() {
            for bm in &MeasureKind::ALL[i + 1..] {
                let rows: Vec<Vec<String>> = table
                    .rows
                    .iter()
                    .map(|r| {
                        vec![
                            r.truth.clone(),
                            r.sentence.clone(),
                            r.speaker.clone(),
                            u8::from(r.truth == r.speaker).to_string(),
                            format_float(r.mean(*a)),
                            format_float(r.mean(*bm)),
                        ]
                    })
                    .collect();
                let sp = stats.join(format!("scatter_b{b}")).join(format!("{a}_{bm}.csv"));
                let header = ["truth", "sentence", "speaker", "intra", &a.to_string(), &bm.to_string()].map(String::from);
                csv::write(&sp, &header, &rows)?;
                arts.scatter.push(sp);
            }
        }
    }
    log.stage("export_stats", t);
    let log_path = out.join("export_stats.log");
    log.write(&log_path)?;
    arts.log = Some(log_path);
    arts.verify()?;
    Ok(arts)
}

/// Writes a synthetic corpus (WAV files plus `manifest.json`) under `dir`.
pub fn cmd_synth_corpus(n_speakers: usize, seed: u64, dir: &Path) -> Result<RunArtifacts> {
    let corpus = generate_synthetic_corpus(n_speakers, seed)?;
    for (e, u) in corpus.manifest.entries.iter().zip(&corpus.utterances) {
        let p = dir.join(&e.path);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|err| Error::io(parent, err))?;
        }
        write_wav(&p, TARGET_RATE, &u.samples)?;
    }
    let manifest = dir.join("manifest.json");
    write_file(&manifest, &corpus.manifest.to_json())?;
    let arts = RunArtifacts {
        manifest: Some(manifest),
        ..Default::default()
    };
    arts.verify()?;
    Ok(arts)
}
