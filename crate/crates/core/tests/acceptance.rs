//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Run with `cargo test -p spkid-core --test acceptance`.
//! `SPKID_TIMIT_MANIFEST` points criterion 11 at a TIMIT manifest.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use common::{fft_cepstrum, max_abs_diff, random_frame, random_stable_lpc, toeplitz_solve};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use spkid_core::corpus::{generate_synthetic_corpus, quadratic_ar_signal, Role};
use spkid_core::experiment::{cmd_evaluate, cmd_synth_corpus, cmd_train, ExperimentConfig, ScoreTable};
use spkid_core::frontend::{frame_signal, hamming_window, AnalysisFrame, FrontendConfig};
use spkid_core::lpc::{
    autocorrelate, autocorrelation, inverse_filter_residual, levinson, lpc_to_cepstrum, residual_with_mode,
    FrameFeatures, ResidualMode,
};
use spkid_core::measures::{
    combine_scores, correlation_matrix, default_alpha_grid, residual_measure, MeasureKind,
};
use spkid_core::neural::{
    best_net, build_neural_codebook, lm_train, mlp_residual, multistart_train, MlpPredictor, NeuralConfig, TrainSet,
    INPUTS, N_PARAMS,
};
use spkid_core::recognition::{
    evaluate, identify_linear, identify_scheme1, identify_scheme2, identify_scheme3, loso_alpha, preselect, Alpha,
    ModelSet, Scheme, SchemeSpec, TestSentence, TrainConfig, TrainedSpeaker,
};
use spkid_core::vq::{quantize, Codeword, LinearCodebook};

const CORPUS_SEED: u64 = 7;
const TRAIN_SEED: u64 = 1;
const LINEAR_BITS: u32 = 5;
const MLP_BITS: u32 = 4;
const TIMIT_ENV: &str = "SPKID_TIMIT_MANIFEST";

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

#[derive(Default)]
struct Tally {
    pass: usize,
    fail: usize,
    skip: usize,
}

impl Tally {
    fn run(&mut self, id: &str, title: &str, budget_s: Option<f64>, f: impl FnOnce() -> Verdict) {
        let t = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::Fail(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        let v = match (v, budget_s) {
            (Verdict::Pass(d), Some(b)) if secs > b => Verdict::Fail(format!("{d}; over the {b} s budget")),
            (v, _) => v,
        };
        let (tag, detail) = match v {
            Verdict::Pass(d) => {
                self.pass += 1;
                ("PASS", d)
            }
            Verdict::Fail(d) => {
                self.fail += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => {
                self.skip += 1;
                ("SKIP", d)
            }
        };
        println!("[{tag}] {id:>3} {title} ({secs:.1} s): {detail}");
    }
}

struct Fixture {
    cfg: TrainConfig,
    train: BTreeMap<String, Vec<Vec<FrameFeatures>>>,
    tests: Vec<TestSentence>,
    trained: BTreeMap<String, TrainedSpeaker>,
    models: ModelSet,
    train_secs: f64,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let t = Instant::now();
        let corpus = generate_synthetic_corpus(10, CORPUS_SEED).expect("synthetic corpus");
        let cfg = TrainConfig {
            bits: vec![MLP_BITS, LINEAR_BITS],
            neural_bits: vec![MLP_BITS],
            ..Default::default()
        };
        let mut train: BTreeMap<String, Vec<Vec<FrameFeatures>>> = BTreeMap::new();
        let mut tests = Vec::new();
        for (e, u) in corpus.manifest.entries.iter().zip(&corpus.utterances) {
            let frames = spkid_core::lpc::extract_features(&u.samples, &cfg.frontend).expect("features");
            match e.role {
                Role::Train => train.entry(e.speaker.clone()).or_default().push(frames),
                Role::Test => tests.push(TestSentence {
                    speaker: e.speaker.clone(),
                    sentence: e.sentence.clone(),
                    frames,
                }),
            }
        }
        let trained: BTreeMap<String, TrainedSpeaker> = train
            .iter()
            .map(|(s, sent)| (s.clone(), spkid_core::recognition::train_speaker_frames(s, sent, &cfg, TRAIN_SEED).expect("training")))
            .collect();
        let models = trained.iter().map(|(s, t)| (s.clone(), t.model.clone())).collect();
        Fixture {
            cfg,
            train,
            tests,
            trained,
            models,
            train_secs: t.elapsed().as_secs_f64(),
        }
    })
}

fn score_table() -> &'static ScoreTable {
    static T: OnceLock<ScoreTable> = OnceLock::new();
    T.get_or_init(|| {
        let f = fixture();
        ScoreTable::compute(&f.tests, &f.models, LINEAR_BITS, ResidualMode::Unwindowed).expect("score table")
    })
}

fn non_increasing(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0])
}

fn levinson_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let frame = random_frame(&mut rng, 240);
        let r = autocorrelation(&hamming_window(&frame), 10);
        let m = levinson(&r);
        if m.degenerate || m.regularized {
            return Verdict::Fail("random frame hit a degenerate fit".into());
        }
        worst = worst.max(max_abs_diff(&m.a, &toeplitz_solve(&r)));
    }
    verdict(worst <= 1e-8, format!("200 frames, max |a - a_dense| = {worst:.2e} (tol 1e-8)"))
}

fn cepstrum_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a = random_stable_lpc(&mut rng, 10, 0.95);
        let c = lpc_to_cepstrum(&a, 12);
        worst = worst.max(max_abs_diff(&c, &fft_cepstrum(&a, 12, 1 << 16)));
    }
    verdict(worst <= 1e-6, format!("100 models, 12 coefficients, max diff = {worst:.2e} (tol 1e-6)"))
}

fn vq_monotonicity() -> Verdict {
    let f = fixture();
    let mut stages = 0;
    let mut bad = Vec::new();
    for (s, t) in &f.trained {
        let sizes: Vec<usize> = t.stages.iter().map(|st| st.size).collect();
        let doubling = sizes.iter().enumerate().all(|(i, &n)| n == 2 << i);
        let sizes_ok = f.cfg.bits.iter().all(|&b| t.model.linear(b).map(|cb| cb.size() == 1 << b).unwrap_or(false));
        if !doubling || !sizes_ok {
            bad.push(format!("{s}: sizes {sizes:?}"));
        }
        for (i, st) in t.stages.iter().enumerate() {
            stages += 1;
            if !st.is_monotone(1e-12) {
                bad.push(format!("{s} stage {i}: {:?}", st.distortions));
            }
        }
    }
    if bad.is_empty() {
        Verdict::Pass(format!("{stages} splitting stages over {} speakers, sizes 2..32 doubling", f.trained.len()))
    } else {
        Verdict::Fail(bad.join("; "))
    }
}

fn random_codebook(rng: &mut ChaCha8Rng, size: usize, dim: usize) -> LinearCodebook {
    LinearCodebook {
        bits: 0,
        codewords: (0..size)
            .map(|_| Codeword {
                lpcc: (0..dim).map(|_| rng.sample(StandardNormal)).collect(),
                lpc: vec![0.0; 10],
                population: 1,
            })
            .collect(),
        training_distortion: 0.0,
        degenerate: false,
    }
}

fn scan(v: &[f64], cb: &LinearCodebook, kind: MeasureKind) -> (usize, f64) {
    let n = v.len() as f64;
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, c) in cb.codewords.iter().enumerate() {
        let d = match kind {
            MeasureKind::M2 => v.iter().zip(&c.lpcc).map(|(a, b)| (a - b).abs()).sum::<f64>() / n,
            _ => v.iter().zip(&c.lpcc).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n,
        };
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn quantizer() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut mismatches = 0;
    for i in 0..1000 {
        let size = rng.gen_range(1..=128);
        let cb = random_codebook(&mut rng, size, 12);
        let v: Vec<f64> = (0..12).map(|_| rng.sample(StandardNormal)).collect();
        let kind = if i % 2 == 0 { MeasureKind::M1 } else { MeasureKind::M2 };
        if quantize(&v, &cb, kind).unwrap() != scan(&v, &cb, kind) {
            mismatches += 1;
        }
    }
    // constructed ties: duplicated codewords and a point equidistant from two
    let mut ties_ok = true;
    for kind in [MeasureKind::M1, MeasureKind::M2] {
        let mut cb = random_codebook(&mut rng, 8, 12);
        let v: Vec<f64> = (0..12).map(|_| rng.sample(StandardNormal)).collect();
        cb.codewords[2].lpcc = v.iter().map(|x| x + 0.01).collect();
        cb.codewords[5].lpcc = cb.codewords[2].lpcc.clone();
        ties_ok &= quantize(&v, &cb, kind).unwrap().0 == 2;
        let mut sym = random_codebook(&mut rng, 4, 12);
        let mut e = vec![0.0; 12];
        e[3] = 1.0;
        sym.codewords[1].lpcc = e.iter().map(|x| 1e-3 * x).collect();
        sym.codewords[3].lpcc = e.iter().map(|x| -1e-3 * x).collect();
        ties_ok &= quantize(&vec![0.0; 12], &sym, kind).unwrap().0 == 1;
    }
    verdict(
        mismatches == 0 && ties_ok,
        format!("{mismatches}/1000 mismatches vs exhaustive scan; constructed ties to lowest index: {ties_ok}"),
    )
}

fn measure_identities() -> Verdict {
    let f = fixture();
    let mut n_res = 0usize;
    let mut m6_gt_m3 = 0usize;
    let mut worst_zero_mean = 0.0f64;
    let mut e = Vec::new();
    let mut check = |e: &[f64]| {
        n_res += 1;
        let m3 = residual_measure(MeasureKind::M3, e);
        if residual_measure(MeasureKind::M6, e) > m3 {
            m6_gt_m3 += 1;
        }
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        let centred: Vec<f64> = e.iter().map(|v| v - mean).collect();
        let d = (residual_measure(MeasureKind::M6, &centred) - residual_measure(MeasureKind::M3, &centred)).abs();
        worst_zero_mean = worst_zero_mean.max(d);
    };
    for t in &f.tests {
        let m = &f.models[&t.speaker];
        let cb = m.linear(LINEAR_BITS).unwrap();
        let nets = &m.neural(MLP_BITS, 0).unwrap().nets;
        for fr in &t.frames {
            for cw in &cb.codewords {
                residual_with_mode(&fr.frame, &cw.lpc, ResidualMode::Unwindowed, &mut e);
                check(&e);
            }
            let (i, _) = best_net(&fr.frame, nets);
            check(&mlp_residual(&fr.frame, &nets[i]).0);
        }
    }

    // alpha = 0 ranking against the coefficient-only ranking, every pair
    let table = score_table();
    let mut groups: BTreeMap<(&str, &str), Vec<(&str, &[f64])>> = BTreeMap::new();
    for r in &table.rows {
        groups.entry((r.truth.as_str(), r.sentence.as_str())).or_default().push((r.speaker.as_str(), &r.totals));
    }
    let mut rank_mismatch = 0;
    for rows in groups.values() {
        for c in [MeasureKind::M1, MeasureKind::M2] {
            for res in [MeasureKind::M3, MeasureKind::M4, MeasureKind::M5, MeasureKind::M6] {
                let rank = |score: &dyn Fn(&[f64]) -> f64| {
                    let mut v: Vec<(f64, &str)> = rows.iter().map(|(s, t)| (score(t), *s)).collect();
                    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
                    v.into_iter().map(|(_, s)| s).collect::<Vec<_>>()
                };
                let ci = c.number() - 1;
                let ri = res.number() - 1;
                let plain = rank(&|t| t[ci]);
                let fused = rank(&|t| combine_scores(t[ci], t[ri], 0.0).unwrap());
                if plain != fused {
                    rank_mismatch += 1;
                }
            }
        }
    }
    verdict(
        m6_gt_m3 == 0 && worst_zero_mean <= 1e-12 && rank_mismatch == 0,
        format!(
            "{n_res} residuals, M6 > M3 in {m6_gt_m3}; zero-mean |M6 - M3| max {worst_zero_mean:.1e}; \
             alpha=0 ranking mismatches {rank_mismatch}/{}",
            groups.len() * 8
        ),
    )
}

fn scheme_degeneracies() -> Verdict {
    let f = fixture();
    let n = f.models.len();
    let mut bad = Vec::new();
    for t in &f.tests {
        let s1 = identify_scheme1(&t.frames, &f.models, MLP_BITS, 0).unwrap();
        let s2n = identify_scheme2(&t.frames, &f.models, LINEAR_BITS, MLP_BITS, 0, n).unwrap();
        if s1.predicted != s2n.predicted {
            bad.push(format!("{}: S2(K=N) {} vs S1 {}", t.sentence, s2n.predicted, s1.predicted));
        }
        let lin = identify_linear(&t.frames, &f.models, LINEAR_BITS, MeasureKind::M1).unwrap();
        let s21 = identify_scheme2(&t.frames, &f.models, LINEAR_BITS, MLP_BITS, 0, 1).unwrap();
        if s21.predicted != lin.predicted {
            bad.push(format!("{}: S2(K=1) {} vs L {}", t.sentence, s21.predicted, lin.predicted));
        }
        for k in [2, 3] {
            let s3 = identify_scheme3(&t.frames, &f.models, LINEAR_BITS, MLP_BITS, 0, k, 0.0).unwrap();
            let (short, scores) = preselect(&t.frames, &f.models, LINEAR_BITS, k).unwrap();
            let best = short
                .iter()
                .min_by(|a, b| scores[*a].total_cmp(&scores[*b]).then(a.cmp(b)))
                .unwrap();
            if &s3.predicted != best {
                bad.push(format!("{}: S3(alpha=0,K={k}) {} vs {}", t.sentence, s3.predicted, best));
            }
        }
    }
    if bad.is_empty() {
        Verdict::Pass(format!("{} test sentences, all four equivalences hold exactly", f.tests.len()))
    } else {
        Verdict::Fail(bad.join("; "))
    }
}

fn gradient_and_traces() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let net = MlpPredictor::random(&mut rng);
        let x: [f64; INPUTS] = std::array::from_fn(|_| rng.gen_range(-1.5..1.5));
        let mut g = [0.0; N_PARAMS];
        net.forward_with_gradient(&x, &mut g);
        for i in 0..N_PARAMS {
            let h = 1e-6;
            let mut p = *net.params();
            p[i] += h;
            let up = MlpPredictor::from_params(&p).unwrap().forward(&x);
            p[i] -= 2.0 * h;
            let down = MlpPredictor::from_params(&p).unwrap().forward(&x);
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-3));
        }
    }

    let f = fixture();
    let mut traces = 0;
    let mut rising = 0;
    for t in f.trained.values() {
        for (_, its) in &t.neural {
            for it in its {
                for tr in &it.traces {
                    traces += 1;
                    rising += usize::from(!non_increasing(tr));
                }
            }
        }
    }
    let series = quadratic_ar_signal(3000, 70);
    let data = TrainSet::from_series(&series);
    for s in 0..20u64 {
        let net = MlpPredictor::random(&mut ChaCha8Rng::seed_from_u64(s));
        let out = lm_train(&net, &data, 15, &NeuralConfig::default());
        traces += 1;
        rising += usize::from(!non_increasing(&out.mse_trace));
    }
    verdict(
        worst <= 1e-5 && rising == 0,
        format!("20 nets x {N_PARAMS} params, max relative gradient error {worst:.1e} (tol 1e-5); {rising}/{traces} LM traces rise"),
    )
}

fn pooled_gain(frames: &[AnalysisFrame], mut residual: impl FnMut(&AnalysisFrame) -> Vec<f64>) -> f64 {
    let (mut es, mut ee) = (0.0, 0.0);
    for fr in frames {
        es += fr.samples().iter().map(|v| v * v).sum::<f64>();
        ee += residual(fr).iter().map(|v| v * v).sum::<f64>();
    }
    10.0 * (es / ee).log10()
}

fn nonlinear_advantage() -> Verdict {
    let train = quadratic_ar_signal(16_000, 81);
    let test = quadratic_ar_signal(16_000, 82);
    let fe = FrontendConfig::default();
    let frames = frame_signal(&test, &fe).unwrap();

    let lpc_gain = pooled_gain(&frames, |fr| {
        let m = levinson(&autocorrelate(fr, fe.lpc_order));
        inverse_filter_residual(fr, &m.a)
    });

    let cfg = NeuralConfig {
        epochs: 60,
        ..Default::default()
    };
    let data = TrainSet::from_series(&train);
    let out = multistart_train(&data, None, 83, &cfg);
    let traces_ok = out.candidates.iter().all(|c| non_increasing(&c.outcome.mse_trace));
    let mlp_gain = pooled_gain(&frames, |fr| mlp_residual(fr, &out.net).0);

    // references: least-squares order-10 predictor fitted to the whole
    // training signal, and the generating recursion itself
    let n = data.len();
    let x = DMatrix::from_fn(n, INPUTS, |i, j| data.inputs[i][j]);
    let y = DVector::from_column_slice(&data.targets);
    let a: Vec<f64> = (x.transpose() * &x).lu().solve(&(x.transpose() * y)).unwrap().iter().copied().collect();
    let ls_gain = pooled_gain(&frames, |fr| inverse_filter_residual(fr, &a));
    let true_gain = pooled_gain(&frames, |fr| {
        let s = fr.samples();
        (0..s.len())
            .map(|k| {
                let x1 = fr.at(k as isize - 1);
                let x2 = fr.at(k as isize - 2);
                s[k] - (0.5 * x1 - 0.3 * x1 * x2 + 1.0)
            })
            .collect()
    });
    let adv = mlp_gain - lpc_gain;
    verdict(
        adv >= 1.0 && traces_ok,
        format!(
            "held-out gain MLP {mlp_gain:.2} dB vs frame LPC {lpc_gain:.2} dB: advantage {adv:.2} dB (need >= 1); \
             references: global LS linear {ls_gain:.2} dB, generating recursion {true_gain:.2} dB; \
             LM traces non-increasing: {traces_ok}"
        ),
    )
}

fn end_to_end() -> Verdict {
    let f = fixture();
    let lin = evaluate(&f.tests, &f.models, &SchemeSpec::linear(LINEAR_BITS, MeasureKind::M1), 0.0).unwrap();
    let spec = SchemeSpec {
        scheme: Scheme::S3,
        k: 2,
        alpha: Alpha::Auto,
        mlp_bits: MLP_BITS,
        ..SchemeSpec::linear(LINEAR_BITS, MeasureKind::M1)
    };
    let t = Instant::now();
    let sel = loso_alpha(&f.train, &f.models, &f.cfg, &spec, TRAIN_SEED, &default_alpha_grid()).unwrap();
    let loso_secs = t.elapsed().as_secs_f64();
    let s3 = evaluate(&f.tests, &f.models, &spec, sel.alpha).unwrap();
    verdict(
        lin.n_errors == 0 && s3.error_rate <= lin.error_rate,
        format!(
            "10 speakers, {} test sentences: L/M1 {}-bit error {}%, S3 (K=2, {MLP_BITS}-bit nets, alpha {} by \
             leave-one-out in {loso_secs:.0} s) error {}%; fixture training {:.0} s",
            f.tests.len(),
            LINEAR_BITS,
            lin.error_rate,
            sel.alpha,
            s3.error_rate,
            f.train_secs
        ),
    )
}

fn lloyd_trend() -> Verdict {
    let f = fixture();
    let speaker = "spk00";
    let frames: Vec<FrameFeatures> = f.train[speaker].iter().flatten().cloned().collect();
    let cb = f.models[speaker].linear(MLP_BITS).unwrap();
    let mut improved = 0;
    let mut traces_ok = true;
    let mut detail = Vec::new();
    for seed in 0..5u64 {
        let its = build_neural_codebook(&frames, cb, 3, 900 + seed, &NeuralConfig::default()).unwrap();
        let (m0, m3) = (its[0].total_mad, its[3].total_mad);
        improved += usize::from(m3 <= m0);
        traces_ok &= its.iter().flat_map(|i| &i.traces).all(|t| non_increasing(t));
        detail.push(format!("{m0:.4}->{m3:.4}"));
    }
    verdict(
        improved >= 4 && traces_ok,
        format!("{improved}/5 seeds with MAD(it3) <= MAD(it0) [{}]; LM traces non-increasing: {traces_ok}", detail.join(", ")),
    )
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn timit() -> Verdict {
    let Some(manifest) = std::env::var_os(TIMIT_ENV).filter(|v| !v.is_empty()) else {
        return Verdict::Skip(format!("{TIMIT_ENV} not set"));
    };
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        corpus: PathBuf::from(manifest),
        output_dir: dir.path().to_path_buf(),
        bits: vec![4, 5, 6, 7],
        neural_bits: vec![4, 5, 6, 7],
        schemes: vec![Scheme::L, Scheme::LC, Scheme::S3],
        combinations: vec![(MeasureKind::M2, MeasureKind::M3)],
        ..Default::default()
    };
    cmd_train(&cfg).unwrap();
    cmd_evaluate(&cfg).unwrap();
    let l = read_csv(&dir.path().join("error_rates_L.csv"));
    let lc = read_csv(&dir.path().join("error_rates_LC.csv"));
    let s3 = read_csv(&dir.path().join("error_rates_S3_it0.csv"));
    let m1 = l[0].iter().position(|h| h == "M1").unwrap();
    let target = [10.0, 6.84, 6.31, 3.68];
    let l_rates: Vec<f64> = l[1..].iter().map(|r| r[m1].parse().unwrap()).collect();
    let lc_rates: Vec<f64> = lc[1..].iter().map(|r| r[1].parse().unwrap()).collect();
    let within = l_rates.iter().zip(target).all(|(r, t)| (r - t).abs() <= 2.0);
    let lc_ok = (1..4).all(|i| lc_rates[i] <= l_rates[i]);
    let s3_best = s3[1..].iter().flat_map(|r| r[1..].iter().map(|v| v.parse::<f64>().unwrap())).fold(f64::INFINITY, f64::min);
    let l_best = l_rates.iter().copied().fold(f64::INFINITY, f64::min);
    verdict(
        within && lc_ok && s3_best <= l_best,
        format!("L/M1 {l_rates:?} vs {target:?} (+-2 pp); LC M2+M3 {lc_rates:?}; best S3 {s3_best} vs best L {l_best}"),
    )
}

fn collect_files(root: &Path, out: &mut Vec<PathBuf>) {
    for e in fs::read_dir(root).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            collect_files(&p, out);
        } else {
            out.push(p);
        }
    }
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    cmd_synth_corpus(3, 12, &corpus).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let cfg = ExperimentConfig {
            corpus: corpus.join("manifest.json"),
            output_dir: out.clone(),
            seed: 5,
            bits: vec![3, 4],
            neural_bits: vec![3],
            neural: NeuralConfig {
                epochs: 2,
                random_starts: 1,
                iterations: 1,
                ..Default::default()
            },
            schemes: vec![Scheme::L, Scheme::LC, Scheme::S1, Scheme::S2, Scheme::S3],
            ..Default::default()
        };
        cmd_train(&cfg).unwrap();
        cmd_evaluate(&cfg).unwrap();
        spkid_core::experiment::cmd_export_stats(&cfg).unwrap();
        let mut files = Vec::new();
        collect_files(&out, &mut files);
        let mut map = BTreeMap::new();
        for p in files {
            let rel = p.strip_prefix(&out).unwrap().to_path_buf();
            // logs carry wall-clock stage times
            if rel.extension().is_some_and(|e| e == "log") {
                continue;
            }
            map.insert(rel, fs::read(&p).unwrap());
        }
        map
    };
    let a = run("a");
    let b = run("b");
    let models = a.keys().filter(|p| p.starts_with("models")).count();
    let csvs = a.keys().filter(|p| p.extension().is_some_and(|e| e == "csv")).count();
    let differing: Vec<String> = a
        .keys()
        .chain(b.keys())
        .filter(|k| a.get(*k) != b.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    verdict(
        differing.is_empty() && models > 0 && csvs > 0,
        format!("{} files compared ({models} model files, {csvs} CSV); differing: {differing:?}", a.len()),
    )
}

fn correlation_structure() -> Verdict {
    let table = score_table();
    let rows: Vec<Vec<f64>> = table
        .rows
        .iter()
        .map(|r| MeasureKind::ALL.iter().map(|&k| r.mean(k)).collect())
        .collect();
    let rho = correlation_matrix(&rows);
    let get = |i: usize, j: usize| rho[i][j].unwrap_or(f64::NAN);
    let cross: Vec<f64> = (0..2).flat_map(|i| (2..6).map(move |j| (i, j))).map(|(i, j)| get(i, j)).collect();
    let mut within = vec![get(0, 1)];
    for i in 2..6 {
        for j in i + 1..6 {
            within.push(get(i, j));
        }
    }
    let max_cross = cross.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_within = within.iter().copied().fold(f64::INFINITY, f64::min);
    verdict(
        max_cross < min_within,
        format!("max coefficient-vs-residual rho {max_cross:.3} vs min within-family rho {min_within:.3}"),
    )
}

fn main() {
    let mut tally = Tally::default();
    println!("acceptance suite");
    tally.run("1", "Levinson vs dense Toeplitz solve", Some(10.0), levinson_oracle);
    tally.run("2", "cepstrum recursion vs FFT log spectrum", Some(10.0), cepstrum_oracle);
    tally.run("-", "fixture: train 10 synthetic speakers", None, || {
        let f = fixture();
        Verdict::Pass(format!("{} models, {} test sentences", f.models.len(), f.tests.len()))
    });
    tally.run("3", "VQ distortion monotone, sizes double", None, vq_monotonicity);
    tally.run("4", "quantize vs exhaustive scan, ties", None, quantizer);
    tally.run("5", "measure identities", None, measure_identities);
    tally.run("6", "scheme degeneracies", None, scheme_degeneracies);
    tally.run("7", "MLP gradient check, LM traces", None, gradient_and_traces);
    tally.run("8", "nonlinear prediction advantage", Some(120.0), nonlinear_advantage);
    let budget = 600.0 - fixture().train_secs;
    tally.run("9", "end-to-end synthetic identification", Some(budget), end_to_end);
    tally.run("10", "generalized Lloyd trend", None, lloyd_trend);
    tally.run("11", "TIMIT reproduction", None, timit);
    tally.run("12", "determinism of a full run", None, determinism);
    tally.run("inv", "correlation structure across measure families", None, correlation_structure);
    println!(
        "acceptance: {} passed, {} failed, {} skipped",
        tally.pass, tally.fail, tally.skip
    );
    if tally.fail > 0 {
        std::process::exit(1);
    }
}
