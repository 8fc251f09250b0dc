//! Per-speaker LPCC codebooks trained by binary splitting and Lloyd
//! refinement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{coefficient_distance, MeasureKind};

/// Rule used to split one centroid into two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMethod {
    /// centroid ± ε σ, σ the per-dimension standard deviation of the cluster.
    StdDeviation,
    /// centroid ± ε √λ₁ v₁ along the dominant covariance eigenvector.
    Hyperplane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codeword {
    pub lpcc: Vec<f64>,
    /// Mean LPC vector of the training frames assigned to this codeword;
    /// used as the inverse filter for residual measures.
    pub lpc: Vec<f64>,
    pub population: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCodebook {
    pub bits: u32,
    pub codewords: Vec<Codeword>,
    pub training_distortion: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl LinearCodebook {
    pub fn size(&self) -> usize {
        self.codewords.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VqConfig {
    pub epsilon: f64,
    /// Stop Lloyd when the relative distortion decrease drops below this.
    pub rel_tol: f64,
    pub max_iters: usize,
}

impl Default for VqConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            rel_tol: 1e-4,
            max_iters: 50,
        }
    }
}

/// Distortion history of one splitting stage.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StageTrace {
    pub size: usize,
    /// Mean distortion after each assignment step.
    pub distortions: Vec<f64>,
    /// `repaired[i]` is set when the update that preceded assignment `i`
    /// re-seeded an empty cell.
    pub repaired: Vec<bool>,
}

impl StageTrace {
    /// True when distortion never rises by more than `rel_tol` (relative)
    /// between consecutive assignments, ignoring steps that followed a repair.
    pub fn is_monotone(&self, rel_tol: f64) -> bool {
        self.distortions
            .windows(2)
            .zip(&self.repaired[1..])
            .all(|(w, &rep)| rep || w[1] <= w[0] + rel_tol * w[0].abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedCodebooks {
    /// One codebook per requested size, in the order requested.
    pub codebooks: Vec<LinearCodebook>,
    pub stages: Vec<StageTrace>,
}

/// Nearest codeword under a coefficient measure (M1 or M2); ties go to the
/// lowest index.
pub fn quantize(v: &[f64], cb: &LinearCodebook, metric: MeasureKind) -> Result<(usize, f64)> {
    if !metric.is_coefficient() {
        return Err(Error::InvalidArgument(format!(
            "{metric} is not a coefficient-domain measure"
        )));
    }
    Ok(nearest(v, cb.codewords.iter().map(|c| c.lpcc.as_slice()), metric))
}

fn nearest<'a>(
    v: &[f64],
    centroids: impl Iterator<Item = &'a [f64]>,
    metric: MeasureKind,
) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.enumerate() {
        let d = coefficient_distance(metric, v, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn mean_of<'a>(dim: usize, rows: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    let mut n = 0usize;
    for r in rows {
        sum.iter_mut().zip(r).for_each(|(s, v)| *s += v);
        n += 1;
    }
    if n > 0 {
        sum.iter_mut().for_each(|s| *s /= n as f64);
    }
    sum
}

/// Per-dimension split: children = centroid ± ε σ.
pub fn split_stddev(centroid: &[f64], assigned: &[&[f64]], epsilon: f64) -> (Vec<f64>, Vec<f64>) {
    let d = centroid.len();
    let n = assigned.len().max(1) as f64;
    let mut sigma = vec![0.0; d];
    for v in assigned {
        for j in 0..d {
            let dv = v[j] - centroid[j];
            sigma[j] += dv * dv;
        }
    }
    sigma.iter_mut().for_each(|s| *s = (*s / n).sqrt());
    if sigma.iter().all(|&s| s == 0.0) {
        sigma[0] = 1e-4;
    }
    let plus = centroid.iter().zip(&sigma).map(|(c, s)| c + epsilon * s).collect();
    let minus = centroid.iter().zip(&sigma).map(|(c, s)| c - epsilon * s).collect();
    (plus, minus)
}

/// Population covariance of `assigned` around its own mean.
fn covariance(assigned: &[&[f64]], d: usize) -> Vec<Vec<f64>> {
    let mean = mean_of(d, assigned.iter().copied());
    let n = assigned.len() as f64;
    let mut cov = vec![vec![0.0; d]; d];
    for v in assigned {
        for i in 0..d {
            let di = v[i] - mean[i];
            for j in i..d {
                cov[i][j] += di * (v[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= n;
            cov[j][i] = cov[i][j];
        }
    }
    cov
}

/// Dominant eigenpair of a symmetric PSD matrix by power iteration.
///
/// Starts from the column with the largest norm; the sign is fixed so the
/// largest-magnitude component is positive. Returns `None` for a zero matrix.
pub fn dominant_eigenpair(m: &[Vec<f64>]) -> Option<(f64, Vec<f64>)> {
    const ITERS: usize = 100;
    const TOL: f64 = 1e-10;
    let d = m.len();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let matvec = |v: &[f64]| -> Vec<f64> {
        m.iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    };
    let start = (0..d)
        .map(|j| m.iter().map(|row| row[j]).collect::<Vec<f64>>())
        .fold((0.0, vec![0.0; d]), |best, col| {
            let n = norm(&col);
            if n > best.0 {
                (n, col)
            } else {
                best
            }
        });
    if start.0 == 0.0 {
        return None;
    }
    let mut v: Vec<f64> = start.1.iter().map(|x| x / start.0).collect();
    for _ in 0..ITERS {
        let w = matvec(&v);
        let n = norm(&w);
        if n == 0.0 {
            break;
        }
        let w: Vec<f64> = w.iter().map(|x| x / n).collect();
        let delta = norm(&w.iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>());
        v = w;
        if delta < TOL {
            break;
        }
    }
    let (imax, _) = v
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |b, (i, x)| if x.abs() > b.1 { (i, x.abs()) } else { b });
    if v[imax] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let lambda: f64 = matvec(&v).iter().zip(&v).map(|(a, b)| a * b).sum();
    Some((lambda.max(0.0), v))
}

/// Principal-axis split: children = centroid ± ε √λ₁ v₁. Falls back to
/// [`split_stddev`] for fewer than two members or a zero covariance.
pub fn split_hyperplane(
    centroid: &[f64],
    assigned: &[&[f64]],
    epsilon: f64,
) -> (Vec<f64>, Vec<f64>) {
    if assigned.len() < 2 {
        return split_stddev(centroid, assigned, epsilon);
    }
    let cov = covariance(assigned, centroid.len());
    match dominant_eigenpair(&cov) {
        Some((lambda, v)) if lambda > 0.0 => {
            let step = epsilon * lambda.sqrt();
            let plus = centroid.iter().zip(&v).map(|(c, x)| c + step * x).collect();
            let minus = centroid.iter().zip(&v).map(|(c, x)| c - step * x).collect();
            (plus, minus)
        }
        _ => split_stddev(centroid, assigned, epsilon),
    }
}

/// One nearest-centroid assignment plus centroid update.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydStep {
    /// Centroids after the mean update (and any repair).
    pub centroids: Vec<Vec<f64>>,
    /// Assignment under the input centroids.
    pub assignment: Vec<usize>,
    /// Mean distortion of `assignment` under the input centroids.
    pub distortion: f64,
    pub repaired: bool,
}

fn assign(vectors: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    vectors
        .iter()
        .map(|v| nearest(v, centroids.iter().map(Vec::as_slice), MeasureKind::M1))
        .unzip()
}

/// Assigns every vector to its nearest centroid (MSE over LPCC), then moves
/// each centroid to its cluster mean. An empty cell is re-seeded at the
/// vector farthest from its centroid within the highest-distortion cluster.
pub fn lloyd_iterate(centroids: &[Vec<f64>], vectors: &[Vec<f64>]) -> LloydStep {
    let (mut assignment, mut dist) = assign(vectors, centroids);
    let distortion = dist.iter().sum::<f64>() / vectors.len().max(1) as f64;
    let k = centroids.len();
    let d = centroids.first().map_or(0, Vec::len);
    let mut counts = vec![0usize; k];
    assignment.iter().for_each(|&a| counts[a] += 1);

    let mut next: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            if counts[c] == 0 {
                centroids[c].clone()
            } else {
                mean_of(
                    d,
                    vectors
                        .iter()
                        .zip(&assignment)
                        .filter(|(_, &a)| a == c)
                        .map(|(v, _)| v.as_slice()),
                )
            }
        })
        .collect();

    let mut repaired = false;
    for empty in 0..k {
        if counts[empty] != 0 {
            continue;
        }
        let mut cluster_cost = vec![0.0; k];
        for (&a, &dv) in assignment.iter().zip(&dist) {
            cluster_cost[a] += dv;
        }
        let worst = (0..k)
            .filter(|&c| counts[c] > 1)
            .fold(None, |best: Option<usize>, c| match best {
                Some(b) if cluster_cost[b] >= cluster_cost[c] => Some(b),
                _ => Some(c),
            });
        let Some(worst) = worst else { break };
        let far = (0..vectors.len())
            .filter(|&i| assignment[i] == worst)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if dist[b] >= dist[i] => Some(b),
                _ => Some(i),
            })
            .expect("cluster with members");
        next[empty] = vectors[far].clone();
        assignment[far] = empty;
        dist[far] = 0.0;
        counts[worst] -= 1;
        counts[empty] = 1;
        repaired = true;
    }
    if repaired {
        // refresh the means of clusters that donated a vector
        for c in 0..k {
            if counts[c] > 1 {
                next[c] = mean_of(
                    d,
                    vectors
                        .iter()
                        .zip(&assignment)
                        .filter(|(_, &a)| a == c)
                        .map(|(v, _)| v.as_slice()),
                );
            }
        }
    }
    LloydStep {
        centroids: next,
        assignment,
        distortion,
        repaired,
    }
}

struct LloydOutcome {
    centroids: Vec<Vec<f64>>,
    assignment: Vec<usize>,
    distortion: f64,
    trace: StageTrace,
}

fn run_lloyd(vectors: &[Vec<f64>], init: Vec<Vec<f64>>, cfg: &VqConfig) -> LloydOutcome {
    let mut centroids = init;
    let mut trace = StageTrace {
        size: centroids.len(),
        ..Default::default()
    };
    let mut pending_repair = false;
    for _ in 0..cfg.max_iters {
        let (assignment, dist) = assign(vectors, &centroids);
        let distortion = dist.iter().sum::<f64>() / vectors.len() as f64;
        trace.distortions.push(distortion);
        trace.repaired.push(pending_repair);
        let mut counts = vec![0usize; centroids.len()];
        assignment.iter().for_each(|&a| counts[a] += 1);
        let has_empty = counts.contains(&0);
        if let [.., prev, last] = trace.distortions[..] {
            let converged = prev <= 0.0 || (prev - last) / prev < cfg.rel_tol;
            if converged && !has_empty {
                return LloydOutcome {
                    centroids,
                    assignment,
                    distortion,
                    trace,
                };
            }
        }
        let step = lloyd_iterate(&centroids, vectors);
        pending_repair = step.repaired;
        centroids = step.centroids;
    }
    let (assignment, dist) = assign(vectors, &centroids);
    let distortion = dist.iter().sum::<f64>() / vectors.len() as f64;
    trace.distortions.push(distortion);
    trace.repaired.push(pending_repair);
    LloydOutcome {
        centroids,
        assignment,
        distortion,
        trace,
    }
}

fn snapshot(
    bits: u32,
    centroids: &[Vec<f64>],
    assignment: &[usize],
    companions: &[Vec<f64>],
    distortion: f64,
    degenerate: bool,
) -> LinearCodebook {
    let p = companions.first().map_or(0, Vec::len);
    let codewords = centroids
        .iter()
        .enumerate()
        .map(|(c, centroid)| {
            let members = assignment.iter().filter(|&&a| a == c).count();
            let lpc = mean_of(
                p,
                companions
                    .iter()
                    .zip(assignment)
                    .filter(|(_, &a)| a == c)
                    .map(|(v, _)| v.as_slice()),
            );
            Codeword {
                lpcc: centroid.clone(),
                lpc,
                population: members,
            }
        })
        .collect();
    LinearCodebook {
        bits,
        codewords,
        training_distortion: distortion,
        degenerate,
    }
}

/// Trains codebooks of every size in `bits_list` in one splitting run.
///
/// `vectors` are LPCC vectors and `companions` the LPC vectors of the same
/// frames. Starting from the global centroid, each stage doubles the
/// codebook and refines it with Lloyd iterations; the codebook after stage
/// `b` is the `b`-bit result.
pub fn train_codebooks(
    vectors: &[Vec<f64>],
    companions: &[Vec<f64>],
    bits_list: &[u32],
    method: SplitMethod,
    cfg: &VqConfig,
) -> Result<TrainedCodebooks> {
    let max_bits = *bits_list
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidArgument("no codebook sizes requested".into()))?;
    if max_bits > 16 {
        return Err(Error::InvalidArgument(format!("{max_bits} bits is too large")));
    }
    if vectors.len() != companions.len() {
        return Err(Error::InvalidArgument(
            "vectors and companions differ in length".into(),
        ));
    }
    if vectors.len() < 1 << max_bits {
        return Err(Error::InsufficientData(format!(
            "{} vectors for a {}-codeword codebook",
            vectors.len(),
            1usize << max_bits
        )));
    }
    if cfg.epsilon <= 0.0 {
        return Err(Error::InvalidArgument("split epsilon must be positive".into()));
    }

    let d = vectors[0].len();
    let all_same = vectors.iter().all(|v| v == &vectors[0]);
    let mut stages = Vec::new();
    let mut by_bits = Vec::new();

    let mut centroids = vec![mean_of(d, vectors.iter().map(Vec::as_slice))];
    let mut assignment = vec![0usize; vectors.len()];
    let mut distortion = vectors
        .iter()
        .map(|v| coefficient_distance(MeasureKind::M1, v, &centroids[0]))
        .sum::<f64>()
        / vectors.len() as f64;
    if bits_list.contains(&0) {
        by_bits.push((0, snapshot(0, &centroids, &assignment, companions, distortion, all_same)));
    }

    for stage in 1..=max_bits {
        if all_same {
            centroids = vec![vectors[0].clone(); 1 << stage];
            stages.push(StageTrace {
                size: centroids.len(),
                distortions: vec![0.0],
                repaired: vec![false],
            });
        } else {
            let mut split = Vec::with_capacity(centroids.len() * 2);
            for (c, centroid) in centroids.iter().enumerate() {
                let members: Vec<&[f64]> = vectors
                    .iter()
                    .zip(&assignment)
                    .filter(|(_, &a)| a == c)
                    .map(|(v, _)| v.as_slice())
                    .collect();
                let (plus, minus) = match method {
                    SplitMethod::StdDeviation => split_stddev(centroid, &members, cfg.epsilon),
                    SplitMethod::Hyperplane => split_hyperplane(centroid, &members, cfg.epsilon),
                };
                split.push(plus);
                split.push(minus);
            }
            let out = run_lloyd(vectors, split, cfg);
            centroids = out.centroids;
            assignment = out.assignment;
            distortion = out.distortion;
            stages.push(out.trace);
        }
        if all_same {
            distortion = 0.0;
        }
        let degenerate = all_same || {
            let mut counts = vec![0usize; centroids.len()];
            assignment.iter().for_each(|&a| counts[a] += 1);
            counts.contains(&0)
        };
        if bits_list.contains(&stage) {
            by_bits.push((
                stage,
                snapshot(stage, &centroids, &assignment, companions, distortion, degenerate),
            ));
        }
    }
    let codebooks = bits_list
        .iter()
        .map(|b| {
            by_bits
                .iter()
                .find(|(bb, _)| bb == b)
                .map(|(_, cb)| cb.clone())
                .expect("every requested size trained")
        })
        .collect();
    Ok(TrainedCodebooks { codebooks, stages })
}

/// Trains a single `bits`-bit codebook.
pub fn train_codebook(
    vectors: &[Vec<f64>],
    companions: &[Vec<f64>],
    bits: u32,
    method: SplitMethod,
    cfg: &VqConfig,
) -> Result<(LinearCodebook, Vec<StageTrace>)> {
    let mut t = train_codebooks(vectors, companions, &[bits], method, cfg)?;
    Ok((t.codebooks.remove(0), t.stages))
}
