//! Score-geometry probes: singular spectra of stacked scores, principal-axis
//! alignment between the unconditional and conditional score matrices, and
//! tangential-to-normal decomposition of scores against the moons frame.
//!
//! The forward-noising probes draw from [`Domain::Analysis`] streams keyed by
//! row index, so every matrix here is reproducible and independent of the
//! execution strategy. Probes that share a seed also share noise draws per
//! index, which keeps curves across timesteps comparable point by point.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{project_to_moons, LabeledPoint, NULL_LABEL};
use crate::error::{CoreError, Result};
use crate::exec;
use crate::linalg::{cosine_similarity, dot, Matrix, SvdResult};
use crate::rng::{stream, Domain};
use crate::sampler::{analytic_eps, Trajectory};
use crate::schedule::{eps_to_score, forward_diffuse, NoiseSchedule};

/// A spectrum has a usable gap only when some consecutive singular-value
/// ratio exceeds this. At 1.5 an isotropic spectrum (ratios near 1) never
/// triggers, while a rank split worth projecting onto clears it easily.
pub const GAP_RATIO_THRESHOLD: f64 = 1.5;

/// Index i (1-based, so also the retained rank) maximizing sigma_i /
/// sigma_{i+1} over a descending spectrum, or None when no ratio exceeds
/// [`GAP_RATIO_THRESHOLD`]. A zero below a positive value counts as an
/// infinite ratio; trailing zero pairs carry no information and are skipped.
pub fn spectral_gap_index(singular_values: &[f64]) -> Result<Option<usize>> {
    if singular_values.len() < 2 {
        return Err(CoreError::InvalidInput(format!(
            "gap detection needs at least 2 singular values, got {}",
            singular_values.len()
        )));
    }
    for pair in singular_values.windows(2) {
        if !pair[0].is_finite() || pair[0] < 0.0 {
            return Err(CoreError::InvalidInput(format!(
                "singular values must be finite and nonnegative, got {}",
                pair[0]
            )));
        }
        if pair[1] > pair[0] {
            return Err(CoreError::InvalidInput(format!(
                "singular values must be sorted descending, got {} before {}",
                pair[0], pair[1]
            )));
        }
    }
    let last = *singular_values.last().unwrap();
    if !last.is_finite() || last < 0.0 {
        return Err(CoreError::InvalidInput(format!(
            "singular values must be finite and nonnegative, got {last}"
        )));
    }
    let mut best_ratio = 0.0;
    let mut best_index = None;
    for (i, pair) in singular_values.windows(2).enumerate() {
        let ratio = if pair[1] > 0.0 {
            pair[0] / pair[1]
        } else if pair[0] > 0.0 {
            f64::INFINITY
        } else {
            continue;
        };
        if ratio > best_ratio {
            best_ratio = ratio;
            best_index = Some(i + 1);
        }
    }
    match best_index {
        Some(idx) if best_ratio > GAP_RATIO_THRESHOLD => Ok(Some(idx)),
        _ => Ok(None),
    }
}

/// Paired unconditional and conditional score matrices, one row per probe.
#[derive(Debug, Clone)]
pub struct ScoreMatrices {
    pub uncond: Matrix,
    pub cond: Matrix,
}

/// Noises one fixed anchor `n_scores` times at timestep `t` and evaluates the
/// exact scores there. All probes share the anchor, so row-to-row variation
/// comes only from the noise, which is what isolates the spectrum of the
/// score field around a single manifold point.
pub fn anchored_score_matrices(
    points: &[LabeledPoint],
    anchor: &[f64],
    label: u8,
    t: usize,
    n_scores: usize,
    seed: u64,
    sched: &NoiseSchedule,
) -> Result<ScoreMatrices> {
    if n_scores < 2 {
        return Err(CoreError::InvalidInput(format!(
            "score matrix needs at least 2 rows, got {n_scores}"
        )));
    }
    let dim = anchor.len();
    let rows = exec::map_indexed(n_scores, |i| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rng = stream(seed, Domain::Analysis, i as u64);
        let eps: Vec<f64> = (0..dim).map(|_| rand::Rng::sample(&mut rng, rand_distr::StandardNormal)).collect();
        let z = forward_diffuse(anchor, t, &eps, sched)?;
        let uncond = eps_to_score(&analytic_eps(points, &z, t, NULL_LABEL, sched)?, t, sched)?;
        let cond = eps_to_score(&analytic_eps(points, &z, t, label, sched)?, t, sched)?;
        Ok((uncond, cond))
    });
    collect_matrices(rows)
}

/// Noises every dataset point once at timestep `t` and evaluates the exact
/// scores there, conditioning each probe on its own point's label. Rows cover
/// the whole manifold instead of one neighborhood.
pub fn spread_score_matrices(
    points: &[LabeledPoint],
    t: usize,
    seed: u64,
    sched: &NoiseSchedule,
) -> Result<ScoreMatrices> {
    if points.len() < 2 {
        return Err(CoreError::InvalidInput(format!(
            "score matrix needs at least 2 rows, got {}",
            points.len()
        )));
    }
    let rows = exec::map_indexed(points.len(), |i| -> Result<(Vec<f64>, Vec<f64>)> {
        let point = &points[i];
        let dim = point.position.len();
        let mut rng = stream(seed, Domain::Analysis, i as u64);
        let eps: Vec<f64> = (0..dim).map(|_| rand::Rng::sample(&mut rng, rand_distr::StandardNormal)).collect();
        let z = forward_diffuse(&point.position, t, &eps, sched)?;
        let uncond = eps_to_score(&analytic_eps(points, &z, t, NULL_LABEL, sched)?, t, sched)?;
        let cond = eps_to_score(&analytic_eps(points, &z, t, point.label, sched)?, t, sched)?;
        Ok((uncond, cond))
    });
    collect_matrices(rows)
}

fn collect_matrices(rows: Vec<Result<(Vec<f64>, Vec<f64>)>>) -> Result<ScoreMatrices> {
    let mut uncond = Vec::with_capacity(rows.len());
    let mut cond = Vec::with_capacity(rows.len());
    for row in rows {
        let (u, c) = row?;
        uncond.push(u);
        cond.push(c);
    }
    Ok(ScoreMatrices { uncond: Matrix::from_rows(&uncond)?, cond: Matrix::from_rows(&cond)? })
}

/// Scores recorded along sampling trajectories, restacked across trajectories
/// at one timestep.
pub fn trajectory_score_matrices(
    trajectories: &[Trajectory],
    t: usize,
    steps: usize,
) -> Result<ScoreMatrices> {
    if trajectories.len() < 2 {
        return Err(CoreError::InvalidInput(format!(
            "score matrix needs at least 2 trajectories, got {}",
            trajectories.len()
        )));
    }
    if t == 0 || t > steps {
        return Err(CoreError::InvalidStep { t, reason: format!("trajectories cover 1..={steps}") });
    }
    let idx = steps - t;
    let mut uncond = Vec::with_capacity(trajectories.len());
    let mut cond = Vec::with_capacity(trajectories.len());
    for tr in trajectories {
        if tr.uncond_scores.len() != steps || tr.cond_scores.len() != steps {
            return Err(CoreError::InvalidInput(format!(
                "trajectory records {} scored steps, expected {steps}",
                tr.uncond_scores.len()
            )));
        }
        uncond.push(tr.uncond_scores[idx].clone());
        cond.push(tr.cond_scores[idx].clone());
    }
    Ok(ScoreMatrices { uncond: Matrix::from_rows(&uncond)?, cond: Matrix::from_rows(&cond)? })
}

/// How right singular vectors of two decompositions are paired for
/// comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlignmentStrategy {
    /// Pair vector i with vector i.
    Indexed,
    /// Pair each vector (in descending singular-value order) with the
    /// not-yet-taken vector of highest absolute cosine.
    Greedy,
}

/// Absolute cosines between paired right singular vectors, in the first
/// decomposition's order. Singular vectors are sign-ambiguous, so only the
/// magnitude of the cosine is meaningful.
pub fn alignment_profile(
    a: &SvdResult,
    b: &SvdResult,
    strategy: AlignmentStrategy,
) -> Result<Vec<f64>> {
    let k = a.right_vectors.rows();
    if k == 0 {
        return Err(CoreError::EmptyInput("alignment needs at least one vector".into()));
    }
    if b.right_vectors.rows() != k || b.right_vectors.cols() != a.right_vectors.cols() {
        return Err(CoreError::DimensionMismatch(format!(
            "decompositions have {k}x{} and {}x{} right vectors",
            a.right_vectors.cols(),
            b.right_vectors.rows(),
            b.right_vectors.cols()
        )));
    }
    match strategy {
        AlignmentStrategy::Indexed => (0..k)
            .map(|i| cosine_similarity(a.right_vector(i), b.right_vector(i)).map(f64::abs))
            .collect(),
        AlignmentStrategy::Greedy => {
            let mut taken = vec![false; k];
            let mut out = Vec::with_capacity(k);
            for i in 0..k {
                let mut best_j = usize::MAX;
                let mut best_cos = -1.0;
                for (j, taken_j) in taken.iter().enumerate() {
                    if *taken_j {
                        continue;
                    }
                    let c = cosine_similarity(a.right_vector(i), b.right_vector(j))?.abs();
                    if c > best_cos {
                        best_cos = c;
                        best_j = j;
                    }
                }
                taken[best_j] = true;
                out.push(best_cos);
            }
            Ok(out)
        }
    }
}

/// |score . tangent| / |score . normal| in the frame of the nearest moons
/// point. A zero normal component with a nonzero tangential one yields
/// infinity; a zero score yields zero.
pub fn tangential_normal_ratio(score: &[f64], state: &[f64]) -> Result<f64> {
    if score.len() != 2 {
        return Err(CoreError::DimensionMismatch(format!(
            "ratio expects a 2-d score, got length {}",
            score.len()
        )));
    }
    let proj = project_to_moons(state)?;
    let tangential = dot(score, &proj.tangent).abs();
    let normal = dot(score, &proj.normal).abs();
    if normal == 0.0 {
        if tangential == 0.0 {
            return Ok(0.0);
        }
        return Ok(f64::INFINITY);
    }
    Ok(tangential / normal)
}

/// Central summary of ratios observed at one timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub t: usize,
    pub median: f64,
    pub mean: f64,
}

/// Tangential-to-normal ratio of the exact unconditional score at forward
/// noisings of the dataset, summarized per requested timestep. Each point
/// keeps one noise draw across all timesteps, so the profile varies only
/// through the schedule.
pub fn forward_ratio_profile(
    points: &[LabeledPoint],
    ts: &[usize],
    seed: u64,
    sched: &NoiseSchedule,
) -> Result<Vec<RatioSummary>> {
    if points.is_empty() {
        return Err(CoreError::EmptyInput("ratio profile needs data points".into()));
    }
    if ts.is_empty() {
        return Err(CoreError::EmptyInput("ratio profile needs at least one timestep".into()));
    }
    let eps_draws: Vec<Vec<f64>> = (0..points.len())
        .map(|i| {
            let mut rng = stream(seed, Domain::Analysis, i as u64);
            (0..points[i].position.len())
                .map(|_| rand::Rng::sample(&mut rng, rand_distr::StandardNormal))
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(ts.len());
    for &t in ts {
        let ratios = exec::map_indexed(points.len(), |i| -> Result<f64> {
            let z = forward_diffuse(&points[i].position, t, &eps_draws[i], sched)?;
            let score = eps_to_score(&analytic_eps(points, &z, t, NULL_LABEL, sched)?, t, sched)?;
            tangential_normal_ratio(&score, &z)
        });
        let ratios: Vec<f64> = ratios.into_iter().collect::<Result<_>>()?;
        out.push(RatioSummary { t, median: median(&ratios)?, mean: mean(&ratios) });
    }
    Ok(out)
}

/// Which recorded score channel a trajectory analysis reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreChannel {
    Uncond,
    Cond,
    Guided,
}

/// Per-step ratio summaries along recorded trajectories, ordered from the
/// first reverse step (t = steps) down to t = 1.
pub fn trajectory_ratio_curve(
    trajectories: &[Trajectory],
    channel: ScoreChannel,
    steps: usize,
) -> Result<Vec<RatioSummary>> {
    if trajectories.is_empty() {
        return Err(CoreError::EmptyInput("ratio curve needs trajectories".into()));
    }
    let mut out = Vec::with_capacity(steps);
    for idx in 0..steps {
        let t = steps - idx;
        let mut ratios = Vec::with_capacity(trajectories.len());
        for tr in trajectories {
            let scores = match channel {
                ScoreChannel::Uncond => &tr.uncond_scores,
                ScoreChannel::Cond => &tr.cond_scores,
                ScoreChannel::Guided => &tr.guided_scores,
            };
            if scores.len() != steps || tr.states.len() != steps + 1 {
                return Err(CoreError::InvalidInput(format!(
                    "trajectory records {} scored steps, expected {steps}",
                    scores.len()
                )));
            }
            ratios.push(tangential_normal_ratio(&scores[idx], &tr.states[idx])?);
        }
        out.push(RatioSummary { t, median: median(&ratios)?, mean: mean(&ratios) });
    }
    Ok(out)
}

/// Median by total order. Rejects NaN; infinities participate normally, and
/// an even-length middle pair averages.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(CoreError::EmptyInput("median of empty slice".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(CoreError::InvalidInput("median input contains NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        Ok(sorted[n / 2])
    } else {
        Ok(0.5 * (sorted[n / 2 - 1] + sorted[n / 2]))
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Singular spectrum of one score matrix plus the gap decision made on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub t: usize,
    pub n_scores: usize,
    pub singular_values: Vec<f64>,
    pub gap_index: Option<usize>,
}

impl SpectrumReport {
    pub fn from_singular_values(t: usize, n_scores: usize, sv: Vec<f64>) -> Result<Self> {
        let gap_index = spectral_gap_index(&sv)?;
        Ok(Self { t, n_scores, singular_values: sv, gap_index })
    }
}

/// Rows `index,sigma,ratio_to_next`; the last row has no next value and
/// leaves the ratio empty.
pub fn write_spectrum_csv<W: Write>(report: &SpectrumReport, out: &mut W) -> Result<()> {
    writeln!(out, "index,sigma,ratio_to_next")?;
    let sv = &report.singular_values;
    for (i, sigma) in sv.iter().enumerate() {
        if i + 1 < sv.len() && sv[i + 1] > 0.0 {
            writeln!(out, "{},{sigma},{}", i + 1, sigma / sv[i + 1])?;
        } else {
            writeln!(out, "{},{sigma},", i + 1)?;
        }
    }
    Ok(())
}

/// Rows `t,index,cosine`, one block per (timestep, profile) pair.
pub fn write_alignment_csv<W: Write>(
    blocks: &[(usize, Vec<f64>)],
    out: &mut W,
) -> Result<()> {
    writeln!(out, "t,index,cosine")?;
    for (t, cosines) in blocks {
        for (i, c) in cosines.iter().enumerate() {
            writeln!(out, "{t},{},{c}", i + 1)?;
        }
    }
    Ok(())
}

/// Rows `t,median,mean`.
pub fn write_ratio_csv<W: Write>(summaries: &[RatioSummary], out: &mut W) -> Result<()> {
    writeln!(out, "t,median,mean")?;
    for s in summaries {
        writeln!(out, "{},{},{}", s.t, s.median, s.mean)?;
    }
    Ok(())
}
