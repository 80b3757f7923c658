//! Ancestral DDPM sampling with pluggable score source and guidance mode.
//!
//! Each sample owns an RNG stream derived from (seed, sample index), so
//! results are identical whether samples run sequentially or in parallel and
//! whichever guidance mode is active: the draw sequence per sample is the
//! initial state followed by one noise vector per step above t = 1, and no
//! guidance mode adds or removes draws. The pooled mode runs all samples in
//! lockstep per timestep because its filter couples the batch.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledPoint, NULL_LABEL};
use crate::error::{CoreError, Result};
use crate::exec;
use crate::guidance::{cfg_combine, extrapolate, pooled_tcfg_project, tcfg_combine, ScorePair};
use crate::model::ScoreModel;
use crate::rng::{stream, Domain};
use crate::schedule::{eps_to_score, NoiseSchedule};

/// How the conditional and unconditional predictions combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GuidanceMode {
    CondOnly,
    Cfg,
    Tcfg,
    TcfgPooled,
}

impl GuidanceMode {
    pub fn name(self) -> &'static str {
        match self {
            GuidanceMode::CondOnly => "cond",
            GuidanceMode::Cfg => "cfg",
            GuidanceMode::Tcfg => "tcfg",
            GuidanceMode::TcfgPooled => "tcfg-pooled",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cond" => Some(GuidanceMode::CondOnly),
            "cfg" => Some(GuidanceMode::Cfg),
            "tcfg" => Some(GuidanceMode::Tcfg),
            "tcfg-pooled" => Some(GuidanceMode::TcfgPooled),
            _ => None,
        }
    }
}

/// Mode, weight, and the tie threshold forwarded to the filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceConfig {
    pub mode: GuidanceMode,
    pub weight: f64,
    pub tie_tolerance: f64,
}

impl GuidanceConfig {
    pub fn new(mode: GuidanceMode, weight: f64) -> Self {
        Self { mode, weight, tie_tolerance: crate::guidance::DEFAULT_TIE_TOLERANCE }
    }
}

/// Where eps predictions come from: a trained network or the closed-form
/// posterior of the empirical data distribution.
#[derive(Debug, Clone, Copy)]
pub enum ScoreSource<'a> {
    Model(&'a ScoreModel),
    Oracle(&'a [LabeledPoint]),
}

impl ScoreSource<'_> {
    pub fn dim(&self) -> Result<usize> {
        match self {
            ScoreSource::Model(m) => Ok(m.data_dim()),
            ScoreSource::Oracle(points) => points
                .first()
                .map(|p| p.position.len())
                .ok_or_else(|| CoreError::EmptyInput("oracle source has no data points".into())),
        }
    }

    pub fn eps_hat(&self, z: &[f64], t: usize, label: u8, sched: &NoiseSchedule) -> Result<Vec<f64>> {
        match self {
            ScoreSource::Model(m) => m.forward(z, t, label),
            ScoreSource::Oracle(points) => analytic_eps(points, z, t, label, sched),
        }
    }
}

/// Exact eps prediction for the empirical mixture sum_i N(sqrt(abar) x_i,
/// (1 - abar) I) restricted to points carrying `label` (all points for the
/// null label): eps* = (z - sqrt(abar) E[x0 | z]) / sqrt(1 - abar), with the
/// posterior softmax stabilized by max subtraction.
pub fn analytic_eps(
    points: &[LabeledPoint],
    z: &[f64],
    t: usize,
    label: u8,
    sched: &NoiseSchedule,
) -> Result<Vec<f64>> {
    if t == 0 {
        return Err(CoreError::ZeroNoiseLevel);
    }
    let abar = sched.alpha_bar(t)?;
    let scale = abar.sqrt();
    let var = 1.0 - abar;
    let dim = z.len();
    let mut best = f64::NEG_INFINITY;
    let mut logits = Vec::new();
    let mut selected = Vec::new();
    for p in points {
        if label != NULL_LABEL && p.label != label {
            continue;
        }
        if p.position.len() != dim {
            return Err(CoreError::DimensionMismatch(format!(
                "data point has dimension {}, state has {dim}",
                p.position.len()
            )));
        }
        let mut sq = 0.0;
        for (zi, xi) in z.iter().zip(&p.position) {
            let d = zi - scale * xi;
            sq += d * d;
        }
        let logit = -sq / (2.0 * var);
        best = best.max(logit);
        logits.push(logit);
        selected.push(p);
    }
    if selected.is_empty() {
        return Err(CoreError::NoMatchingPoints(label));
    }
    let mut total = 0.0;
    let mut mean = vec![0.0; dim];
    for (logit, p) in logits.iter().zip(&selected) {
        let w = (logit - best).exp();
        total += w;
        for (m, xi) in mean.iter_mut().zip(&p.position) {
            *m += w * xi;
        }
    }
    let inv_sqrt_var = 1.0 / var.sqrt();
    Ok(z
        .iter()
        .zip(&mean)
        .map(|(zi, mi)| (zi - scale * (mi / total)) * inv_sqrt_var)
        .collect())
}

/// One reverse step z_t -> z_{t-1}:
/// (z - beta_t / sqrt(1 - abar_t) * eps) / sqrt(alpha_t), plus sqrt(beta_t)
/// fresh noise except at t = 1 or with `noise_on` false.
pub fn ddpm_step(
    z: &[f64],
    eps_hat: &[f64],
    t: usize,
    sched: &NoiseSchedule,
    noise_on: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if z.len() != eps_hat.len() {
        return Err(CoreError::DimensionMismatch(format!(
            "state has length {}, eps has length {}",
            z.len(),
            eps_hat.len()
        )));
    }
    let beta = sched.beta(t)?;
    let abar = sched.alpha_bar(t)?;
    let coef = beta / (1.0 - abar).sqrt();
    let inv_sqrt_alpha = 1.0 / sched.alpha(t)?.sqrt();
    let mut out: Vec<f64> =
        z.iter().zip(eps_hat).map(|(zi, ei)| (zi - coef * ei) * inv_sqrt_alpha).collect();
    if t > 1 && noise_on {
        let sb = beta.sqrt();
        for o in out.iter_mut() {
            let xi: f64 = rng.sample(StandardNormal);
            *o += sb * xi;
        }
    }
    Ok(out)
}

/// Full record of one reverse trajectory. `states[i]` is the state at
/// timestep T - i (so `states[0]` is the initial noise and the last entry is
/// the final sample); the score triples at index i were evaluated at
/// `states[i]`, timestep T - i, and are stored as scores, not eps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub label: u8,
    pub seed: u64,
    pub stream: u64,
    pub states: Vec<Vec<f64>>,
    pub uncond_scores: Vec<Vec<f64>>,
    pub cond_scores: Vec<Vec<f64>>,
    pub guided_scores: Vec<Vec<f64>>,
}

/// Result of a sampling run.
#[derive(Debug, Clone)]
pub struct SampleOutput {
    pub samples: Vec<Vec<f64>>,
    /// Present when recording was requested, one per sample in order.
    pub trajectories: Option<Vec<Trajectory>>,
}

/// Draws one sample on stream `stream_idx`. Used directly by benchmarks and
/// fanned out by [`sample`] for the per-sample modes.
pub fn sample_one(
    source: &ScoreSource,
    guidance: &GuidanceConfig,
    label: u8,
    sched: &NoiseSchedule,
    seed: u64,
    stream_idx: u64,
    noise_on: bool,
    record: bool,
) -> Result<(Vec<f64>, Option<Trajectory>)> {
    if guidance.mode == GuidanceMode::TcfgPooled {
        return Err(CoreError::InvalidInput(
            "pooled filtering couples the batch; use sample() for tcfg-pooled".into(),
        ));
    }
    let dim = source.dim()?;
    let mut rng = stream(seed, Domain::Sample, stream_idx);
    let mut z: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let steps = sched.steps();
    let mut traj = if record {
        Some(Trajectory {
            label,
            seed,
            stream: stream_idx,
            states: Vec::with_capacity(steps + 1),
            uncond_scores: Vec::with_capacity(steps),
            cond_scores: Vec::with_capacity(steps),
            guided_scores: Vec::with_capacity(steps),
        })
    } else {
        None
    };
    for t in (1..=steps).rev() {
        let uncond = source.eps_hat(&z, t, NULL_LABEL, sched)?;
        let cond = source.eps_hat(&z, t, label, sched)?;
        let pair = ScorePair::new(uncond, cond)?;
        let guided = match guidance.mode {
            GuidanceMode::CondOnly => pair.cond.clone(),
            GuidanceMode::Cfg => cfg_combine(&pair, guidance.weight)?,
            GuidanceMode::Tcfg => tcfg_combine(&pair, guidance.weight, guidance.tie_tolerance)?,
            GuidanceMode::TcfgPooled => unreachable!("rejected above"),
        };
        if let Some(tr) = traj.as_mut() {
            tr.states.push(z.clone());
            tr.uncond_scores.push(eps_to_score(&pair.uncond, t, sched)?);
            tr.cond_scores.push(eps_to_score(&pair.cond, t, sched)?);
            tr.guided_scores.push(eps_to_score(&guided, t, sched)?);
        }
        z = ddpm_step(&z, &guided, t, sched, noise_on, &mut rng)?;
    }
    if let Some(tr) = traj.as_mut() {
        tr.states.push(z.clone());
    }
    Ok((z, traj))
}

/// Draws `count` samples under `label`. Per-sample modes fan out over the
/// execution strategy; the pooled mode advances all samples in lockstep so
/// each timestep can filter against the whole batch's score matrix.
pub fn sample(
    source: &ScoreSource,
    guidance: &GuidanceConfig,
    label: u8,
    count: usize,
    sched: &NoiseSchedule,
    seed: u64,
    noise_on: bool,
    record: bool,
) -> Result<SampleOutput> {
    if count == 0 {
        return Err(CoreError::InvalidInput("sample count must be at least 1".into()));
    }
    if guidance.mode != GuidanceMode::TcfgPooled {
        let results = exec::map_indexed(count, |i| {
            sample_one(source, guidance, label, sched, seed, i as u64, noise_on, record)
        });
        let mut samples = Vec::with_capacity(count);
        let mut trajectories = record.then(|| Vec::with_capacity(count));
        for r in results {
            let (z, traj) = r?;
            samples.push(z);
            if let (Some(ts), Some(tr)) = (trajectories.as_mut(), traj) {
                ts.push(tr);
            }
        }
        return Ok(SampleOutput { samples, trajectories });
    }

    let dim = source.dim()?;
    let steps = sched.steps();
    let mut rngs: Vec<ChaCha8Rng> =
        (0..count).map(|i| stream(seed, Domain::Sample, i as u64)).collect();
    let mut zs: Vec<Vec<f64>> = rngs
        .iter_mut()
        .map(|rng| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let mut trajs: Option<Vec<Trajectory>> = record.then(|| {
        (0..count)
            .map(|i| Trajectory {
                label,
                seed,
                stream: i as u64,
                states: Vec::with_capacity(steps + 1),
                uncond_scores: Vec::with_capacity(steps),
                cond_scores: Vec::with_capacity(steps),
                guided_scores: Vec::with_capacity(steps),
            })
            .collect()
    });
    for t in (1..=steps).rev() {
        let pairs: Vec<Result<ScorePair>> = exec::map_indexed(count, |i| {
            let uncond = source.eps_hat(&zs[i], t, NULL_LABEL, sched)?;
            let cond = source.eps_hat(&zs[i], t, label, sched)?;
            ScorePair::new(uncond, cond)
        });
        let pairs: Vec<ScorePair> = pairs.into_iter().collect::<Result<_>>()?;
        let filtered = pooled_tcfg_project(&pairs, guidance.tie_tolerance)?;
        for i in 0..count {
            let guided = extrapolate(&filtered[i], &pairs[i].cond, guidance.weight);
            if let Some(ts) = trajs.as_mut() {
                ts[i].states.push(zs[i].clone());
                ts[i].uncond_scores.push(eps_to_score(&pairs[i].uncond, t, sched)?);
                ts[i].cond_scores.push(eps_to_score(&pairs[i].cond, t, sched)?);
                ts[i].guided_scores.push(eps_to_score(&guided, t, sched)?);
            }
            zs[i] = ddpm_step(&zs[i], &guided, t, sched, noise_on, &mut rngs[i])?;
        }
    }
    if let Some(ts) = trajs.as_mut() {
        for (tr, z) in ts.iter_mut().zip(&zs) {
            tr.states.push(z.clone());
        }
    }
    Ok(SampleOutput { samples: zs, trajectories: trajs })
}

/// Serialized trajectory bundle with the run parameters that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub mode: String,
    pub scale: f64,
    pub label: u8,
    pub seed: u64,
    pub noise_on: bool,
    pub schedule_steps: usize,
    pub trajectories: Vec<Trajectory>,
}

/// Samples as CSV rows `x0,..,x{D-1},label,mode,seed`.
pub fn write_samples_csv<W: Write>(
    samples: &[Vec<f64>],
    label: u8,
    mode: GuidanceMode,
    seed: u64,
    out: &mut W,
) -> Result<()> {
    let dim = samples.first().map_or(2, |s| s.len());
    let header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    writeln!(out, "{},label,mode,seed", header.join(","))?;
    for s in samples {
        for x in s {
            write!(out, "{x},")?;
        }
        writeln!(out, "{label},{},{seed}", mode.name())?;
    }
    Ok(())
}
