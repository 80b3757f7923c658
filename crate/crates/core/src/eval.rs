//! Sample-quality metrics and the guidance-overhead measurement.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::median;
use crate::dataset::project_to_moons;
use crate::error::{CoreError, Result};
use crate::guidance::{cfg_combine, tcfg_combine, ScorePair};
use crate::linalg::{spd_sqrt_2x2, Matrix};
use crate::sampler::{ddpm_step, GuidanceConfig, GuidanceMode, ScoreSource};
use crate::schedule::NoiseSchedule;

/// Distances from samples to the nearest point of the moons manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub mean: f64,
    pub median: f64,
    pub n: usize,
}

pub fn mean_manifold_distance(samples: &[Vec<f64>]) -> Result<DistanceSummary> {
    if samples.is_empty() {
        return Err(CoreError::EmptyInput("distance summary needs samples".into()));
    }
    let mut distances = Vec::with_capacity(samples.len());
    for s in samples {
        distances.push(project_to_moons(s)?.distance);
    }
    let mean = distances.iter().sum::<f64>() / distances.len() as f64;
    Ok(DistanceSummary { mean, median: median(&distances)?, n: distances.len() })
}

/// Covariance eigenvalues at or below this count as rank collapse and
/// trigger regularization of both inputs.
const DEGENERACY_EPS: f64 = 1e-12;

/// Squared Frechet distance between the Gaussians moment-matched to two
/// 2-d sample sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frechet2d {
    pub distance_sq: f64,
    /// True when a covariance was rank-deficient and 1e-10 I was added to
    /// both before taking matrix square roots.
    pub regularized: bool,
}

fn moments(samples: &[Vec<f64>], side: &str) -> Result<([f64; 2], Matrix)> {
    if samples.len() < 3 {
        return Err(CoreError::InvalidInput(format!(
            "{side} needs at least 3 samples for a covariance, got {}",
            samples.len()
        )));
    }
    let mut mean = [0.0; 2];
    for s in samples {
        if s.len() != 2 {
            return Err(CoreError::DimensionMismatch(format!(
                "{side} contains a sample of length {}, expected 2",
                s.len()
            )));
        }
        mean[0] += s[0];
        mean[1] += s[1];
    }
    let n = samples.len() as f64;
    mean[0] /= n;
    mean[1] /= n;
    let mut cov = [0.0; 3];
    for s in samples {
        let dx = s[0] - mean[0];
        let dy = s[1] - mean[1];
        cov[0] += dx * dx;
        cov[1] += dx * dy;
        cov[2] += dy * dy;
    }
    let denom = n - 1.0;
    let mut m = Matrix::zeros(2, 2);
    m.set(0, 0, cov[0] / denom);
    m.set(0, 1, cov[1] / denom);
    m.set(1, 0, cov[1] / denom);
    m.set(1, 1, cov[2] / denom);
    Ok((mean, m))
}

fn min_eigenvalue_2x2(m: &Matrix) -> f64 {
    let a = m.get(0, 0);
    let b = m.get(0, 1);
    let c = m.get(1, 1);
    0.5 * ((a + c) - f64::hypot(a - c, 2.0 * b))
}

fn add_diagonal(m: &mut Matrix, eps: f64) {
    for i in 0..2 {
        let v = m.get(i, i) + eps;
        m.set(i, i, v);
    }
}

/// ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_b^{1/2} S_a S_b^{1/2})^{1/2}),
/// clamped at zero against rounding. Sample covariances use the n - 1
/// denominator.
pub fn frechet_gaussian_2d(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Frechet2d> {
    let (mu_a, mut cov_a) = moments(a, "first sample set")?;
    let (mu_b, mut cov_b) = moments(b, "second sample set")?;
    let regularized =
        min_eigenvalue_2x2(&cov_a) <= DEGENERACY_EPS || min_eigenvalue_2x2(&cov_b) <= DEGENERACY_EPS;
    if regularized {
        add_diagonal(&mut cov_a, 1e-10);
        add_diagonal(&mut cov_b, 1e-10);
    }
    let root_b = spd_sqrt_2x2(&cov_b)?;
    let inner = root_b.matmul(&cov_a)?.matmul(&root_b)?;
    // Symmetrize away the rounding skew before the PSD square root.
    let mut sym = Matrix::zeros(2, 2);
    for r in 0..2 {
        for c in 0..2 {
            sym.set(r, c, 0.5 * (inner.get(r, c) + inner.get(c, r)));
        }
    }
    let cross = spd_sqrt_2x2(&sym)?;
    let dx = mu_a[0] - mu_b[0];
    let dy = mu_a[1] - mu_b[1];
    let trace = cov_a.get(0, 0) + cov_a.get(1, 1) + cov_b.get(0, 0) + cov_b.get(1, 1)
        - 2.0 * (cross.get(0, 0) + cross.get(1, 1));
    Ok(Frechet2d { distance_sq: (dx * dx + dy * dy + trace).max(0.0), regularized })
}

/// Wall time of one mode's guidance-combine phase at one reverse step,
/// summed across all samples in the batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepTiming {
    pub t: usize,
    pub cfg_nanos: u64,
    pub tcfg_nanos: u64,
}

/// Relative cost of the filtered combine versus the plain one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub count: usize,
    pub steps: usize,
    pub weight: f64,
    pub median_cfg_nanos: f64,
    pub median_tcfg_nanos: f64,
    /// (median_tcfg - median_cfg) / median_cfg.
    pub overhead_fraction: f64,
    pub per_step: Vec<StepTiming>,
    pub note: String,
}

/// Runs one full sampling pass per mode from identical initial noise and
/// times only the per-step combine phase, aggregated over the batch. A
/// single combine sits below timer resolution, so the aggregate is the
/// smallest honestly measurable unit; medians over steps then discard
/// scheduler outliers.
pub fn bench_overhead(
    source: &ScoreSource,
    weight: f64,
    label: u8,
    count: usize,
    sched: &NoiseSchedule,
    seed: u64,
) -> Result<OverheadReport> {
    if count == 0 {
        return Err(CoreError::InvalidInput("benchmark needs at least 1 sample".into()));
    }
    let steps = sched.steps();
    let mut per_step: Vec<StepTiming> =
        (1..=steps).rev().map(|t| StepTiming { t, cfg_nanos: 0, tcfg_nanos: 0 }).collect();
    for mode in [GuidanceMode::Cfg, GuidanceMode::Tcfg] {
        let guidance = GuidanceConfig::new(mode, weight);
        let dim = source.dim()?;
        let mut rngs: Vec<_> = (0..count)
            .map(|i| crate::rng::stream(seed, crate::rng::Domain::Sample, i as u64))
            .collect();
        let mut zs: Vec<Vec<f64>> = rngs
            .iter_mut()
            .map(|rng| {
                (0..dim).map(|_| rand::Rng::sample(rng, rand_distr::StandardNormal)).collect()
            })
            .collect();
        for (row, t) in (1..=steps).rev().enumerate() {
            let mut pairs = Vec::with_capacity(count);
            for z in &zs {
                let uncond = source.eps_hat(z, t, crate::dataset::NULL_LABEL, sched)?;
                let cond = source.eps_hat(z, t, label, sched)?;
                pairs.push(ScorePair::new(uncond, cond)?);
            }
            let started = Instant::now();
            let mut guided = Vec::with_capacity(count);
            for pair in &pairs {
                guided.push(match mode {
                    GuidanceMode::Cfg => cfg_combine(pair, weight)?,
                    GuidanceMode::Tcfg => {
                        tcfg_combine(pair, weight, guidance.tie_tolerance)?
                    }
                    _ => unreachable!("benchmark covers cfg and tcfg only"),
                });
            }
            let elapsed = started.elapsed().as_nanos() as u64;
            match mode {
                GuidanceMode::Cfg => per_step[row].cfg_nanos = elapsed,
                _ => per_step[row].tcfg_nanos = elapsed,
            }
            for ((z, g), rng) in zs.iter_mut().zip(&guided).zip(rngs.iter_mut()) {
                *z = ddpm_step(z, g, t, sched, true, rng)?;
            }
        }
    }
    let cfg_times: Vec<f64> = per_step.iter().map(|s| s.cfg_nanos as f64).collect();
    let tcfg_times: Vec<f64> = per_step.iter().map(|s| s.tcfg_nanos as f64).collect();
    let median_cfg_nanos = median(&cfg_times)?;
    let median_tcfg_nanos = median(&tcfg_times)?;
    if median_cfg_nanos <= 0.0 {
        return Err(CoreError::InvalidInput(
            "combine phase fell below timer resolution; increase the sample count".into(),
        ));
    }
    Ok(OverheadReport {
        count,
        steps,
        weight,
        median_cfg_nanos,
        median_tcfg_nanos,
        overhead_fraction: (median_tcfg_nanos - median_cfg_nanos) / median_cfg_nanos,
        per_step,
        note: "per-step combine phase timed over the whole batch; medians over steps".into(),
    })
}

/// Rows `t,cfg_nanos,tcfg_nanos`.
pub fn write_overhead_csv<W: Write>(report: &OverheadReport, out: &mut W) -> Result<()> {
    writeln!(out, "t,cfg_nanos,tcfg_nanos")?;
    for s in &report.per_step {
        writeln!(out, "{},{},{}", s.t, s.cfg_nanos, s.tcfg_nanos)?;
    }
    Ok(())
}
