//! Variance-preserving DDPM noise schedule with 1-based timesteps.
//!
//! Timesteps run t = 1..=T; the cumulative product table keeps an extra entry
//! at index 0 with alpha_bar = 1, the noiseless extension used when a forward
//! diffusion of "no noise" is needed. Score and noise prediction are
//! interchangeable through score = -eps / sqrt(1 - alpha_bar_t), which is why
//! conversion lives here rather than in the model.

use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};

/// Precomputed beta / alpha / alpha_bar tables.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    /// Length T + 1; entry 0 is exactly 1.0.
    alpha_bars: Vec<f64>,
}

/// Linearly spaced betas from `beta_min` at t = 1 to `beta_max` at t = T.
pub fn linear_beta_schedule(steps: usize, beta_min: f64, beta_max: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(CoreError::InvalidSchedule("steps must be at least 1".into()));
    }
    if !beta_min.is_finite() || !beta_max.is_finite() {
        return Err(CoreError::InvalidSchedule("beta range must be finite".into()));
    }
    if beta_min <= 0.0 || beta_max >= 1.0 || beta_min > beta_max {
        return Err(CoreError::InvalidSchedule(format!(
            "need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
        )));
    }
    let betas: Vec<f64> = (1..=steps)
        .map(|t| {
            if steps == 1 {
                beta_min
            } else {
                beta_min + (beta_max - beta_min) * (t - 1) as f64 / (steps - 1) as f64
            }
        })
        .collect();
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bars = Vec::with_capacity(steps + 1);
    alpha_bars.push(1.0);
    let mut prod = 1.0;
    for a in &alphas {
        prod *= a;
        alpha_bars.push(prod);
    }
    Ok(NoiseSchedule { betas, alphas, alpha_bars })
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(CoreError::InvalidStep {
                t,
                reason: format!("valid timesteps are 1..={}", self.steps()),
            });
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        self.check_step(t)?;
        Ok(self.betas[t - 1])
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        self.check_step(t)?;
        Ok(self.alphas[t - 1])
    }

    /// Cumulative product at the extended index t in 0..=T.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bars.get(t).copied().ok_or_else(|| CoreError::InvalidStep {
            t,
            reason: format!("extended indices are 0..={}", self.steps()),
        })
    }

    /// SHA-256 over the beta table's little-endian bit patterns, for
    /// checkpoint consistency checks.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for b in &self.betas {
            hasher.update(b.to_bits().to_le_bytes());
        }
        let digest = hasher.finalize();
        digest.iter().map(|byte| format!("{byte:02x}")).collect()
    }
}

/// z_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps, with t = 0 giving
/// back x0 exactly.
pub fn forward_diffuse(
    x0: &[f64],
    t: usize,
    eps: &[f64],
    sched: &NoiseSchedule,
) -> Result<Vec<f64>> {
    if x0.len() != eps.len() {
        return Err(CoreError::DimensionMismatch(format!(
            "x0 has length {}, eps has length {}",
            x0.len(),
            eps.len()
        )));
    }
    let abar = sched.alpha_bar(t)?;
    let signal = abar.sqrt();
    let noise = (1.0 - abar).sqrt();
    Ok(x0.iter().zip(eps).map(|(x, e)| signal * x + noise * e).collect())
}

/// score = -eps / sqrt(1 - alpha_bar_t), defined for t >= 1.
pub fn eps_to_score(eps: &[f64], t: usize, sched: &NoiseSchedule) -> Result<Vec<f64>> {
    let denom = noise_scale(t, sched)?;
    Ok(eps.iter().map(|e| -e / denom).collect())
}

/// Inverse of [`eps_to_score`].
pub fn score_to_eps(score: &[f64], t: usize, sched: &NoiseSchedule) -> Result<Vec<f64>> {
    let denom = noise_scale(t, sched)?;
    Ok(score.iter().map(|s| -s * denom).collect())
}

fn noise_scale(t: usize, sched: &NoiseSchedule) -> Result<f64> {
    if t == 0 {
        return Err(CoreError::ZeroNoiseLevel);
    }
    let abar = sched.alpha_bar(t)?;
    Ok((1.0 - abar).sqrt())
}
