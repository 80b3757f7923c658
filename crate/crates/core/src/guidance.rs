//! Guidance combiners: the standard extrapolation rule and the filtered
//! variant that projects the unconditional score before extrapolating.
//!
//! The filter stacks the unconditional and conditional scores as the rows of
//! a 2 x d matrix, takes its thin SVD, and keeps only the component of the
//! unconditional score along the top right singular vector:
//!
//! ```text
//! s_hat = (s_uncond . v1) v1,     guided = s_hat + w (s_cond - s_hat)
//! ```
//!
//! With both scores parallel the projection is exact and the rule reduces to
//! plain extrapolation. When the top two singular values tie there is no
//! distinguished direction, so the filter degrades to a pass-through rather
//! than projecting onto an arbitrary vector.

use crate::analysis::spectral_gap_index;
use crate::error::{CoreError, Result};
use crate::linalg::{dot, svd_thin, Matrix};

/// Relative tie threshold on the top two singular values below which the
/// filter passes the unconditional score through unchanged.
pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-9;

/// An unconditional / conditional score pair at one state and timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePair {
    pub uncond: Vec<f64>,
    pub cond: Vec<f64>,
}

impl ScorePair {
    /// Validates equal nonzero dimensions and finite entries.
    pub fn new(uncond: Vec<f64>, cond: Vec<f64>) -> Result<Self> {
        if uncond.is_empty() {
            return Err(CoreError::EmptyInput("score vectors must be nonempty".into()));
        }
        if uncond.len() != cond.len() {
            return Err(CoreError::DimensionMismatch(format!(
                "uncond has length {}, cond has length {}",
                uncond.len(),
                cond.len()
            )));
        }
        if uncond.iter().chain(cond.iter()).any(|x| !x.is_finite()) {
            return Err(CoreError::InvalidInput("scores must be finite".into()));
        }
        Ok(Self { uncond, cond })
    }

    pub fn dim(&self) -> usize {
        self.uncond.len()
    }
}

/// base + w (cond - base), with w = 1 returning cond bitwise and w = 0
/// returning base bitwise. The exact identities matter: the general formula
/// reintroduces rounding that would break trajectory-level equality checks.
pub fn extrapolate(base: &[f64], cond: &[f64], weight: f64) -> Vec<f64> {
    if weight == 1.0 {
        cond.to_vec()
    } else if weight == 0.0 {
        base.to_vec()
    } else {
        base.iter().zip(cond).map(|(b, c)| b + weight * (c - b)).collect()
    }
}

fn check_weight(weight: f64) -> Result<()> {
    if !weight.is_finite() {
        return Err(CoreError::InvalidInput(format!("guidance weight must be finite, got {weight}")));
    }
    Ok(())
}

fn check_tie_tolerance(tie_tolerance: f64) -> Result<()> {
    if !tie_tolerance.is_finite() || tie_tolerance < 0.0 {
        return Err(CoreError::InvalidInput(format!(
            "tie tolerance must be finite and nonnegative, got {tie_tolerance}"
        )));
    }
    Ok(())
}

/// Standard guidance: uncond + w (cond - uncond).
pub fn cfg_combine(pair: &ScorePair, weight: f64) -> Result<Vec<f64>> {
    check_weight(weight)?;
    Ok(extrapolate(&pair.uncond, &pair.cond, weight))
}

/// Projection of the unconditional score onto the top right singular vector
/// of the stacked pair. Returns the unconditional score unchanged when the
/// pair is entirely zero or the top two singular values tie within
/// `tie_tolerance` relative to the largest.
pub fn tcfg_project(pair: &ScorePair, tie_tolerance: f64) -> Result<Vec<f64>> {
    check_tie_tolerance(tie_tolerance)?;
    let a = Matrix::from_rows(&[pair.uncond.clone(), pair.cond.clone()])?;
    let svd = svd_thin(&a)?;
    let s1 = svd.singular_values[0];
    let s2 = svd.singular_values.get(1).copied().unwrap_or(0.0);
    if s1 == 0.0 || s1 - s2 <= tie_tolerance * s1 {
        return Ok(pair.uncond.clone());
    }
    let v1 = svd.right_vector(0);
    let coeff = dot(&pair.uncond, v1);
    Ok(v1.iter().map(|v| coeff * v).collect())
}

/// Filtered guidance: s_hat + w (cond - s_hat) with s_hat from
/// [`tcfg_project`].
pub fn tcfg_combine(pair: &ScorePair, weight: f64, tie_tolerance: f64) -> Result<Vec<f64>> {
    check_weight(weight)?;
    let s_hat = tcfg_project(pair, tie_tolerance)?;
    Ok(extrapolate(&s_hat, &pair.cond, weight))
}

/// Batch variant: stacks all 2N scores into one matrix, keeps the rank picked
/// by the spectral-gap rule on its singular values, and projects every
/// unconditional score onto that shared top subspace. Falls back to the
/// unfiltered unconditional scores when no gap exists (or the spectrum is too
/// short to measure one).
pub fn pooled_tcfg_project(pairs: &[ScorePair], tie_tolerance: f64) -> Result<Vec<Vec<f64>>> {
    check_tie_tolerance(tie_tolerance)?;
    if pairs.is_empty() {
        return Err(CoreError::EmptyInput("pooled projection needs at least one pair".into()));
    }
    let dim = pairs[0].dim();
    if let Some(bad) = pairs.iter().find(|p| p.dim() != dim) {
        return Err(CoreError::DimensionMismatch(format!(
            "pairs mix dimensions {dim} and {}",
            bad.dim()
        )));
    }
    let mut rows = Vec::with_capacity(pairs.len() * 2);
    for pair in pairs {
        rows.push(pair.uncond.clone());
        rows.push(pair.cond.clone());
    }
    let svd = svd_thin(&Matrix::from_rows(&rows)?)?;
    let sigma = &svd.singular_values;
    let retained = if sigma.len() < 2 { None } else { spectral_gap_index(sigma)? };
    match retained {
        None => Ok(pairs.iter().map(|p| p.uncond.clone()).collect()),
        Some(rank) => Ok(pairs
            .iter()
            .map(|p| {
                let mut s_hat = vec![0.0; dim];
                for j in 0..rank {
                    let v = svd.right_vector(j);
                    let coeff = dot(&p.uncond, v);
                    for (out, vj) in s_hat.iter_mut().zip(v) {
                        *out += coeff * vj;
                    }
                }
                s_hat
            })
            .collect()),
    }
}
