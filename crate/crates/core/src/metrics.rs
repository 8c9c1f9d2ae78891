//! Sequence-level coherence and dynamism measures.
//!
//! Temporal regularity is the mean L2 norm of second differences with
//! open boundaries (no wrap, unlike the operator stencil); dynamism is
//! the mean adjacent L2 distance. Both are folded into a bounded
//! soft-min storytelling score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::FeatureSequence;

/// Score shaping constants: bounding rates and the soft-min power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    pub gamma_r: f64,
    pub gamma_d: f64,
    pub p: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            gamma_r: 0.1,
            gamma_d: 0.1,
            p: 4.0,
        }
    }
}

impl MetricConfig {
    /// Shaping constants for the desk-scale harness. The default rates
    /// target encoder-scale features where R sits near 20; desk
    /// trajectories have R near 0.6, so gamma = 3 keeps gamma*R in the
    /// same operating range and the soft-min trade-off visible.
    pub fn desk() -> Self {
        MetricConfig {
            gamma_r: 3.0,
            gamma_d: 3.0,
            p: 4.0,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma_r.is_finite()
            || self.gamma_r <= 0.0
            || !self.gamma_d.is_finite()
            || self.gamma_d <= 0.0
        {
            return Err(Error::NegativeConstant {
                name: "gamma",
                value: self.gamma_r.min(self.gamma_d),
            });
        }
        if !self.p.is_finite() || self.p < 1.0 {
            return Err(Error::NegativeConstant {
                name: "p",
                value: self.p,
            });
        }
        Ok(())
    }
}

/// Full evaluation of one feature trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(rename = "T")]
    pub t: usize,
    pub r: f64,
    pub d: f64,
    pub r_hat: f64,
    pub d_hat: f64,
    pub s: f64,
    pub adjacent_cosine: f64,
}

fn frame_diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let diff = x - y;
            diff * diff
        })
        .sum::<f64>()
        .sqrt()
}

/// Mean L2 norm of second differences over the T-2 interior frames.
pub fn temporal_regularity(f: &FeatureSequence) -> Result<f64> {
    let t = f.frames();
    if t < 3 {
        return Err(Error::TooFewFrames { needed: 3, got: t });
    }
    let mut total = 0.0;
    for mid in 1..t - 1 {
        let prev = f.frame(mid - 1);
        let cur = f.frame(mid);
        let next = f.frame(mid + 1);
        let norm_sq: f64 = (0..cur.len())
            .map(|i| {
                let second = next[i] - 2.0 * cur[i] + prev[i];
                second * second
            })
            .sum();
        total += norm_sq.sqrt();
    }
    Ok(total / (t - 2) as f64)
}

/// Mean adjacent L2 distance over the T-1 gaps.
pub fn first_order_variation(f: &FeatureSequence) -> Result<f64> {
    let t = f.frames();
    if t < 2 {
        return Err(Error::TooFewFrames { needed: 2, got: t });
    }
    let total: f64 = (0..t - 1)
        .map(|i| frame_diff_norm(f.frame(i + 1), f.frame(i)))
        .sum();
    Ok(total / (t - 1) as f64)
}

/// Bounded scores and their soft-min aggregate.
///
/// r_hat = exp(-gamma_r R), d_hat = 1 - exp(-gamma_d D), and
/// S = ((r_hat^-p + d_hat^-p)/2)^(-1/p). D = 0 gives d_hat = 0 and, by
/// the continuity convention, S = 0.
pub fn storytelling_quality(r: f64, d: f64, cfg: &MetricConfig) -> Result<(f64, f64, f64)> {
    cfg.validate()?;
    let r_hat = (-cfg.gamma_r * r).exp();
    let d_hat = 1.0 - (-cfg.gamma_d * d).exp();
    let s = if d_hat == 0.0 {
        0.0
    } else {
        let inner = (r_hat.powf(-cfg.p) + d_hat.powf(-cfg.p)) / 2.0;
        inner.powf(-1.0 / cfg.p)
    };
    Ok((r_hat, d_hat, s))
}

/// Mean cosine similarity between adjacent frames.
pub fn adjacent_similarity(f: &FeatureSequence) -> Result<f64> {
    let t = f.frames();
    if t < 2 {
        return Err(Error::TooFewFrames { needed: 2, got: t });
    }
    let norms: Vec<f64> = (0..t)
        .map(|i| f.frame(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if let Some(zero) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroNormFrame(zero));
    }
    let mut total = 0.0;
    for i in 0..t - 1 {
        let dot: f64 = f.frame(i).iter().zip(f.frame(i + 1)).map(|(a, b)| a * b).sum();
        total += dot / (norms[i] * norms[i + 1]);
    }
    Ok(total / (t - 1) as f64)
}

/// Evaluates everything at once; needs T >= 3 and nonzero frame norms.
pub fn evaluate(f: &FeatureSequence, cfg: &MetricConfig) -> Result<MetricReport> {
    let r = temporal_regularity(f)?;
    let d = first_order_variation(f)?;
    let (r_hat, d_hat, s) = storytelling_quality(r, d, cfg)?;
    let adjacent_cosine = adjacent_similarity(f)?;
    Ok(MetricReport {
        t: f.frames(),
        r,
        d,
        r_hat,
        d_hat,
        s,
        adjacent_cosine,
    })
}
