//! Per-ground-truth IoU threshold of metric-aligned selection: the adaptive
//! mean-plus-deviation threshold scaled by an aspect-ratio/angle factor.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use super::GroundTruth;
use crate::error::{Error, Result};
use crate::geometry::wrap_angle;

/// Aspect ratio at which the compensation factor makes the weight exactly 1
/// (for maximal angular deviation).
pub const REFERENCE_ASPECT: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaMode {
    AngleDependent,
    ConstantOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MasConfig {
    pub gamma: f64,
    pub lambda_mode: LambdaMode,
    /// Candidates kept per pyramid level.
    pub candidate_k: usize,
    pub threshold_clamp: (f64, f64),
    /// Require positive anchor centers to lie inside the ground truth.
    pub use_center_prior: bool,
    /// Give every ground truth with an overlapping candidate at least one
    /// positive.
    pub low_quality_fallback: bool,
    /// Debug: use the signed angle weight instead of its magnitude.
    pub raw_lambda: bool,
}

impl Default for MasConfig {
    fn default() -> Self {
        MasConfig {
            gamma: 5.0,
            lambda_mode: LambdaMode::AngleDependent,
            candidate_k: 9,
            threshold_clamp: (0.05, 0.95),
            use_center_prior: true,
            low_quality_fallback: true,
            raw_lambda: false,
        }
    }
}

impl MasConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be > 0, got {}",
                self.gamma
            )));
        }
        let (lo, hi) = self.threshold_clamp;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "threshold clamp must satisfy 0 <= min < max <= 1, got ({lo}, {hi})"
            )));
        }
        if self.candidate_k == 0 {
            return Err(Error::InvalidConfig("candidate_k must be >= 1".into()));
        }
        Ok(())
    }

    /// Angle weight entering the exponent for this configuration.
    pub fn lambda(&self, theta: f64) -> f64 {
        match self.lambda_mode {
            LambdaMode::ConstantOne => 1.0,
            LambdaMode::AngleDependent if self.raw_lambda => angle_weight(theta),
            LambdaMode::AngleDependent => angle_weight(theta).abs(),
        }
    }

    /// Threshold weighting factor for a ground truth.
    pub fn weight(&self, gt: &GroundTruth) -> f64 {
        weight_from_lambda(gt.aspect, self.lambda(gt.angle), self.gamma)
    }
}

/// Signed angle weight. Negative on `[-pi/4, pi/4)`, positive on
/// `[pi/4, 3pi/4)`; magnitude 1/2 at the equilibrium angles 0 and pi/2 and 1
/// at the branch boundaries. Angles outside the range are wrapped by pi.
pub fn angle_weight(theta: f64) -> f64 {
    let t = wrap_angle(theta, -FRAC_PI_4, PI);
    if t < FRAC_PI_4 {
        -0.5 - (-t).sin().powi(2)
    } else {
        0.5 + (t - FRAC_PI_2).sin().powi(2)
    }
}

/// `exp(1.5/gamma) * exp(-(aspect/gamma) * lambda)`, evaluated as a single
/// exponential so the reference shape gives exactly 1.
fn weight_from_lambda(aspect: f64, lambda: f64, gamma: f64) -> f64 {
    ((REFERENCE_ASPECT - aspect * lambda) / gamma).exp()
}

/// Aspect-ratio/angle weighting factor using the angle weight magnitude.
pub fn shape_weight(aspect: f64, theta: f64, gamma: f64) -> f64 {
    weight_from_lambda(aspect, angle_weight(theta).abs(), gamma)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IouStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl IouStats {
    pub fn init_threshold(&self) -> f64 {
        self.mean + self.std
    }
}

pub fn iou_statistics(ious: &[f64]) -> Result<IouStats> {
    if ious.is_empty() {
        return Err(Error::NoCandidates);
    }
    let n = ious.len() as f64;
    let mean = ious.iter().sum::<f64>() / n;
    let var = ious.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(IouStats {
        mean,
        std: var.sqrt(),
    })
}

/// Threshold before clamping: `weight * (mean + std)`.
pub fn mas_threshold_unclamped(gt: &GroundTruth, ious: &[f64], cfg: &MasConfig) -> Result<f64> {
    Ok(cfg.weight(gt) * iou_statistics(ious)?.init_threshold())
}

pub fn mas_threshold(gt: &GroundTruth, ious: &[f64], cfg: &MasConfig) -> Result<f64> {
    let (lo, hi) = cfg.threshold_clamp;
    Ok(mas_threshold_unclamped(gt, ious, cfg)?.clamp(lo, hi))
}
