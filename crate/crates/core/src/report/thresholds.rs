//! Threshold surfaces over an (aspect, angle) grid, one per gamma.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ensure_dir, write_csv, write_json, RunConfig};
use crate::assign::{iou_statistics, MasConfig, REFERENCE_ASPECT};
use crate::error::{Error, Result};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdsConfig {
    pub gammas: Vec<f64>,
    pub aspect_range: (f64, f64),
    /// Grid points, endpoints included.
    pub aspect_steps: usize,
    /// Grid points over `[-pi/4, 3pi/4)`.
    pub angle_steps: usize,
    pub candidate_ious: Vec<f64>,
}

impl Default for ThresholdsConfig {
    fn default() -> Self {
        ThresholdsConfig {
            gammas: vec![3.0, 4.0, 5.0, 6.0, 7.0],
            aspect_range: (1.0, 12.0),
            aspect_steps: 100,
            angle_steps: 64,
            candidate_ious: vec![0.3, 0.5, 0.7],
        }
    }
}

impl ThresholdsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.gammas.is_empty() || self.gammas.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return bad(format!(
                "gammas must be a non-empty list of positive values, got {:?}",
                self.gammas
            ));
        }
        let (lo, hi) = self.aspect_range;
        if !(lo >= 1.0 && hi > lo && hi.is_finite()) {
            return bad(format!(
                "aspect range ({lo}, {hi}) must satisfy 1 <= min < max"
            ));
        }
        if self.aspect_steps < 2 || self.angle_steps < 4 || !self.angle_steps.is_multiple_of(4) {
            return bad("need >= 2 aspect steps and a multiple of 4 (>= 4) angle steps".into());
        }
        if self.candidate_ious.is_empty()
            || self.candidate_ious.iter().any(|v| !(0.0..=1.0).contains(v))
        {
            return bad("candidate IoUs must be a non-empty list in [0, 1]".into());
        }
        Ok(())
    }

    pub fn aspects(&self) -> Vec<f64> {
        let (lo, hi) = self.aspect_range;
        let n = self.aspect_steps - 1;
        (0..=n)
            .map(|i| lo + (hi - lo) * i as f64 / n as f64)
            .collect()
    }

    pub fn angles(&self) -> Vec<f64> {
        let n = self.angle_steps;
        (0..n)
            .map(|j| -FRAC_PI_4 + PI * j as f64 / n as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub aspect: f64,
    pub angle: f64,
    pub lambda: f64,
    pub f: f64,
    pub threshold_unclamped: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCheck {
    pub gamma: f64,
    /// Every fixed-angle column strictly decreases in aspect.
    pub decreasing_in_aspect: bool,
    /// Every fixed-aspect row peaks at an equilibrium angle (0 or pi/2).
    pub peak_at_equilibrium: bool,
    /// `f` at aspect 1.5 and angle pi/4.
    pub reference_weight: f64,
    pub failures: Vec<String>,
}

/// Row-major surface: `aspects.len()` rows of `angles.len()` entries.
pub fn threshold_surface(tc: &ThresholdsConfig, mas: &MasConfig) -> Result<Vec<SurfaceRow>> {
    let init = iou_statistics(&tc.candidate_ious)?.init_threshold();
    let (lo, hi) = mas.threshold_clamp;
    let angles = tc.angles();
    let mut rows = Vec::with_capacity(tc.aspect_steps * angles.len());
    for a in tc.aspects() {
        for &t in &angles {
            let lambda = mas.lambda(t);
            let f = ((REFERENCE_ASPECT - a * lambda) / mas.gamma).exp();
            let raw = f * init;
            rows.push(SurfaceRow {
                aspect: a,
                angle: t,
                lambda,
                f,
                threshold_unclamped: raw,
                threshold: raw.clamp(lo, hi),
            });
        }
    }
    Ok(rows)
}

fn check_surface(tc: &ThresholdsConfig, mas: &MasConfig, rows: &[SurfaceRow]) -> ThresholdCheck {
    let na = tc.angle_steps;
    let angles = tc.angles();
    let eq: Vec<usize> = [0.0, FRAC_PI_2]
        .iter()
        .map(|&e| {
            (0..na)
                .min_by(|&x, &y| (angles[x] - e).abs().total_cmp(&(angles[y] - e).abs()))
                .expect("angle grid is non-empty")
        })
        .collect();
    let mut failures = Vec::new();
    for (j, angle) in angles.iter().enumerate() {
        let col: Vec<f64> = rows.iter().skip(j).step_by(na).map(|r| r.f).collect();
        if let Some(i) = col.windows(2).position(|w| w[1] >= w[0]) {
            failures.push(format!(
                "angle {angle:.6}: f not decreasing at aspect index {}",
                i + 1
            ));
        }
    }
    let column_failures = failures.len();
    for (i, row) in rows.chunks(na).enumerate() {
        let best = row.iter().map(|r| r.f).fold(f64::NEG_INFINITY, f64::max);
        if !eq.iter().any(|&j| row[j].f == best) {
            failures.push(format!(
                "aspect {:.6} (row {i}): maximum not at an equilibrium angle",
                row[0].aspect
            ));
        }
    }
    let decreasing_in_aspect = column_failures == 0;
    let peak_at_equilibrium = failures.len() == column_failures;
    ThresholdCheck {
        gamma: mas.gamma,
        decreasing_in_aspect,
        peak_at_equilibrium,
        reference_weight: ((REFERENCE_ASPECT - REFERENCE_ASPECT * mas.lambda(FRAC_PI_4))
            / mas.gamma)
            .exp(),
        failures,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdsReport {
    pub schema_version: u32,
    pub init_threshold: f64,
    pub checks: Vec<ThresholdCheck>,
}

const HEADER: [&str; 7] = [
    "gamma",
    "aspect",
    "angle",
    "lambda",
    "f",
    "threshold_unclamped",
    "threshold",
];

/// Writes `thresholds_gamma_<g>.csv` per gamma and `thresholds.json`. A
/// surface violating the monotonicity checks is a self-check failure.
pub fn cmd_thresholds(cfg: &RunConfig, out: &Path) -> Result<ThresholdsReport> {
    let tc = &cfg.thresholds;
    let dir = ensure_dir(out)?;
    let mut checks = Vec::new();
    for &gamma in &tc.gammas {
        let mas = MasConfig {
            gamma,
            ..cfg.mas.clone()
        };
        let rows = threshold_surface(tc, &mas)?;
        let table: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                [
                    gamma,
                    r.aspect,
                    r.angle,
                    r.lambda,
                    r.f,
                    r.threshold_unclamped,
                    r.threshold,
                ]
                .iter()
                .map(f64::to_string)
                .collect()
            })
            .collect();
        write_csv(
            &dir.join(format!("thresholds_gamma_{gamma}.csv")),
            &HEADER,
            &table,
        )?;
        checks.push(check_surface(tc, &mas, &rows));
    }
    let report = ThresholdsReport {
        schema_version: SCHEMA_VERSION,
        init_threshold: iou_statistics(&tc.candidate_ious)?.init_threshold(),
        checks,
    };
    write_json(&dir.join("thresholds.json"), &report)?;
    let failures: Vec<String> = report
        .checks
        .iter()
        .flat_map(|c| {
            c.failures
                .iter()
                .map(move |f| format!("gamma {}: {f}", c.gamma))
        })
        .collect();
    if failures.is_empty() {
        Ok(report)
    } else {
        Err(Error::SelfCheck(failures))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_surface_passes_checks() {
        let tc = ThresholdsConfig::default();
        let mas = MasConfig::default();
        let rows = threshold_surface(&tc, &mas).unwrap();
        assert_eq!(rows.len(), 100 * 64);
        let c = check_surface(&tc, &mas, &rows);
        assert!(
            c.decreasing_in_aspect && c.peak_at_equilibrium,
            "{:?}",
            c.failures
        );
        assert_eq!(c.reference_weight, 1.0);
    }

    #[test]
    fn raw_lambda_surface_fails_checks() {
        let tc = ThresholdsConfig::default();
        let mas = MasConfig {
            raw_lambda: true,
            ..MasConfig::default()
        };
        let rows = threshold_surface(&tc, &mas).unwrap();
        let c = check_surface(&tc, &mas, &rows);
        assert!(!c.decreasing_in_aspect);
        assert!(!c.failures.is_empty());
    }
}
