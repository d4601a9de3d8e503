//! Finite-difference gradient checks and synthetic scale-adaptive beta
//! trajectories.
//!
//! The trajectory emulates improving proposal quality with a fixed schedule;
//! it is not a training run.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ensure_dir, write_csv, write_json, RunConfig};
use crate::error::{Error, Result};
use crate::loss::{
    focal_loss, focal_loss_grad, smooth_l1, smooth_l1_grad, update_beta, BetaState, FocalConfig,
};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossCheckConfig {
    /// Evaluation points per gradient check.
    pub points: usize,
    /// Central-difference step.
    pub step: f64,
    /// Maximum allowed relative gradient error.
    pub tolerance: f64,
    pub smooth_l1_beta: f64,
    pub focal: FocalConfig,
    pub iterations: usize,
    /// Time constant of the improving-quality schedule.
    pub tau: f64,
    /// Proposals per synthetic batch.
    pub batch: usize,
    /// Iterations ignored by the monotonicity check.
    pub warmup: usize,
    pub beta: BetaState,
}

impl Default for LossCheckConfig {
    fn default() -> Self {
        LossCheckConfig {
            points: 1000,
            step: 1e-6,
            tolerance: 1e-5,
            smooth_l1_beta: 1.0,
            focal: FocalConfig::default(),
            iterations: 100,
            tau: 10.0,
            batch: 64,
            warmup: 10,
            beta: BetaState::default(),
        }
    }
}

impl LossCheckConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.points == 0 || self.iterations == 0 || self.batch == 0 {
            return bad("points, iterations and batch must be >= 1");
        }
        if !(self.step > 0.0 && self.tolerance > 0.0 && self.tau > 0.0 && self.smooth_l1_beta > 0.0)
        {
            return bad("step, tolerance, tau and smooth_l1_beta must be > 0");
        }
        if !(0.0..=1.0).contains(&self.focal.alpha) || self.focal.gamma < 0.0 {
            return bad("focal alpha must be in [0, 1] and gamma >= 0");
        }
        self.beta.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub name: String,
    pub points: usize,
    pub max_rel_error: f64,
    /// Input with the largest error.
    pub worst_input: f64,
    pub failures: usize,
}

fn rel_error(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

fn check(
    name: &str,
    inputs: &[f64],
    h: f64,
    tol: f64,
    f: impl Fn(f64) -> f64,
    grad: impl Fn(f64) -> f64,
) -> GradientCheck {
    let mut out = GradientCheck {
        name: name.to_string(),
        points: inputs.len(),
        max_rel_error: 0.0,
        worst_input: f64::NAN,
        failures: 0,
    };
    for &x in inputs {
        let numeric = (f(x + h) - f(x - h)) / (2.0 * h);
        let e = rel_error(grad(x), numeric);
        if e > out.max_rel_error || out.worst_input.is_nan() {
            out.max_rel_error = e.max(out.max_rel_error);
            out.worst_input = x;
        }
        out.failures += usize::from(e > tol);
    }
    out
}

const KNEE_MARGIN: f64 = 1e-4;

/// Central-difference checks of the smooth-L1 and focal gradients (focal in
/// both target states) at `points` seeded inputs each.
pub fn gradient_checks(c: &LossCheckConfig, seed: u64) -> Vec<GradientCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = c.smooth_l1_beta;
    // Samples within KNEE_MARGIN of |x| = beta are skipped.
    let xs: Vec<f64> = std::iter::repeat_with(|| rng.gen_range(-3.0 * b..3.0 * b))
        .filter(|x| (x.abs() - b).abs() > KNEE_MARGIN)
        .take(c.points)
        .collect();
    let ps: Vec<f64> = (0..c.points).map(|_| rng.gen_range(0.01..0.99)).collect();
    let FocalConfig { alpha, gamma } = c.focal;
    vec![
        check(
            "smooth_l1",
            &xs,
            c.step,
            c.tolerance,
            |x| smooth_l1(x, b),
            |x| smooth_l1_grad(x, b),
        ),
        check(
            "focal_positive",
            &ps,
            c.step,
            c.tolerance,
            |p| focal_loss(p, true, alpha, gamma),
            |p| focal_loss_grad(p, true, alpha, gamma),
        ),
        check(
            "focal_negative",
            &ps,
            c.step,
            c.tolerance,
            |p| focal_loss(p, false, alpha, gamma),
            |p| focal_loss_grad(p, false, alpha, gamma),
        ),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum QualitySchedule {
    /// `s(t) = 1 - 0.5 * exp(-t / tau)`.
    Improving {
        tau: f64,
    },
    Constant(f64),
}

impl QualitySchedule {
    pub fn quality(self, t: usize) -> f64 {
        match self {
            QualitySchedule::Improving { tau } => 1.0 - 0.5 * (-(t as f64) / tau).exp(),
            QualitySchedule::Constant(s) => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaRow {
    pub iteration: usize,
    pub quality: f64,
    pub raw_target: f64,
    pub beta: f64,
}

/// Beta after each iteration. Batch similarities are
/// `1 - (1 - s(t)) * u_i` with per-proposal spreads `u_i` in `[0.5, 1.5)`
/// drawn once from `seed`, so the batch statistic follows `s(t)`.
pub fn beta_trajectory(
    initial: &BetaState,
    schedule: QualitySchedule,
    iterations: usize,
    batch: usize,
    seed: u64,
) -> Vec<BetaRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread: Vec<f64> = (0..batch).map(|_| rng.gen_range(0.5..1.5)).collect();
    let mut state = initial.clone();
    (0..iterations)
        .map(|t| {
            let s = schedule.quality(t);
            let sims: Vec<f64> = spread
                .iter()
                .map(|u| (1.0 - (1.0 - s) * u).clamp(0.0, 1.0))
                .collect();
            state = update_beta(&state, &sims);
            BetaRow {
                iteration: t,
                quality: s,
                raw_target: state.last_raw_target.unwrap_or(f64::NAN),
                beta: state.beta_scale,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCheckReport {
    pub schema_version: u32,
    pub seed: u64,
    pub gradients: Vec<GradientCheck>,
    pub max_rel_error: f64,
    pub improving_final_beta: f64,
    pub improving_non_increasing_after_warmup: bool,
    pub constant_final_beta: f64,
    pub constant_reaches_min: bool,
    pub beta_within_clamp: bool,
    pub failures: Vec<String>,
}

const BETA_HEADER: [&str; 4] = ["iteration", "quality", "raw_target", "beta"];

fn beta_rows(rows: &[BetaRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.iteration.to_string(),
                r.quality.to_string(),
                r.raw_target.to_string(),
                r.beta.to_string(),
            ]
        })
        .collect()
}

/// Writes `beta_improving.csv`, `beta_constant.csv` and `loss_check.json`.
/// Any failed check is reported as a self-check failure after the files are
/// written.
pub fn cmd_loss_check(cfg: &RunConfig, out: &Path) -> Result<LossCheckReport> {
    let c = &cfg.loss_check;
    let gradients = gradient_checks(c, cfg.seed);
    let improving = beta_trajectory(
        &c.beta,
        QualitySchedule::Improving { tau: c.tau },
        c.iterations,
        c.batch,
        cfg.seed,
    );
    let constant = beta_trajectory(
        &c.beta,
        QualitySchedule::Constant(1.0),
        c.iterations,
        c.batch,
        cfg.seed,
    );
    let (lo, hi) = c.beta.clamp;

    let mut failures: Vec<String> = gradients
        .iter()
        .filter(|g| g.failures > 0)
        .map(|g| {
            format!(
                "{}: {} of {} points exceed {:e} (max {:e} at {})",
                g.name, g.failures, g.points, c.tolerance, g.max_rel_error, g.worst_input
            )
        })
        .collect();
    let non_increasing = improving
        .iter()
        .skip(c.warmup)
        .collect::<Vec<_>>()
        .windows(2)
        .all(|w| w[1].beta <= w[0].beta);
    if !non_increasing {
        failures.push("beta increases after warm-up under improving quality".into());
    }
    let constant_final = constant.last().map_or(c.beta.beta_scale, |r| r.beta);
    let reaches_min = constant_final == lo;
    if !reaches_min {
        failures.push(format!(
            "beta under constant quality ends at {constant_final}, not {lo}"
        ));
    }
    let within = improving
        .iter()
        .chain(&constant)
        .all(|r| (lo..=hi).contains(&r.beta));
    if !within {
        failures.push(format!("beta left [{lo}, {hi}]"));
    }

    let report = LossCheckReport {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        max_rel_error: gradients
            .iter()
            .map(|g| g.max_rel_error)
            .fold(0.0, f64::max),
        gradients,
        improving_final_beta: improving.last().map_or(c.beta.beta_scale, |r| r.beta),
        improving_non_increasing_after_warmup: non_increasing,
        constant_final_beta: constant_final,
        constant_reaches_min: reaches_min,
        beta_within_clamp: within,
        failures,
    };
    let dir = ensure_dir(out)?;
    write_csv(
        &dir.join("beta_improving.csv"),
        &BETA_HEADER,
        &beta_rows(&improving),
    )?;
    write_csv(
        &dir.join("beta_constant.csv"),
        &BETA_HEADER,
        &beta_rows(&constant),
    )?;
    write_json(&dir.join("loss_check.json"), &report)?;
    if report.failures.is_empty() {
        Ok(report)
    } else {
        Err(Error::SelfCheck(report.failures))
    }
}
