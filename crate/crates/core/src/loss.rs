//! Regression and classification losses, including the scale-controlled
//! adaptive smooth-L1 `beta`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::assign::{AnchorGrid, AssignmentResult, GroundTruth, Label};
use crate::error::{Error, Result};
use crate::geometry::{normalize_obb, OrientedBox};

/// Probability clamp for the focal loss.
pub const PROB_EPS: f64 = 1e-12;

/// Regression target of a ground truth relative to an anchor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoxDelta {
    pub dx: f64,
    pub dy: f64,
    pub dw: f64,
    pub dh: f64,
    pub dtheta: f64,
}

impl BoxDelta {
    pub fn components(&self) -> [f64; 5] {
        [self.dx, self.dy, self.dw, self.dh, self.dtheta]
    }
}

/// Wrap an angle difference into `(-pi/2, pi/2]`.
fn wrap_half_turn(d: f64) -> f64 {
    let r = d.rem_euclid(PI);
    if r > FRAC_PI_2 {
        r - PI
    } else {
        r
    }
}

pub fn box_deltas(anchor: &OrientedBox, gt: &OrientedBox) -> BoxDelta {
    BoxDelta {
        dx: (gt.cx - anchor.cx) / anchor.w,
        dy: (gt.cy - anchor.cy) / anchor.h,
        dw: (gt.w / anchor.w).ln(),
        dh: (gt.h / anchor.h).ln(),
        dtheta: wrap_half_turn(gt.theta - anchor.theta),
    }
}

/// Inverse of [`box_deltas`], normalized to the long-edge convention.
pub fn decode_deltas(anchor: &OrientedBox, d: &BoxDelta) -> Result<OrientedBox> {
    normalize_obb(
        anchor.cx + d.dx * anchor.w,
        anchor.cy + d.dy * anchor.h,
        anchor.w * d.dw.exp(),
        anchor.h * d.dh.exp(),
        anchor.theta + d.dtheta,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothL1Config {
    pub beta: f64,
}

impl Default for SmoothL1Config {
    fn default() -> Self {
        SmoothL1Config { beta: 1.0 }
    }
}

pub fn smooth_l1(x: f64, beta: f64) -> f64 {
    let a = x.abs();
    if a < beta {
        0.5 * a * a / beta
    } else {
        a - 0.5 * beta
    }
}

pub fn smooth_l1_grad(x: f64, beta: f64) -> f64 {
    if x.abs() < beta {
        x / beta
    } else {
        x.signum()
    }
}

/// Binary focal loss of probability `p` against target `t`.
pub fn focal_loss(p: f64, positive: bool, alpha: f64, gamma: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if positive {
        -alpha * (1.0 - p).powf(gamma) * p.ln()
    } else {
        -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln()
    }
}

/// Derivative of [`focal_loss`] with respect to `p` (inside the clamp).
pub fn focal_loss_grad(p: f64, positive: bool, alpha: f64, gamma: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if positive {
        let q = 1.0 - p;
        alpha * (gamma * q.powf(gamma - 1.0) * p.ln() - q.powf(gamma) / p)
    } else {
        let q = 1.0 - p;
        -(1.0 - alpha) * (gamma * p.powf(gamma - 1.0) * q.ln() - p.powf(gamma) / q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FocalConfig {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalConfig {
    fn default() -> Self {
        FocalConfig {
            alpha: 0.25,
            gamma: 2.0,
        }
    }
}

/// `min(sqrt(A_p / A_g), sqrt(A_g / A_p))`.
pub fn scale_similarity(proposal: &OrientedBox, gt: &OrientedBox) -> f64 {
    let r = (proposal.area() / gt.area()).sqrt();
    r.min(1.0 / r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "k")]
pub enum BetaTarget {
    /// Median of `1 - s` over the batch.
    Median,
    /// k-th smallest (1-based) of `1 - s`, clamped to the batch size.
    KthSmallest(usize),
}

/// Running adaptive `beta` of the scale-controlled smooth L1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BetaState {
    pub beta_scale: f64,
    pub momentum: f64,
    pub clamp: (f64, f64),
    pub target: BetaTarget,
    /// Pre-clamp target of the last applied update.
    pub last_raw_target: Option<f64>,
    /// Updates skipped because the batch was empty.
    pub skipped_updates: u64,
}

impl Default for BetaState {
    fn default() -> Self {
        BetaState {
            beta_scale: 1.0,
            momentum: 0.9,
            clamp: (0.02, 1.0),
            target: BetaTarget::Median,
            last_raw_target: None,
            skipped_updates: 0,
        }
    }
}

impl BetaState {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.clamp;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidConfig(format!("bad beta clamp ({lo}, {hi})")));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(lo..=hi).contains(&self.beta_scale) {
            return Err(Error::InvalidConfig(format!(
                "initial beta {} outside clamp ({lo}, {hi})",
                self.beta_scale
            )));
        }
        if self.target == BetaTarget::KthSmallest(0) {
            return Err(Error::InvalidConfig("k-th smallest needs k >= 1".into()));
        }
        Ok(())
    }
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Batch statistic of the normalized scale mismatch `1 - s`.
pub fn beta_target(similarities: &[f64], mode: BetaTarget) -> Option<f64> {
    if similarities.is_empty() {
        return None;
    }
    let mut d: Vec<f64> = similarities.iter().map(|s| 1.0 - s).collect();
    d.sort_by(f64::total_cmp);
    Some(match mode {
        BetaTarget::Median => median_sorted(&d),
        BetaTarget::KthSmallest(k) => d[k.clamp(1, d.len()) - 1],
    })
}

/// One SC-Loss step: EMA towards the batch target, then clamp. An empty
/// batch leaves `beta` untouched and bumps `skipped_updates`.
pub fn update_beta(state: &BetaState, similarities: &[f64]) -> BetaState {
    let mut next = state.clone();
    match beta_target(similarities, state.target) {
        None => next.skipped_updates += 1,
        Some(t) => {
            let m = state.momentum;
            next.beta_scale =
                (m * state.beta_scale + (1.0 - m) * t).clamp(state.clamp.0, state.clamp.1);
            next.last_raw_target = Some(t);
        }
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub smooth_l1: SmoothL1Config,
    pub focal: FocalConfig,
    /// Regression weight.
    pub lambda_reg: f64,
    /// Classification weight.
    pub lambda_cls: f64,
    /// Initial-head weight.
    pub alpha_init: f64,
    /// Refined-head weight.
    pub alpha_refine: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            smooth_l1: SmoothL1Config::default(),
            focal: FocalConfig::default(),
            lambda_reg: 1.0,
            lambda_cls: 1.0,
            alpha_init: 1.0,
            alpha_refine: 1.0,
        }
    }
}

/// Regression and class targets per anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTargets {
    pub labels: Vec<Label>,
    /// Target deltas; only meaningful for positive anchors.
    pub deltas: Vec<BoxDelta>,
    /// Class of the matched ground truth; `None` unless positive.
    pub classes: Vec<Option<usize>>,
}

impl LossTargets {
    pub fn from_assignment(
        anchors: &AnchorGrid,
        gts: &[GroundTruth],
        assignment: &AssignmentResult,
    ) -> Self {
        let mut deltas = vec![BoxDelta::default(); anchors.len()];
        let mut classes = vec![None; anchors.len()];
        for (i, l) in assignment.labels.iter().enumerate() {
            if let Label::Positive(g) = *l {
                deltas[i] = box_deltas(&anchors.anchors()[i], &gts[g].bbox);
                classes[i] = Some(gts[g].class_id);
            }
        }
        LossTargets {
            labels: assignment.labels.clone(),
            deltas,
            classes,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Predictions of one detection head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    pub deltas: Vec<BoxDelta>,
    /// Per-anchor sigmoid probabilities, `num_classes` per anchor.
    pub class_probs: Vec<f64>,
    pub num_classes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeadLoss {
    pub reg_loss: f64,
    pub cls_loss: f64,
    pub total: f64,
    pub num_positive: usize,
}

/// `(lambda_reg/N) * sum reg + (lambda_cls/N) * sum cls` with `N` the
/// positive count (at least 1). Regression runs over positives only;
/// classification over positives and negatives.
pub fn head_loss(targets: &LossTargets, out: &HeadOutput, cfg: &LossConfig) -> Result<HeadLoss> {
    let n = targets.len();
    if out.deltas.len() != n || out.class_probs.len() != n * out.num_classes {
        return Err(Error::InvalidInput(format!(
            "prediction shapes ({} deltas, {} probs for {} classes) do not match {n} anchors",
            out.deltas.len(),
            out.class_probs.len(),
            out.num_classes
        )));
    }
    if targets
        .classes
        .iter()
        .flatten()
        .any(|&c| c >= out.num_classes)
    {
        return Err(Error::InvalidInput(
            "target class outside prediction classes".into(),
        ));
    }
    let beta = cfg.smooth_l1.beta;
    let FocalConfig { alpha, gamma } = cfg.focal;
    let mut reg = 0.0;
    let mut cls = 0.0;
    let mut num_positive = 0;
    for i in 0..n {
        let probs = &out.class_probs[i * out.num_classes..(i + 1) * out.num_classes];
        match targets.labels[i] {
            Label::Ignore => {}
            Label::Negative => {
                cls += probs
                    .iter()
                    .map(|&p| focal_loss(p, false, alpha, gamma))
                    .sum::<f64>();
            }
            Label::Positive(_) => {
                num_positive += 1;
                let t = targets.deltas[i].components();
                let p = out.deltas[i].components();
                reg += t
                    .iter()
                    .zip(p)
                    .map(|(t, p)| smooth_l1(p - t, beta))
                    .sum::<f64>();
                let class = targets.classes[i];
                cls += probs
                    .iter()
                    .enumerate()
                    .map(|(c, &p)| focal_loss(p, Some(c) == class, alpha, gamma))
                    .sum::<f64>();
            }
        }
    }
    let norm = num_positive.max(1) as f64;
    let reg_loss = cfg.lambda_reg * reg / norm;
    let cls_loss = cfg.lambda_cls * cls / norm;
    Ok(HeadLoss {
        reg_loss,
        cls_loss,
        total: reg_loss + cls_loss,
        num_positive,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub init: HeadLoss,
    pub refine: HeadLoss,
    pub reg_loss: f64,
    pub cls_loss: f64,
    pub total: f64,
    pub config: LossConfig,
}

/// Two-head composition `alpha_init * L_init + alpha_refine * L_refine`.
pub fn multi_task_loss(
    init: (&LossTargets, &HeadOutput),
    refine: (&LossTargets, &HeadOutput),
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    let li = head_loss(init.0, init.1, cfg)?;
    let lr = head_loss(refine.0, refine.1, cfg)?;
    let (a1, a2) = (cfg.alpha_init, cfg.alpha_refine);
    Ok(LossBreakdown {
        init: li,
        refine: lr,
        reg_loss: a1 * li.reg_loss + a2 * lr.reg_loss,
        cls_loss: a1 * li.cls_loss + a2 * lr.cls_loss,
        total: a1 * li.total + a2 * lr.total,
        config: *cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assign::{assign_atss, generate_anchors};
    use std::f64::consts::E;

    #[test]
    fn deltas_identity_and_log_ratio() {
        let a = OrientedBox::new(10.0, 5.0, 8.0, 4.0, 0.3).unwrap();
        assert_eq!(box_deltas(&a, &a), BoxDelta::default());
        let g = OrientedBox { w: a.w * E, ..a };
        assert!((box_deltas(&a, &g).dw - 1.0).abs() < 1e-15);
    }

    #[test]
    fn angle_delta_wraps() {
        let a = OrientedBox::new(0.0, 0.0, 8.0, 4.0, -0.7).unwrap();
        let g = OrientedBox::new(0.0, 0.0, 8.0, 4.0, 2.3).unwrap();
        let d = box_deltas(&a, &g).dtheta;
        assert!(d > -FRAC_PI_2 && d <= FRAC_PI_2);
        assert!((d - (3.0 - PI)).abs() < 1e-12);
        assert_eq!(wrap_half_turn(FRAC_PI_2), FRAC_PI_2);
        assert!((wrap_half_turn(-FRAC_PI_2) - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(smooth_l1(0.0, 0.7), 0.0);
        assert_eq!(smooth_l1(0.7, 0.7), 0.35);
        assert!((smooth_l1(0.7 - 1e-12, 0.7) - 0.35).abs() < 1e-11);
        assert_eq!(smooth_l1(2.0, 1.0), 1.5);
        assert_eq!(smooth_l1(-2.0, 1.0), 1.5);
        assert_eq!(smooth_l1_grad(0.0, 1.0), 0.0);
        assert_eq!(smooth_l1_grad(10.0, 1.0), 1.0);
        assert_eq!(smooth_l1_grad(0.5, 1.0), 0.5);
        assert_eq!(smooth_l1_grad(-3.0, 1.0), -1.0);
    }

    #[test]
    fn focal_examples() {
        let v = focal_loss(0.5, true, 0.25, 2.0);
        assert!((v - 0.25 * 0.25 * 2f64.ln()).abs() < 1e-15);
        assert!((v - 0.04332).abs() < 1e-5);
        let ce = -(0.3f64).ln();
        assert!((focal_loss(0.3, true, 0.5, 0.0) - 0.5 * ce).abs() < 1e-15);
        assert!(focal_loss(1.0 - 1e-9, true, 0.25, 2.0) < 1e-18);
        assert!(focal_loss(1.0, true, 0.25, 2.0).is_finite());
        assert!(focal_loss(0.0, true, 0.25, 2.0).is_finite());
    }

    #[test]
    fn scale_similarity_examples() {
        let g = OrientedBox::new(0.0, 0.0, 8.0, 2.0, 0.0).unwrap();
        let p = OrientedBox::new(3.0, 1.0, 4.0, 4.0, 0.5).unwrap();
        assert_eq!(scale_similarity(&p, &g), 1.0);
        let big = OrientedBox::new(0.0, 0.0, 16.0, 4.0, 0.0).unwrap();
        assert_eq!(scale_similarity(&big, &g), 0.5);
        assert_eq!(scale_similarity(&g, &big), 0.5);
    }

    #[test]
    fn beta_median_target_and_clamp() {
        assert!((beta_target(&[0.6, 0.8, 0.9], BetaTarget::Median).unwrap() - 0.2).abs() < 1e-15);
        assert!(
            (beta_target(&[0.6, 0.8, 0.9, 1.0], BetaTarget::Median).unwrap() - 0.15).abs() < 1e-15
        );
        assert!(
            (beta_target(&[0.6, 0.8, 0.9], BetaTarget::KthSmallest(1)).unwrap() - 0.1).abs()
                < 1e-15
        );
        assert!(
            (beta_target(&[0.6, 0.8, 0.9], BetaTarget::KthSmallest(9)).unwrap() - 0.4).abs()
                < 1e-15
        );

        let jump = BetaState {
            momentum: 0.0,
            ..BetaState::default()
        };
        let s = update_beta(&jump, &[0.6, 0.8, 0.9]);
        assert!((s.beta_scale - 0.2).abs() < 1e-15);
        assert!((s.last_raw_target.unwrap() - 0.2).abs() < 1e-15);

        let mut s = BetaState::default();
        for _ in 0..200 {
            s = update_beta(&s, &[1.0, 1.0]);
        }
        assert_eq!(s.beta_scale, s.clamp.0);
    }

    #[test]
    fn empty_batch_is_flagged() {
        let s = BetaState::default();
        let n = update_beta(&s, &[]);
        assert_eq!(n.beta_scale, s.beta_scale);
        assert_eq!(n.skipped_updates, 1);
        assert_eq!(n.last_raw_target, None);
    }

    #[test]
    fn beta_state_validation() {
        assert!(BetaState::default().validate().is_ok());
        let bad = BetaState {
            momentum: 1.0,
            ..BetaState::default()
        };
        assert!(bad.validate().is_err());
        let bad = BetaState {
            beta_scale: 2.0,
            ..BetaState::default()
        };
        assert!(bad.validate().is_err());
    }

    fn scene() -> (AnchorGrid, Vec<GroundTruth>, LossTargets) {
        let anchors = generate_anchors(64.0, 64.0, &[8.0, 16.0], 4.0).unwrap();
        let gts = vec![
            GroundTruth::new(OrientedBox::new(20.0, 30.0, 30.0, 10.0, 0.4).unwrap(), 1),
            GroundTruth::new(OrientedBox::new(45.0, 12.0, 16.0, 12.0, 1.2).unwrap(), 0),
        ];
        let a = assign_atss(&anchors, &gts, 9);
        let t = LossTargets::from_assignment(&anchors, &gts, &a);
        (anchors, gts, t)
    }

    fn perfect(t: &LossTargets, classes: usize) -> HeadOutput {
        let mut probs = vec![PROB_EPS; t.len() * classes];
        for (i, c) in t.classes.iter().enumerate() {
            if let Some(c) = c {
                probs[i * classes + c] = 1.0 - PROB_EPS;
            }
        }
        HeadOutput {
            deltas: t.deltas.clone(),
            class_probs: probs,
            num_classes: classes,
        }
    }

    #[test]
    fn perfect_predictions_cost_nothing() {
        let (_, _, t) = scene();
        let out = perfect(&t, 2);
        let l = multi_task_loss((&t, &out), (&t, &out), &LossConfig::default()).unwrap();
        assert!(l.total <= 1e-6, "{l:?}");
        assert!(l.init.num_positive > 0);
    }

    #[test]
    fn no_positives_means_no_regression() {
        let anchors = generate_anchors(32.0, 32.0, &[8.0], 4.0).unwrap();
        let a = assign_atss(&anchors, &[], 9);
        let t = LossTargets::from_assignment(&anchors, &[], &a);
        let out = HeadOutput {
            deltas: vec![
                BoxDelta {
                    dx: 3.0,
                    ..BoxDelta::default()
                };
                t.len()
            ],
            class_probs: vec![0.3; t.len()],
            num_classes: 1,
        };
        let l = head_loss(&t, &out, &LossConfig::default()).unwrap();
        assert_eq!(l.reg_loss, 0.0);
        assert_eq!(l.total, l.cls_loss);
        assert!(l.cls_loss > 0.0);
    }

    #[test]
    fn regression_weight_is_linear() {
        let (_, _, t) = scene();
        let mut out = perfect(&t, 2);
        for d in &mut out.deltas {
            d.dx += 0.3;
            d.dtheta -= 2.0;
        }
        let base = head_loss(&t, &out, &LossConfig::default()).unwrap();
        let cfg2 = LossConfig {
            lambda_reg: 2.0,
            ..LossConfig::default()
        };
        let doubled = head_loss(&t, &out, &cfg2).unwrap();
        assert!(base.reg_loss > 0.0);
        assert_eq!(doubled.reg_loss, 2.0 * base.reg_loss);
        assert_eq!(doubled.cls_loss, base.cls_loss);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (_, _, t) = scene();
        let mut out = perfect(&t, 2);
        out.deltas.pop();
        assert!(matches!(
            head_loss(&t, &out, &LossConfig::default()),
            Err(Error::InvalidInput(_))
        ));
    }
}
