//! Anchor labelling: metric-aligned selection (MAS) and the MaxIoU and ATSS
//! baselines it is compared against.

mod anchors;
mod threshold;

pub use anchors::{generate_anchors, AnchorGrid, PyramidLevel};
pub use threshold::{
    angle_weight, iou_statistics, mas_threshold, mas_threshold_unclamped, shape_weight, IouStats,
    LambdaMode, MasConfig, REFERENCE_ASPECT,
};

use serde::{Deserialize, Serialize};

use crate::geometry::{aspect_ratio, rotated_iou, OrientedBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub bbox: OrientedBox,
    pub class_id: usize,
    pub aspect: f64,
    pub angle: f64,
}

impl GroundTruth {
    pub fn new(bbox: OrientedBox, class_id: usize) -> Self {
        GroundTruth {
            bbox,
            class_id,
            aspect: aspect_ratio(&bbox),
            angle: bbox.theta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Negative,
    Ignore,
    Positive(usize),
}

impl Label {
    pub fn gt(self) -> Option<usize> {
        match self {
            Label::Positive(g) => Some(g),
            _ => None,
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Label::Positive(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult {
    pub labels: Vec<Label>,
    /// IoU threshold applied per ground truth; `None` when it had no
    /// candidates.
    pub thresholds: Vec<Option<f64>>,
    pub positives_per_gt: Vec<usize>,
}

impl AssignmentResult {
    fn from_labels(labels: Vec<Label>, thresholds: Vec<Option<f64>>) -> Self {
        let mut positives_per_gt = vec![0; thresholds.len()];
        for g in labels.iter().filter_map(|l| l.gt()) {
            positives_per_gt[g] += 1;
        }
        AssignmentResult {
            labels,
            thresholds,
            positives_per_gt,
        }
    }

    pub fn num_positive(&self) -> usize {
        self.positives_per_gt.iter().sum()
    }

    pub fn num_negative(&self) -> usize {
        self.labels
            .iter()
            .filter(|l| **l == Label::Negative)
            .count()
    }
}

/// The `k` anchors closest (by center distance) to the ground truth on every
/// pyramid level, level by level, nearest first. Ties go to the lower index.
pub fn select_candidates(anchors: &AnchorGrid, gt: &GroundTruth, k: usize) -> Vec<usize> {
    let c = gt.bbox.center();
    let all = anchors.anchors();
    let mut out = Vec::with_capacity(k * anchors.levels().len());
    let mut level: Vec<(f64, usize)> = Vec::new();
    for l in 0..anchors.levels().len() {
        level.clear();
        level.extend(
            anchors
                .level_range(l)
                .map(|i| (all[i].center().distance(c), i)),
        );
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let take = k.min(level.len());
        if take == 0 {
            continue;
        }
        if take < level.len() {
            level.select_nth_unstable_by(take - 1, cmp);
        }
        level[..take].sort_unstable_by(cmp);
        out.extend(level[..take].iter().map(|&(_, i)| i));
    }
    out
}

struct Candidates {
    anchors: Vec<usize>,
    ious: Vec<f64>,
}

fn candidates_for(anchors: &AnchorGrid, gt: &GroundTruth, k: usize) -> Candidates {
    let idx = select_candidates(anchors, gt, k);
    let ious = idx
        .iter()
        .map(|&i| rotated_iou(&anchors.anchors()[i], &gt.bbox))
        .collect();
    Candidates { anchors: idx, ious }
}

/// Low-quality fallback: each ground truth that ended with no positive but
/// overlaps one of its candidates takes its best free candidate. Anchors
/// claimed here are not reassigned again.
fn apply_fallback(labels: &mut [Label], cands: &[Candidates]) {
    let mut counts = vec![0usize; cands.len()];
    for g in labels.iter().filter_map(|l| l.gt()) {
        counts[g] += 1;
    }
    let mut locked = vec![false; labels.len()];
    loop {
        let mut changed = false;
        for (g, c) in cands.iter().enumerate() {
            if counts[g] > 0 {
                continue;
            }
            let best = c
                .anchors
                .iter()
                .zip(&c.ious)
                .filter(|(&a, &iou)| iou > 0.0 && !locked[a])
                .max_by(|x, y| x.1.total_cmp(y.1).then(y.0.cmp(x.0)));
            if let Some((&a, _)) = best {
                if let Label::Positive(prev) = labels[a] {
                    counts[prev] -= 1;
                }
                labels[a] = Label::Positive(g);
                counts[g] += 1;
                locked[a] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Adaptive-threshold assignment with an arbitrary per-ground-truth weight on
/// the mean-plus-deviation threshold. [`assign_mas`] is this with the
/// aspect/angle factor from `cfg`.
pub fn assign_mas_with_weight(
    anchors: &AnchorGrid,
    gts: &[GroundTruth],
    cfg: &MasConfig,
    weight: impl Fn(&GroundTruth) -> f64,
) -> AssignmentResult {
    let (lo, hi) = cfg.threshold_clamp;
    let cands: Vec<Candidates> = gts
        .iter()
        .map(|g| candidates_for(anchors, g, cfg.candidate_k))
        .collect();
    // Best (iou, gt) claim per anchor.
    let mut claims: Vec<Option<(f64, usize)>> = vec![None; anchors.len()];
    let mut thresholds = Vec::with_capacity(gts.len());
    for (g, (gt, c)) in gts.iter().zip(&cands).enumerate() {
        let Ok(stats) = iou_statistics(&c.ious) else {
            thresholds.push(None);
            continue;
        };
        let thr = (weight(gt) * stats.init_threshold()).clamp(lo, hi);
        thresholds.push(Some(thr));
        for (&a, &iou) in c.anchors.iter().zip(&c.ious) {
            if iou < thr {
                continue;
            }
            if cfg.use_center_prior && !gt.bbox.contains(anchors.anchors()[a].center()) {
                continue;
            }
            match claims[a] {
                Some((best, _)) if best >= iou => {}
                _ => claims[a] = Some((iou, g)),
            }
        }
    }
    let mut labels: Vec<Label> = claims
        .iter()
        .map(|c| c.map_or(Label::Negative, |(_, g)| Label::Positive(g)))
        .collect();
    if cfg.low_quality_fallback {
        apply_fallback(&mut labels, &cands);
    }
    AssignmentResult::from_labels(labels, thresholds)
}

/// Metric-aligned selection. `cfg` is assumed valid (see
/// [`MasConfig::validate`]).
pub fn assign_mas(anchors: &AnchorGrid, gts: &[GroundTruth], cfg: &MasConfig) -> AssignmentResult {
    assign_mas_with_weight(anchors, gts, cfg, |g| cfg.weight(g))
}

/// ATSS-style baseline with default clamp, center prior and fallback.
pub fn assign_atss(anchors: &AnchorGrid, gts: &[GroundTruth], k: usize) -> AssignmentResult {
    let cfg = MasConfig {
        candidate_k: k,
        ..MasConfig::default()
    };
    assign_atss_with(anchors, gts, &cfg)
}

/// ATSS-style baseline: threshold = mean + std of candidate IoUs. Only the
/// candidate/clamp/prior/fallback fields of `cfg` are used.
pub fn assign_atss_with(
    anchors: &AnchorGrid,
    gts: &[GroundTruth],
    cfg: &MasConfig,
) -> AssignmentResult {
    let n = anchors.len();
    let mut best_iou = vec![f64::NEG_INFINITY; n];
    let mut labels = vec![Label::Negative; n];
    let mut thresholds = Vec::with_capacity(gts.len());
    let mut cands = Vec::with_capacity(gts.len());
    for (g, gt) in gts.iter().enumerate() {
        let c = candidates_for(anchors, gt, cfg.candidate_k);
        if c.ious.is_empty() {
            thresholds.push(None);
            cands.push(c);
            continue;
        }
        let n_c = c.ious.len() as f64;
        let mean = c.ious.iter().sum::<f64>() / n_c;
        let std = (c.ious.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n_c).sqrt();
        let thr = (mean + std).clamp(cfg.threshold_clamp.0, cfg.threshold_clamp.1);
        thresholds.push(Some(thr));
        for (&a, &iou) in c.anchors.iter().zip(&c.ious) {
            let center_ok =
                !cfg.use_center_prior || gt.bbox.contains(anchors.anchors()[a].center());
            // Strictly greater keeps the lowest gt index on ties.
            if iou >= thr && center_ok && iou > best_iou[a] {
                best_iou[a] = iou;
                labels[a] = Label::Positive(g);
            }
        }
        cands.push(c);
    }
    if cfg.low_quality_fallback {
        apply_fallback(&mut labels, &cands);
    }
    AssignmentResult::from_labels(labels, thresholds)
}

/// Fixed-threshold MaxIoU baseline.
///
/// An anchor whose best IoU is at least `pos_thr` is positive for that
/// ground truth (lowest index on ties), below `neg_thr` negative, otherwise
/// ignored. Each ground truth's best overlapping anchor is forced positive;
/// when two ground truths share a best anchor it goes to the higher IoU.
pub fn assign_maxiou(
    anchors: &AnchorGrid,
    gts: &[GroundTruth],
    pos_thr: f64,
    neg_thr: f64,
) -> AssignmentResult {
    let all = anchors.anchors();
    let n = all.len();
    let mut max_iou = vec![0.0_f64; n];
    let mut argmax: Vec<Option<usize>> = vec![None; n];
    let mut gt_best: Vec<Option<(usize, f64)>> = vec![None; gts.len()];
    for (g, gt) in gts.iter().enumerate() {
        let c = gt.bbox.center();
        let r = gt.bbox.circumradius();
        for (i, a) in all.iter().enumerate() {
            if a.center().distance(c) >= r + a.circumradius() {
                continue;
            }
            let iou = rotated_iou(a, &gt.bbox);
            if iou <= 0.0 {
                continue;
            }
            if iou > max_iou[i] {
                max_iou[i] = iou;
                argmax[i] = Some(g);
            }
            if gt_best[g].is_none_or(|(_, b)| iou > b) {
                gt_best[g] = Some((i, iou));
            }
        }
    }
    let mut labels: Vec<Label> = (0..n)
        .map(|i| match argmax[i] {
            Some(g) if max_iou[i] >= pos_thr => Label::Positive(g),
            _ if max_iou[i] < neg_thr => Label::Negative,
            _ => Label::Ignore,
        })
        .collect();
    let mut forced: Vec<Option<(f64, usize)>> = vec![None; n];
    for (g, best) in gt_best.iter().enumerate() {
        if let Some((i, iou)) = *best {
            if forced[i].is_none_or(|(b, _)| iou > b) {
                forced[i] = Some((iou, g));
            }
        }
    }
    for (i, f) in forced.iter().enumerate() {
        if let Some((_, g)) = f {
            labels[i] = Label::Positive(*g);
        }
    }
    AssignmentResult::from_labels(labels, vec![Some(pos_thr); gts.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn grid() -> AnchorGrid {
        generate_anchors(128.0, 128.0, &[8.0, 16.0, 32.0], 4.0).unwrap()
    }

    fn gt(cx: f64, cy: f64, w: f64, h: f64, t: f64) -> GroundTruth {
        GroundTruth::new(OrientedBox::new(cx, cy, w, h, t).unwrap(), 0)
    }

    #[test]
    fn candidate_on_anchor_center() {
        let g = generate_anchors(64.0, 64.0, &[8.0], 4.0).unwrap();
        let t = gt(20.0, 28.0, 10.0, 5.0, 0.0);
        let c = select_candidates(&g, &t, 1);
        assert_eq!(c.len(), 1);
        let a = g.anchors()[c[0]];
        assert_eq!((a.cx, a.cy), (20.0, 28.0));
    }

    #[test]
    fn k_larger_than_level_takes_everything() {
        let g = generate_anchors(32.0, 32.0, &[8.0, 16.0], 4.0).unwrap();
        let c = select_candidates(&g, &gt(3.0, 3.0, 4.0, 2.0, 0.0), 100);
        assert_eq!(c.len(), g.len());
    }

    #[test]
    fn candidates_match_brute_force_sort() {
        let g = grid();
        let t = gt(51.3, 70.9, 40.0, 12.0, 0.4);
        let got = select_candidates(&g, &t, 9);
        assert_eq!(got.len(), 27);
        let mut want = Vec::new();
        for l in 0..3 {
            let mut v: Vec<usize> = g.level_range(l).collect();
            v.sort_by(|&a, &b| {
                let da = g.anchors()[a].center().distance(t.bbox.center());
                let db = g.anchors()[b].center().distance(t.bbox.center());
                da.partial_cmp(&db).unwrap().then(a.cmp(&b))
            });
            want.extend_from_slice(&v[..9]);
        }
        assert_eq!(got, want);
    }

    #[test]
    fn perfect_match_is_the_only_positive() {
        let g = generate_anchors(256.0, 256.0, &[32.0], 1.0).unwrap();
        let t = gt(48.0, 80.0, 32.0, 32.0, 0.0);
        let r = assign_mas(&g, &[t], &MasConfig::default());
        let pos: Vec<usize> = (0..g.len())
            .filter(|&i| r.labels[i].is_positive())
            .collect();
        assert_eq!(pos.len(), 1);
        let a = g.anchors()[pos[0]];
        assert_eq!((a.cx, a.cy), (48.0, 80.0));
        assert_eq!(r.num_negative(), g.len() - 1);
    }

    #[test]
    fn empty_gts_all_negative() {
        let g = grid();
        for r in [
            assign_mas(&g, &[], &MasConfig::default()),
            assign_atss(&g, &[], 9),
            assign_maxiou(&g, &[], 0.5, 0.4),
        ] {
            assert_eq!(r.num_negative(), g.len());
        }
    }

    #[test]
    fn atss_three_candidates() {
        // Three 8x8 anchors tile a 24x8 gt: each has IoU 1/3, so the
        // threshold is exactly 1/3 and all pass.
        let g = generate_anchors(24.0, 8.0, &[8.0], 1.0).unwrap();
        let t = gt(12.0, 4.0, 24.0, 8.0, 0.0);
        let r = assign_atss(&g, &[t], 9);
        // Every anchor lies inside and has IoU 1/3; threshold = 1/3.
        assert_eq!(r.positives_per_gt[0], 3);
        assert!((r.thresholds[0].unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn maxiou_examples() {
        let g = generate_anchors(64.0, 64.0, &[16.0], 1.0).unwrap();
        // A 16x16 anchor at (24, 24); gt shifted to give IoU 0.45 and 0.6.
        let iou_shift = |iou: f64| 16.0 * (1.0 - iou) / (1.0 + iou);
        let t = gt(24.0 + iou_shift(0.45), 24.0, 16.0, 16.0, 0.0);
        let t2 = gt(24.0 + iou_shift(0.45), 40.0, 16.0, 16.0, 0.0);
        let r = assign_maxiou(&g, &[t, t2], 0.5, 0.4);
        // Row 1, column 1 of the 4x4 grid.
        let idx = 4 + 1;
        // Forced positive is the best anchor; the one at (24,24) is best.
        assert_eq!(r.labels[idx], Label::Positive(0));
        let right = idx + 1; // (40, 24): IoU with gt 0 is small but > 0.
        assert_eq!(r.labels[right], Label::Negative);

        let t = gt(24.0 + iou_shift(0.6), 24.0, 16.0, 16.0, 0.0);
        let r = assign_maxiou(&g, &[t], 0.5, 0.4);
        assert_eq!(r.labels[idx], Label::Positive(0));

        let t = gt(24.0 + iou_shift(0.2), 24.0, 16.0, 16.0, 0.0);
        let r = assign_maxiou(&g, &[t], 0.5, 0.4);
        assert_eq!(r.positives_per_gt[0], 1);
        assert!(r.labels.iter().all(|l| *l != Label::Ignore));
    }

    #[test]
    fn maxiou_ignore_band() {
        // Anchors cover x in [0,16], [16,32], [32,48]; the gt spans [19,44],
        // giving IoUs 0, 13/28 and 12/29 (~0.414).
        let g = generate_anchors(48.0, 16.0, &[16.0], 1.0).unwrap();
        let t = gt(31.5, 8.0, 25.0, 16.0, 0.0);
        let r = assign_maxiou(&g, &[t], 0.5, 0.4);
        assert_eq!(r.labels[0], Label::Negative);
        assert_eq!(r.labels[1], Label::Positive(0));
        assert_eq!(r.labels[2], Label::Ignore);
        assert_eq!(r.positives_per_gt, vec![1]);
    }

    #[test]
    fn mas_admits_more_for_hard_shapes() {
        let g = generate_anchors(256.0, 256.0, &[8.0, 16.0, 32.0], 4.0).unwrap();
        let t = gt(128.0, 128.0, 120.0, 20.0, FRAC_PI_4);
        let mas = assign_mas(&g, &[t], &MasConfig::default());
        let atss = assign_atss(&g, &[t], 9);
        assert!(mas.thresholds[0].unwrap() < atss.thresholds[0].unwrap());
        assert!(mas.positives_per_gt[0] >= atss.positives_per_gt[0]);
    }
}
