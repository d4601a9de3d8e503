//! Positive-sample statistics over grid-sweep scenes, binned by aspect ratio
//! and by angle.

use std::f64::consts::FRAC_PI_4;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ensure_dir, write_csv, write_json, RunConfig, Strategy};
use crate::error::{Error, Result};
use crate::scene::{generate_scene, Placement, SceneSpec};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    /// Scenes per sweep.
    pub scenes: usize,
    /// Scene template for the aspect sweep.
    pub aspect_scene: SceneSpec,
    /// Scene template for the angle sweep (square-ish objects).
    pub angle_scene: SceneSpec,
    pub aspect_bins: usize,
    pub aspect_range: (f64, f64),
    pub angle_bins: usize,
    pub angle_range: (f64, f64),
}

impl Default for StatsConfig {
    fn default() -> Self {
        let angle_range = (-FRAC_PI_4, 3.0 * FRAC_PI_4);
        StatsConfig {
            scenes: 64,
            aspect_scene: SceneSpec {
                aspect_range: (1.0, 12.0),
                angle_range,
                scale_range: (64.0, 160.0),
                placement: Placement::GridSweep {
                    aspect_bins: 12,
                    angle_bins: 4,
                },
                ..SceneSpec::default()
            },
            angle_scene: SceneSpec {
                aspect_range: (1.05, 1.3),
                angle_range,
                scale_range: (80.0, 110.0),
                placement: Placement::GridSweep {
                    aspect_bins: 1,
                    angle_bins: 48,
                },
                ..SceneSpec::default()
            },
            aspect_bins: 12,
            aspect_range: (1.0, 12.0),
            angle_bins: 16,
            angle_range,
        }
    }
}

impl StatsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenes == 0 || self.aspect_bins == 0 || self.angle_bins == 0 {
            return Err(Error::InvalidConfig(
                "stats needs at least one scene and one bin per axis".into(),
            ));
        }
        for (name, (lo, hi)) in [("aspect", self.aspect_range), ("angle", self.angle_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidConfig(format!(
                    "{name} bin range ({lo}, {hi}) is empty"
                )));
            }
        }
        if !matches!(self.aspect_scene.placement, Placement::GridSweep { .. })
            || !matches!(self.angle_scene.placement, Placement::GridSweep { .. })
        {
            return Err(Error::InvalidConfig(
                "stats scenes must use grid-sweep placement".into(),
            ));
        }
        self.aspect_scene.validate()?;
        self.angle_scene.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub lo: f64,
    pub hi: f64,
    pub gt_count: usize,
    pub total_positives: usize,
    pub mean_positives: f64,
    pub zero_positive_gts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedStats {
    pub strategy: Strategy,
    /// `aspect` or `angle`.
    pub axis: String,
    pub edges: Vec<f64>,
    pub bins: Vec<BinRow>,
}

impl BinnedStats {
    /// Bin `(value, positives)` samples over `[lo, hi)` with equal-width bins.
    /// Values outside the range land in the nearest end bin.
    pub fn from_samples(
        strategy: Strategy,
        axis: &str,
        range: (f64, f64),
        nbins: usize,
        samples: &[(f64, usize)],
    ) -> Self {
        let (lo, hi) = range;
        let width = (hi - lo) / nbins as f64;
        let edges: Vec<f64> = (0..=nbins).map(|i| lo + i as f64 * width).collect();
        let mut bins: Vec<BinRow> = edges
            .windows(2)
            .map(|e| BinRow {
                lo: e[0],
                hi: e[1],
                gt_count: 0,
                total_positives: 0,
                mean_positives: 0.0,
                zero_positive_gts: 0,
            })
            .collect();
        for &(v, pos) in samples {
            let i = (((v - lo) / width).floor().max(0.0) as usize).min(nbins - 1);
            let b = &mut bins[i];
            b.gt_count += 1;
            b.total_positives += pos;
            b.zero_positive_gts += usize::from(pos == 0);
        }
        for b in &mut bins {
            if b.gt_count > 0 {
                b.mean_positives = b.total_positives as f64 / b.gt_count as f64;
            }
        }
        BinnedStats {
            strategy,
            axis: axis.to_string(),
            edges,
            bins,
        }
    }

    pub fn total_gts(&self) -> usize {
        self.bins.iter().map(|b| b.gt_count).sum()
    }

    pub fn zero_positive_gts(&self) -> usize {
        self.bins.iter().map(|b| b.zero_positive_gts).sum()
    }

    pub fn means(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.mean_positives).collect()
    }

    /// Spearman correlation between bin index and mean positives over the
    /// non-empty bins.
    pub fn index_spearman(&self) -> f64 {
        let (idx, means): (Vec<f64>, Vec<f64>) = self
            .bins
            .iter()
            .enumerate()
            .filter(|(_, b)| b.gt_count > 0)
            .map(|(i, b)| (i as f64, b.mean_positives))
            .unzip();
        spearman(&idx, &means)
    }

    /// Split the bins into the two half-periods `[lo, mid)` and `[mid, hi)`
    /// and return the centers of the highest and lowest non-empty bin of
    /// each half, in that order.
    pub fn half_period_extrema(&self) -> Vec<(f64, f64)> {
        let half = self.bins.len() / 2;
        [&self.bins[..half], &self.bins[half..]]
            .iter()
            .filter_map(|part| {
                let filled: Vec<&BinRow> = part.iter().filter(|b| b.gt_count > 0).collect();
                let center = |b: &BinRow| 0.5 * (b.lo + b.hi);
                let hi = filled
                    .iter()
                    .max_by(|a, b| a.mean_positives.total_cmp(&b.mean_positives))?;
                let lo = filled
                    .iter()
                    .min_by(|a, b| a.mean_positives.total_cmp(&b.mean_positives))?;
                Some((center(hi), center(lo)))
            })
            .collect()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.bins
            .iter()
            .enumerate()
            .map(|(i, b)| {
                vec![
                    self.strategy.name().to_string(),
                    i.to_string(),
                    b.lo.to_string(),
                    b.hi.to_string(),
                    b.gt_count.to_string(),
                    b.total_positives.to_string(),
                    b.mean_positives.to_string(),
                    b.zero_positive_gts.to_string(),
                ]
            })
            .collect()
    }
}

pub(crate) const BIN_HEADER: [&str; 8] = [
    "strategy",
    "bin",
    "lo",
    "hi",
    "gt_count",
    "total_positives",
    "mean_positives",
    "zero_positive_gts",
];

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either side is constant or fewer than two samples are given.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return 0.0;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Per-gt `(aspect, angle, positives)` over all scenes of one sweep.
fn sweep_samples(
    cfg: &RunConfig,
    strategy: Strategy,
    template: &SceneSpec,
    seed_base: u64,
) -> Result<Vec<(f64, f64, usize)>> {
    let anchors = cfg.anchors.grid(template.image_size)?;
    let per_scene: Vec<Result<Vec<(f64, f64, usize)>>> = (0..cfg.stats.scenes as u64)
        .into_par_iter()
        .map(|i| {
            let scene = generate_scene(&template.with_seed(seed_base.wrapping_add(i)))?;
            let res = cfg.assign(strategy, &anchors, &scene.gts);
            Ok(scene
                .gts
                .iter()
                .zip(&res.positives_per_gt)
                .map(|(g, &p)| (g.aspect, g.angle, p))
                .collect())
        })
        .collect();
    let mut out = Vec::new();
    for s in per_scene {
        out.extend(s?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub schema_version: u32,
    pub seed: u64,
    pub strategy: Strategy,
    pub aspect: BinnedStats,
    pub angle: BinnedStats,
    pub aspect_spearman: f64,
    /// `(max bin center, min bin center)` per half-period of the angle sweep.
    pub angle_extrema: Vec<(f64, f64)>,
    /// Zero-positive gts over both sweeps.
    pub zero_positive_gts: usize,
}

/// Seeds of the angle sweep start here so the two sweeps never share a scene.
const ANGLE_SEED_OFFSET: u64 = 1 << 32;

/// Run both sweeps for one strategy. Scenes are generated and assigned in
/// parallel; samples are gathered in scene order.
pub fn run_stats(cfg: &RunConfig, strategy: Strategy) -> Result<StatsReport> {
    let s = &cfg.stats;
    let by_aspect = sweep_samples(cfg, strategy, &s.aspect_scene, cfg.seed)?;
    let by_angle = sweep_samples(
        cfg,
        strategy,
        &s.angle_scene,
        cfg.seed.wrapping_add(ANGLE_SEED_OFFSET),
    )?;
    let aspect = BinnedStats::from_samples(
        strategy,
        "aspect",
        s.aspect_range,
        s.aspect_bins,
        &by_aspect
            .iter()
            .map(|&(a, _, p)| (a, p))
            .collect::<Vec<_>>(),
    );
    let angle = BinnedStats::from_samples(
        strategy,
        "angle",
        s.angle_range,
        s.angle_bins,
        &by_angle.iter().map(|&(_, t, p)| (t, p)).collect::<Vec<_>>(),
    );
    Ok(StatsReport {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        strategy,
        aspect_spearman: aspect.index_spearman(),
        angle_extrema: angle.half_period_extrema(),
        zero_positive_gts: aspect.zero_positive_gts() + angle.zero_positive_gts(),
        aspect,
        angle,
    })
}

/// Writes `stats_aspect.csv`, `stats_angle.csv` and `stats.json` into `out`.
pub fn cmd_stats(cfg: &RunConfig, out: &Path) -> Result<StatsReport> {
    let report = run_stats(cfg, cfg.strategy)?;
    let dir = ensure_dir(out)?;
    write_csv(
        &dir.join("stats_aspect.csv"),
        &BIN_HEADER,
        &report.aspect.csv_rows(),
    )?;
    write_csv(
        &dir.join("stats_angle.csv"),
        &BIN_HEADER,
        &report.angle.csv_rows(),
    )?;
    write_json(&dir.join("stats.json"), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&x, &[10.0, 20.0, 30.0, 40.0]), 1.0);
        assert_eq!(spearman(&x, &[4.0, 3.0, 2.0, 1.0]), -1.0);
        assert_eq!(spearman(&x, &[1.0, 1.0, 1.0, 1.0]), 0.0);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn binning_counts_every_sample() {
        let samples = [(1.0, 3), (1.9, 0), (11.99, 1), (12.0, 2), (0.5, 4)];
        let b = BinnedStats::from_samples(Strategy::Mas, "aspect", (1.0, 12.0), 11, &samples);
        assert_eq!(b.total_gts(), samples.len());
        assert_eq!(b.bins[0].gt_count, 3);
        assert_eq!(b.bins[0].zero_positive_gts, 1);
        assert!((b.bins[0].mean_positives - 7.0 / 3.0).abs() < 1e-15);
        assert_eq!(b.bins[10].gt_count, 2);
        assert_eq!(b.edges.len(), 12);
    }
}
