//! Sampling-point dump and deformable responses for one box on a feature
//! grid.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::cfs::{
    bilinear_sample, dcn_offset_field, deformable_sample, read_offsets, shrink_obb, DcnOffsetField,
    FeatureGrid, GridCell, Kernel, OffsetPair, SamplingPattern, KERNEL_TAPS, NUM_POINTS,
};
use crate::error::{Error, Result};
use crate::geometry::{normalize_obb, OrientedBox, Point};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// Weight 1 on the center tap only.
    Delta,
    /// Weight 1/9 on every tap.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CfsDemoConfig {
    pub stride: f64,
    pub shrink: f64,
    pub kernel: KernelKind,
}

impl Default for CfsDemoConfig {
    fn default() -> Self {
        CfsDemoConfig {
            stride: 8.0,
            shrink: crate::cfs::DEFAULT_SHRINK,
            kernel: KernelKind::Delta,
        }
    }
}

impl CfsDemoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.stride.is_finite() && self.stride > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "cfs stride must be > 0, got {}",
                self.stride
            )));
        }
        if !(0.0..1.0).contains(&self.shrink) {
            return Err(Error::InvalidConfig(format!(
                "cfs shrink must be in [0, 1), got {}",
                self.shrink
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfsDemoReport {
    pub schema_version: u32,
    pub source_box: OrientedBox,
    pub shrunk_box: OrientedBox,
    pub offsets: Vec<OffsetPair>,
    pub initial_points: [Point; NUM_POINTS],
    pub refined_points: [Point; NUM_POINTS],
    pub offset_field: DcnOffsetField,
    pub kernel: KernelKind,
    /// Depthwise response per channel.
    pub outputs: Vec<f64>,
    /// Bilinear sample per channel at the refined center point.
    pub center_samples: Vec<f64>,
}

fn tap_weight(kind: KernelKind, tap: usize) -> f64 {
    match kind {
        KernelKind::Delta if KERNEL_TAPS[tap] == (0, 0) => 1.0,
        KernelKind::Delta => 0.0,
        KernelKind::Mean => 1.0 / NUM_POINTS as f64,
    }
}

/// Run the sampling chain on an in-memory grid. `offsets` defaults to zeros.
pub fn cfs_demo(
    cfg: &CfsDemoConfig,
    grid: &FeatureGrid,
    raw_box: [f64; 5],
    offsets: Option<Vec<OffsetPair>>,
) -> Result<CfsDemoReport> {
    cfg.validate()?;
    let b = normalize_obb(raw_box[0], raw_box[1], raw_box[2], raw_box[3], raw_box[4])?;
    let offsets = offsets.unwrap_or_else(|| vec![OffsetPair::default(); NUM_POINTS]);
    let pattern = SamplingPattern::build(b, cfg.shrink, &offsets)?;
    let p0 = GridCell {
        x: (b.cx / cfg.stride).round() as i64,
        y: (b.cy / cfg.stride).round() as i64,
    };
    let field = dcn_offset_field(&pattern.refined_points, p0, cfg.stride)?;
    let channels = grid.channels();
    let outputs = (0..channels)
        .map(|c| {
            let k = Kernel::new(channels, |tap, ch| {
                if ch == c {
                    tap_weight(cfg.kernel, tap)
                } else {
                    0.0
                }
            });
            deformable_sample(grid, &k, &field)
        })
        .collect::<Result<Vec<_>>>()?;
    let center = pattern.refined_points[0];
    let center = Point::new(center.x / cfg.stride, center.y / cfg.stride);
    let center_samples = (0..channels)
        .map(|c| bilinear_sample(grid, center, c))
        .collect();
    Ok(CfsDemoReport {
        schema_version: SCHEMA_VERSION,
        source_box: b,
        shrunk_box: shrink_obb(&b, cfg.shrink)?,
        offsets,
        initial_points: pattern.initial_points,
        refined_points: pattern.refined_points,
        offset_field: field,
        kernel: cfg.kernel,
        outputs,
        center_samples,
    })
}

/// File-driven variant used by the CLI.
pub fn cmd_cfs_demo(
    cfg: &RunConfig,
    features: &Path,
    raw_box: [f64; 5],
    offsets: Option<&Path>,
) -> Result<CfsDemoReport> {
    let open = |p: &Path| {
        File::open(p)
            .map(BufReader::new)
            .map_err(|e| Error::io(p, e))
    };
    let grid = FeatureGrid::read(open(features)?)?;
    let offsets = offsets.map(|p| read_offsets(open(p)?)).transpose()?;
    cfs_demo(&cfg.cfs, &grid, raw_box, offsets)
}
