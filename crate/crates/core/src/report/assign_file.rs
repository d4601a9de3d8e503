//! Label assignment for one DOTA annotation file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RunConfig, Strategy};
use crate::assign::{select_candidates, GroundTruth};
use crate::error::{Error, Result};
use crate::geometry::{rotated_iou, OrientedBox};
use crate::scene::{read_dota_file, records_to_gts, CategoryTable, UnknownCategory};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssignFileConfig {
    pub include_difficult: bool,
    pub unknown_category: UnknownCategory,
    /// Image extent for anchor generation; inferred from the annotations
    /// (rounded up to whole pixels) when absent.
    pub image_size: Option<(f64, f64)>,
}

impl Default for AssignFileConfig {
    fn default() -> Self {
        AssignFileConfig {
            include_difficult: false,
            unknown_category: UnknownCategory::Error,
            image_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtReport {
    /// 1-based line in the annotation file.
    pub line: usize,
    pub category: String,
    pub class_id: usize,
    pub bbox: OrientedBox,
    pub aspect: f64,
    pub angle: f64,
    /// Threshold used by the selected strategy (absent for MaxIoU).
    pub threshold: Option<f64>,
    pub positives: usize,
    /// Best IoU over the gt's candidates.
    pub best_candidate_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub total_positives: usize,
    pub zero_positive_gts: usize,
    pub positives_per_gt: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignFileReport {
    pub schema_version: u32,
    pub source: String,
    pub strategy: Strategy,
    pub image_size: (f64, f64),
    pub num_anchors: usize,
    pub records: usize,
    pub metadata_lines: usize,
    pub skipped_difficult: usize,
    pub skipped_degenerate: usize,
    pub gts: Vec<GtReport>,
    pub comparison: Vec<StrategySummary>,
}

fn infer_image_size(gts: &[GroundTruth]) -> (f64, f64) {
    let mut size = (1.0_f64, 1.0_f64);
    for g in gts {
        for v in g.bbox.to_polygon().vertices {
            size.0 = size.0.max(v.x.ceil());
            size.1 = size.1.max(v.y.ceil());
        }
    }
    size
}

/// Parse `path`, convert it to ground truths and run every strategy. Any
/// malformed line aborts with an error naming it.
pub fn cmd_assign_file(cfg: &RunConfig, path: &Path) -> Result<AssignFileReport> {
    let parsed = read_dota_file(path)?;
    if let Some(e) = parsed.errors.into_iter().next() {
        return Err(e);
    }
    let ac = &cfg.assign_file;
    let records: Vec<_> = parsed.records.iter().map(|(_, r)| r.clone()).collect();
    let conv = records_to_gts(
        &records,
        ac.include_difficult,
        &CategoryTable::dota(),
        ac.unknown_category,
    )?;
    let image_size = ac.image_size.unwrap_or_else(|| infer_image_size(&conv.gts));
    if !(image_size.0 > 0.0 && image_size.1 > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "image size {image_size:?} must be positive"
        )));
    }
    let anchors = cfg.anchors.grid(image_size)?;

    let comparison: Vec<StrategySummary> = Strategy::ALL
        .iter()
        .map(|&s| {
            let r = cfg.assign(s, &anchors, &conv.gts);
            StrategySummary {
                strategy: s,
                total_positives: r.num_positive(),
                zero_positive_gts: r.positives_per_gt.iter().filter(|&&p| p == 0).count(),
                positives_per_gt: r.positives_per_gt,
            }
        })
        .collect();
    let selected = cfg.assign(cfg.strategy, &anchors, &conv.gts);

    let gts = conv
        .gts
        .iter()
        .zip(&conv.source)
        .enumerate()
        .map(|(g, (gt, &src))| {
            let best = select_candidates(&anchors, gt, cfg.mas.candidate_k)
                .iter()
                .map(|&i| rotated_iou(&anchors.anchors()[i], &gt.bbox))
                .fold(0.0, f64::max);
            GtReport {
                line: parsed.records[src].0,
                category: records[src].category.clone(),
                class_id: gt.class_id,
                bbox: gt.bbox,
                aspect: gt.aspect,
                angle: gt.angle,
                threshold: selected.thresholds.get(g).copied().flatten(),
                positives: selected.positives_per_gt[g],
                best_candidate_iou: best,
            }
        })
        .collect();

    Ok(AssignFileReport {
        schema_version: SCHEMA_VERSION,
        source: path.display().to_string(),
        strategy: cfg.strategy,
        image_size,
        num_anchors: anchors.len(),
        records: records.len(),
        metadata_lines: parsed.metadata_lines,
        skipped_difficult: conv.skipped_difficult,
        skipped_degenerate: conv.skipped_degenerate,
        gts,
        comparison,
    })
}
