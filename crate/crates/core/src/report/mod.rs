//! Experiment commands: each one validates a [`RunConfig`], computes a
//! deterministic result and writes CSV tables and/or a JSON report.
//!
//! CSV files start with a `#schema_version=N` comment line followed by a
//! header row. JSON reports carry a top-level `schema_version` field.

mod assign_file;
mod cfs_demo;
mod loss_check;
mod stats;
mod thresholds;

pub use assign_file::{
    cmd_assign_file, AssignFileConfig, AssignFileReport, GtReport, StrategySummary,
};
pub use cfs_demo::{cfs_demo, cmd_cfs_demo, CfsDemoConfig, CfsDemoReport, KernelKind};
pub use loss_check::{
    beta_trajectory, cmd_loss_check, gradient_checks, BetaRow, GradientCheck, LossCheckConfig,
    LossCheckReport, QualitySchedule,
};
pub use stats::{cmd_stats, run_stats, spearman, BinRow, BinnedStats, StatsConfig, StatsReport};
pub use thresholds::{
    cmd_thresholds, threshold_surface, SurfaceRow, ThresholdCheck, ThresholdsConfig,
    ThresholdsReport,
};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assign::{
    assign_atss_with, assign_mas, assign_maxiou, generate_anchors, AnchorGrid, AssignmentResult,
    GroundTruth, MasConfig,
};
use crate::error::{Error, Result};
use crate::geometry::{mc_iou_oracle, normalize_obb, rotated_iou};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    MaxIou,
    Atss,
    Mas,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::MaxIou, Strategy::Atss, Strategy::Mas];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::MaxIou => "maxiou",
            Strategy::Atss => "atss",
            Strategy::Mas => "mas",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maxiou" => Ok(Strategy::MaxIou),
            "atss" => Ok(Strategy::Atss),
            "mas" => Ok(Strategy::Mas),
            other => Err(Error::InvalidConfig(format!(
                "unknown strategy {other:?} (expected maxiou, atss or mas)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxIouConfig {
    pub pos_thr: f64,
    pub neg_thr: f64,
}

impl Default for MaxIouConfig {
    fn default() -> Self {
        MaxIouConfig {
            pos_thr: 0.5,
            neg_thr: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnchorConfig {
    pub strides: Vec<f64>,
    pub scale_multiplier: f64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        AnchorConfig {
            strides: vec![8.0, 16.0, 32.0, 64.0, 128.0],
            scale_multiplier: 4.0,
        }
    }
}

impl AnchorConfig {
    pub fn grid(&self, image_size: (f64, f64)) -> Result<AnchorGrid> {
        generate_anchors(
            image_size.0,
            image_size.1,
            &self.strides,
            self.scale_multiplier,
        )
    }
}

/// Everything a command needs; loaded from JSON with every field optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub strategy: Strategy,
    pub mas: MasConfig,
    pub maxiou: MaxIouConfig,
    pub anchors: AnchorConfig,
    pub stats: StatsConfig,
    pub thresholds: ThresholdsConfig,
    pub loss_check: LossCheckConfig,
    pub assign_file: AssignFileConfig,
    pub cfs: CfsDemoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            strategy: Strategy::Mas,
            mas: MasConfig::default(),
            maxiou: MaxIouConfig::default(),
            anchors: AnchorConfig::default(),
            stats: StatsConfig::default(),
            thresholds: ThresholdsConfig::default(),
            loss_check: LossCheckConfig::default(),
            assign_file: AssignFileConfig::default(),
            cfs: CfsDemoConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.mas.validate()?;
        let MaxIouConfig { pos_thr, neg_thr } = self.maxiou;
        if !(0.0 <= neg_thr && neg_thr <= pos_thr && pos_thr <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "MaxIoU thresholds must satisfy 0 <= neg <= pos <= 1, got pos={pos_thr} neg={neg_thr}"
            )));
        }
        generate_anchors(
            1.0,
            1.0,
            &self.anchors.strides,
            self.anchors.scale_multiplier,
        )?;
        self.stats.validate()?;
        self.thresholds.validate()?;
        self.loss_check.validate()?;
        self.cfs.validate()?;
        Ok(())
    }

    /// Run one assignment strategy.
    pub fn assign(
        &self,
        strategy: Strategy,
        anchors: &AnchorGrid,
        gts: &[GroundTruth],
    ) -> AssignmentResult {
        match strategy {
            Strategy::MaxIou => {
                assign_maxiou(anchors, gts, self.maxiou.pos_thr, self.maxiou.neg_thr)
            }
            Strategy::Atss => assign_atss_with(anchors, gts, &self.mas),
            Strategy::Mas => assign_mas(anchors, gts, &self.mas),
        }
    }
}

/// Write a CSV table with the schema comment line.
pub(crate) fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut buf = format!("#schema_version={SCHEMA_VERSION}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Read a CSV written by [`write_csv`]: returns the header and the rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(file);
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir.to_path_buf())
}

/// Exact IoU of two raw five-parameter boxes, plus a Monte-Carlo estimate
/// when `oracle_samples` is given. Output lines: the exact IoU with six
/// decimals, then `mc <estimate> <samples>`.
pub fn cmd_iou(a: [f64; 5], b: [f64; 5], oracle_samples: Option<u64>, seed: u64) -> Result<String> {
    let ba = normalize_obb(a[0], a[1], a[2], a[3], a[4])?;
    let bb = normalize_obb(b[0], b[1], b[2], b[3], b[4])?;
    let mut out = format!("{:.6}\n", rotated_iou(&ba, &bb));
    if let Some(n) = oracle_samples {
        if n == 0 {
            return Err(Error::InvalidConfig(
                "--oracle needs at least one sample".into(),
            ));
        }
        out.push_str(&format!("mc {:.6} {n}\n", mc_iou_oracle(&ba, &bb, n, seed)));
    }
    Ok(out)
}

/// Write `text` to `<out>/<name>` when an output directory is given, else
/// to stdout.
pub fn print_or_write(out: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => {
            let path = ensure_dir(dir)?.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}
