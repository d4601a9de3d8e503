//! Oriented-box label assignment and loss numerics for rotated object
//! detection.
//!
//! - [`geometry`]: long-edge oriented boxes, exact rotated IoU, a Monte-Carlo
//!   IoU oracle and minimum-area rectangles.
//! - [`assign`]: one-anchor-per-location grids and the MaxIoU, ATSS and
//!   metric-aligned (MAS) assigners.
//! - [`cfs`]: critical-feature sampling geometry and deformable sampling.
//! - [`loss`]: box deltas, smooth L1, focal loss, the adaptive `beta` update
//!   and the two-head multi-task loss.
//! - [`scene`]: synthetic scenes and DOTA annotation ingestion.
//! - [`report`]: the experiment commands behind the `obb-assign` binary.

pub mod assign;
pub mod cfs;
pub mod error;
pub mod geometry;
pub mod loss;
pub mod report;
pub mod scene;

pub use error::{Error, Result};

/// Version stamped into every emitted CSV and JSON file.
pub const SCHEMA_VERSION: u32 = 1;
