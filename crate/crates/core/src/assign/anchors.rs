use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::OrientedBox;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PyramidLevel {
    pub stride: f64,
    pub width: usize,
    pub height: usize,
    pub anchor_size: f64,
}

impl PyramidLevel {
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One square anchor per feature-map location, level by level, row-major
/// within a level.
#[derive(Debug, Clone)]
pub struct AnchorGrid {
    levels: Vec<PyramidLevel>,
    offsets: Vec<usize>,
    anchors: Vec<OrientedBox>,
}

impl AnchorGrid {
    pub fn levels(&self) -> &[PyramidLevel] {
        &self.levels
    }

    pub fn anchors(&self) -> &[OrientedBox] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Global index range of the anchors on `level`.
    pub fn level_range(&self, level: usize) -> std::ops::Range<usize> {
        self.offsets[level]..self.offsets[level + 1]
    }

    /// Level of the anchor at global index `idx`.
    pub fn level_of(&self, idx: usize) -> usize {
        self.offsets.partition_point(|&o| o <= idx) - 1
    }
}

/// Place one square anchor of side `stride * scale_multiplier` at the center
/// of every cell of every level. Partial cells at the image border count.
pub fn generate_anchors(
    image_width: f64,
    image_height: f64,
    strides: &[f64],
    scale_multiplier: f64,
) -> Result<AnchorGrid> {
    if strides.is_empty() {
        return Err(Error::InvalidConfig("no pyramid strides given".into()));
    }
    if strides.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidConfig(format!(
            "strides must be positive: {strides:?}"
        )));
    }
    if strides.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig(format!(
            "strides must be ascending: {strides:?}"
        )));
    }
    if !(image_width > 0.0 && image_height > 0.0 && scale_multiplier > 0.0) {
        return Err(Error::InvalidConfig(
            "image size and anchor scale must be positive".into(),
        ));
    }
    let mut levels = Vec::with_capacity(strides.len());
    let mut offsets = vec![0];
    let mut anchors = Vec::new();
    for &stride in strides {
        let level = PyramidLevel {
            stride,
            width: (image_width / stride).ceil() as usize,
            height: (image_height / stride).ceil() as usize,
            anchor_size: stride * scale_multiplier,
        };
        for y in 0..level.height {
            for x in 0..level.width {
                anchors.push(OrientedBox::square(
                    (x as f64 + 0.5) * stride,
                    (y as f64 + 0.5) * stride,
                    level.anchor_size,
                ));
            }
        }
        offsets.push(anchors.len());
        levels.push(level);
    }
    Ok(AnchorGrid {
        levels,
        offsets,
        anchors,
    })
}
