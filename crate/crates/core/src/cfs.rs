//! Critical-feature sampling geometry: the nine-point pattern on a shrunk
//! box, its offset refinement, conversion into a deformable-convolution
//! offset field, and the deformable sampling forward pass itself.
//!
//! The nine pattern points form a 3x3 lattice in the box's local frame
//! (center, corners, edge midpoints). Kernel tap `(rx, ry)` reads the point
//! at local position `(rx * w/2, ry * h/2)`, which fixes the point/tap
//! correspondence.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, Point};

pub const NUM_POINTS: usize = 9;

/// Default boundary shrink applied before taking the pattern.
pub const DEFAULT_SHRINK: f64 = 0.3;

/// Local lattice position `(sx, sy)` of each pattern point, in pattern order:
/// center, four corners counter-clockwise from `(+,+)`, four edge midpoints
/// counter-clockwise from the `+w/2` edge.
pub const PATTERN_LATTICE: [(i8, i8); NUM_POINTS] = [
    (0, 0),
    (1, 1),
    (-1, 1),
    (-1, -1),
    (1, -1),
    (1, 0),
    (0, 1),
    (-1, 0),
    (0, -1),
];

/// Regular 3x3 kernel offsets in row-major tap order.
pub const KERNEL_TAPS: [(i8, i8); NUM_POINTS] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (0, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Pattern index read by kernel tap `tap` (row-major).
pub fn pattern_index_for_tap(tap: usize) -> usize {
    let r = KERNEL_TAPS[tap];
    PATTERN_LATTICE
        .iter()
        .position(|&p| p == r)
        .expect("lattice covers every tap")
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OffsetPair {
    pub dx: f64,
    pub dy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPattern {
    pub source_box: OrientedBox,
    pub initial_points: [Point; NUM_POINTS],
    pub refined_points: [Point; NUM_POINTS],
}

impl SamplingPattern {
    /// Shrink `source_box`, take the initial pattern, and refine it with
    /// `offsets` scaled by the unshrunk box.
    pub fn build(source_box: OrientedBox, shrink: f64, offsets: &[OffsetPair]) -> Result<Self> {
        let shrunk = shrink_obb(&source_box, shrink)?;
        let initial_points = initial_sampling_positions(&shrunk);
        let refined_points = refine_positions(&initial_points, &source_box, offsets)?;
        Ok(SamplingPattern {
            source_box,
            initial_points,
            refined_points,
        })
    }
}

/// Feature-grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCell {
    pub x: i64,
    pub y: i64,
}

/// Deformable-convolution offsets per kernel tap, in feature-grid cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcnOffsetField {
    pub offsets: [Point; NUM_POINTS],
    pub p0: GridCell,
    pub stride: f64,
}

/// Scale both edges by `1 - factor` about the center.
pub fn shrink_obb(b: &OrientedBox, factor: f64) -> Result<OrientedBox> {
    if !(0.0..1.0).contains(&factor) {
        return Err(Error::InvalidConfig(format!(
            "shrink factor must be in [0, 1), got {factor}"
        )));
    }
    let k = 1.0 - factor;
    Ok(OrientedBox {
        w: b.w * k,
        h: b.h * k,
        ..*b
    })
}

pub fn initial_sampling_positions(b: &OrientedBox) -> [Point; NUM_POINTS] {
    PATTERN_LATTICE
        .map(|(sx, sy)| b.local_to_world(f64::from(sx) * 0.5 * b.w, f64::from(sy) * 0.5 * b.h))
}

/// `p_i + (w * dx_i, h * dy_i)` with `w`, `h` of the original box.
pub fn refine_positions(
    initial: &[Point; NUM_POINTS],
    b: &OrientedBox,
    offsets: &[OffsetPair],
) -> Result<[Point; NUM_POINTS]> {
    if offsets.len() != NUM_POINTS {
        return Err(Error::InvalidInput(format!(
            "expected {NUM_POINTS} offset pairs, got {}",
            offsets.len()
        )));
    }
    if offsets
        .iter()
        .any(|o| !o.dx.is_finite() || !o.dy.is_finite())
    {
        return Err(Error::InvalidInput("non-finite offset".into()));
    }
    let mut out = *initial;
    for (p, o) in out.iter_mut().zip(offsets) {
        p.x += b.w * o.dx;
        p.y += b.h * o.dy;
    }
    Ok(out)
}

/// `o = p_r / stride - p0 - r` for every kernel tap.
pub fn dcn_offset_field(
    refined: &[Point; NUM_POINTS],
    p0: GridCell,
    stride: f64,
) -> Result<DcnOffsetField> {
    if !(stride.is_finite() && stride > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "stride must be > 0, got {stride}"
        )));
    }
    let mut offsets = [Point::default(); NUM_POINTS];
    for (tap, o) in offsets.iter_mut().enumerate() {
        let p = refined[pattern_index_for_tap(tap)];
        let (rx, ry) = KERNEL_TAPS[tap];
        o.x = p.x / stride - p0.x as f64 - f64::from(rx);
        o.y = p.y / stride - p0.y as f64 - f64::from(ry);
    }
    Ok(DcnOffsetField {
        offsets,
        p0,
        stride,
    })
}

/// Dense `height x width x channels` feature map, channel-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(width: usize, height: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height * channels {
            return Err(Error::InvalidInput(format!(
                "feature grid {width}x{height}x{channels} needs {} values, got {}",
                width * height * channels,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        Ok(FeatureGrid {
            width,
            height,
            channels,
            values,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    values.push(f(x, y, c));
                }
            }
        }
        FeatureGrid {
            width,
            height,
            channels,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Stored value, zero outside the grid.
    pub fn get(&self, x: i64, y: i64, c: usize) -> f64 {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return 0.0;
        }
        self.values[(y as usize * self.width + x as usize) * self.channels + c]
    }

    /// Parse the text format: a `width,height,channels` header line, then one
    /// line of `channels` comma-separated values per cell in row-major order.
    /// Blank lines and `#` comments are skipped.
    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| {
                l.as_ref().map_or(true, |s| {
                    !s.trim().is_empty() && !s.trim_start().starts_with('#')
                })
            });
        let parse_err = |line: usize, message: String| Error::Parse { line, message };
        let (hline, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing width,height,channels header".into()))?;
        let header = header.map_err(|e| Error::io("<feature grid>", e))?;
        let dims: Vec<usize> = header
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(hline, format!("bad header {header:?}: {e}")))?;
        let [width, height, channels] = dims[..] else {
            return Err(parse_err(
                hline,
                format!("header needs 3 fields, got {header:?}"),
            ));
        };
        let mut values = Vec::with_capacity(width * height * channels);
        for (ln, line) in lines {
            let line = line.map_err(|e| Error::io("<feature grid>", e))?;
            let row: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(ln, format!("bad value: {e}")))?;
            if row.len() != channels {
                return Err(parse_err(
                    ln,
                    format!("expected {channels} values, got {}", row.len()),
                ));
            }
            values.extend(row);
        }
        FeatureGrid::new(width, height, channels, values)
    }
}

/// Bilinear interpolation at fractional cell coordinates, zero padded.
pub fn bilinear_sample(grid: &FeatureGrid, p: Point, channel: usize) -> f64 {
    let x0 = p.x.floor();
    let y0 = p.y.floor();
    let (fx, fy) = (p.x - x0, p.y - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let v00 = grid.get(x0, y0, channel);
    let v10 = grid.get(x0 + 1, y0, channel);
    let v01 = grid.get(x0, y0 + 1, channel);
    let v11 = grid.get(x0 + 1, y0 + 1, channel);
    (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11)
}

/// 3x3 kernel weights, indexed `[tap][channel]` with row-major taps.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    weights: Vec<[f64; NUM_POINTS]>,
}

impl Kernel {
    pub fn new(channels: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Kernel {
            weights: (0..channels)
                .map(|c| std::array::from_fn(|tap| f(tap, c)))
                .collect(),
        }
    }

    pub fn channels(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, tap: usize, channel: usize) -> f64 {
        self.weights[channel][tap]
    }
}

/// Deformable-convolution response at `p0`:
/// `sum over taps r and channels c of W(r, c) * X_c(p0 + r + o_r)`.
pub fn deformable_sample(
    grid: &FeatureGrid,
    kernel: &Kernel,
    field: &DcnOffsetField,
) -> Result<f64> {
    if kernel.channels() != grid.channels() {
        return Err(Error::InvalidInput(format!(
            "kernel has {} channels, grid has {}",
            kernel.channels(),
            grid.channels()
        )));
    }
    let mut acc = 0.0;
    for (tap, (&(rx, ry), o)) in KERNEL_TAPS.iter().zip(&field.offsets).enumerate() {
        let p = Point::new(
            field.p0.x as f64 + f64::from(rx) + o.x,
            field.p0.y as f64 + f64::from(ry) + o.y,
        );
        for c in 0..grid.channels() {
            acc += kernel.weight(tap, c) * bilinear_sample(grid, p, c);
        }
    }
    Ok(acc)
}

/// Parse nine `dx,dy` offset lines; an optional `dx,dy` header and `#`
/// comments are skipped.
pub fn read_offsets(reader: impl BufRead) -> Result<Vec<OffsetPair>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<offsets>", e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.eq_ignore_ascii_case("dx,dy") {
            continue;
        }
        let parts: Vec<&str> = t.split(',').map(str::trim).collect();
        let parsed = match parts[..] {
            [a, b] => a
                .parse::<f64>()
                .and_then(|dx| b.parse::<f64>().map(|dy| OffsetPair { dx, dy })),
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected dx,dy got {t:?}"),
                })
            }
        };
        out.push(parsed.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    if out.len() != NUM_POINTS {
        return Err(Error::InvalidInput(format!(
            "offsets file must hold {NUM_POINTS} pairs, got {}",
            out.len()
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn obb(cx: f64, cy: f64, w: f64, h: f64, t: f64) -> OrientedBox {
        OrientedBox::new(cx, cy, w, h, t).unwrap()
    }

    fn near(p: Point, x: f64, y: f64) -> bool {
        (p.x - x).abs() < 1e-12 && (p.y - y).abs() < 1e-12
    }

    #[test]
    fn shrink_examples() {
        let s = shrink_obb(&obb(0.0, 0.0, 10.0, 4.0, 0.0), 0.3).unwrap();
        assert!((s.w - 7.0).abs() < 1e-12 && (s.h - 2.8).abs() < 1e-12);
        let b = obb(3.0, 1.0, 9.0, 2.0, 0.6);
        assert_eq!(shrink_obb(&b, 0.0).unwrap(), b);
        assert_eq!(shrink_obb(&b, 0.5).unwrap().theta, b.theta);
        assert!(matches!(shrink_obb(&b, 1.0), Err(Error::InvalidConfig(_))));
        assert!(shrink_obb(&b, -0.1).is_err());
    }

    #[test]
    fn initial_positions_axis_aligned() {
        let s = shrink_obb(&obb(0.0, 0.0, 10.0, 4.0, 0.0), 0.3).unwrap();
        let p = initial_sampling_positions(&s);
        let want = [
            (0.0, 0.0),
            (3.5, 1.4),
            (-3.5, 1.4),
            (-3.5, -1.4),
            (3.5, -1.4),
            (3.5, 0.0),
            (0.0, 1.4),
            (-3.5, 0.0),
            (0.0, -1.4),
        ];
        for (q, w) in p.iter().zip(want) {
            assert!(near(*q, w.0, w.1), "{q:?} vs {w:?}");
        }
    }

    #[test]
    fn square_quarter_turn_gives_same_point_set() {
        let a = initial_sampling_positions(&OrientedBox::square(1.0, 2.0, 4.0));
        let b = initial_sampling_positions(&OrientedBox {
            theta: FRAC_PI_2,
            ..OrientedBox::square(1.0, 2.0, 4.0)
        });
        for p in &a {
            assert!(b.iter().any(|q| p.distance(*q) < 1e-12));
        }
    }

    #[test]
    fn refine_examples() {
        let b = obb(0.0, 0.0, 10.0, 4.0, 0.0);
        let init = initial_sampling_positions(&b);
        let zero = [OffsetPair::default(); 9];
        assert_eq!(refine_positions(&init, &b, &zero).unwrap(), init);
        let mut offs = zero;
        offs[0] = OffsetPair { dx: 0.1, dy: 0.1 };
        let r = refine_positions(&init, &b, &offs).unwrap();
        assert!(near(r[0], 1.0, 0.4));
        assert!(matches!(
            refine_positions(&init, &b, &zero[..8]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn offset_field_example() {
        let mut refined = [Point::default(); 9];
        // Tap 0 is r = (-1, -1), read from pattern point (-1, -1) = index 3.
        assert_eq!(pattern_index_for_tap(0), 3);
        refined[3] = Point::new(16.0, 8.0);
        let f = dcn_offset_field(&refined, GridCell { x: 1, y: 1 }, 8.0).unwrap();
        assert!(near(f.offsets[0], 2.0, 1.0));
        assert!(dcn_offset_field(&refined, GridCell { x: 1, y: 1 }, 0.0).is_err());
    }

    #[test]
    fn regular_grid_gives_zero_offsets() {
        let p0 = GridCell { x: 5, y: 3 };
        let stride = 8.0;
        let mut refined = [Point::default(); 9];
        for (i, &(sx, sy)) in PATTERN_LATTICE.iter().enumerate() {
            refined[i] = Point::new(
                (p0.x as f64 + f64::from(sx)) * stride,
                (p0.y as f64 + f64::from(sy)) * stride,
            );
        }
        let f = dcn_offset_field(&refined, p0, stride).unwrap();
        assert!(f.offsets.iter().all(|o| *o == Point::default()));
        let shifted = refined.map(|p| Point::new(p.x + stride, p.y));
        let g = dcn_offset_field(&shifted, p0, stride).unwrap();
        assert!(g.offsets.iter().all(|o| near(*o, 1.0, 0.0)));
    }

    #[test]
    fn bilinear_examples() {
        let g = FeatureGrid::new(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(bilinear_sample(&g, Point::new(0.5, 0.5), 0), 1.5);
        assert_eq!(bilinear_sample(&g, Point::new(1.0, 0.0), 0), 1.0);
        assert_eq!(bilinear_sample(&g, Point::new(-5.0, -5.0), 0), 0.0);
        assert_eq!(bilinear_sample(&g, Point::new(1.5, 1.0), 0), 1.5);
    }

    #[test]
    fn delta_kernel_selects_one_cell() {
        let g = FeatureGrid::from_fn(6, 6, 1, |x, y, _| (x * 10 + y) as f64);
        let k = Kernel::new(1, |tap, _| if tap == 4 { 1.0 } else { 0.0 });
        let mut offsets = [Point::default(); 9];
        offsets[4] = Point::new(2.0, -1.0);
        let field = DcnOffsetField {
            offsets,
            p0: GridCell { x: 2, y: 3 },
            stride: 8.0,
        };
        assert_eq!(deformable_sample(&g, &k, &field).unwrap(), 42.0);
        let k2 = Kernel::new(2, |_, _| 1.0);
        assert!(deformable_sample(&g, &k2, &field).is_err());
    }

    #[test]
    fn feature_grid_text_format() {
        let text = "# demo\n2,1,2\n1.0,2.0\n3.0,4.5\n";
        let g = FeatureGrid::read(text.as_bytes()).unwrap();
        assert_eq!((g.width(), g.height(), g.channels()), (2, 1, 2));
        assert_eq!(g.get(1, 0, 1), 4.5);
        assert!(FeatureGrid::read("2,1,2\n1.0,2.0\n".as_bytes()).is_err());
        let err = FeatureGrid::read("1,1,2\n1.0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn offsets_text_format() {
        let mut text = String::from("dx,dy\n");
        for i in 0..9 {
            text.push_str(&format!("{},{}\n", i as f64 * 0.1, -0.05));
        }
        let o = read_offsets(text.as_bytes()).unwrap();
        assert_eq!(o.len(), 9);
        assert_eq!(o[0], OffsetPair { dx: 0.0, dy: -0.05 });
        assert!(read_offsets("0,0\n".as_bytes()).is_err());
        assert!(matches!(
            read_offsets("0;0\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
