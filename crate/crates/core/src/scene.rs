//! Ground-truth sources: seeded synthetic scenes and DOTA annotation files.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_4;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assign::GroundTruth;
use crate::error::{Error, Result};
use crate::geometry::{min_area_rect, OrientedBox, Point};

const DOTA_CATEGORIES: &str = include_str!("../data/dota_categories.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Placement {
    /// Independent objects at uniformly random positions.
    Uniform,
    /// One object per (aspect bin, angle bin) cell, laid out on a tile grid.
    GridSweep {
        aspect_bins: usize,
        angle_bins: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub image_size: (f64, f64),
    /// Ignored by grid-sweep placement.
    pub object_count: usize,
    pub aspect_range: (f64, f64),
    pub angle_range: (f64, f64),
    /// Long-edge length in pixels.
    pub scale_range: (f64, f64),
    pub seed: u64,
    pub placement: Placement,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            image_size: (1024.0, 1024.0),
            object_count: 32,
            aspect_range: (1.0, 12.0),
            angle_range: (-FRAC_PI_4, 3.0 * FRAC_PI_4),
            scale_range: (32.0, 256.0),
            seed: 0,
            placement: Placement::Uniform,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let ok_range = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        let (w, h) = self.image_size;
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return bad(format!("image size must be positive, got {w}x{h}"));
        }
        if !ok_range(self.aspect_range) || self.aspect_range.0 < 1.0 {
            return bad(format!(
                "aspect range {:?} must satisfy 1 <= min <= max",
                self.aspect_range
            ));
        }
        if !ok_range(self.angle_range) {
            return bad(format!("angle range {:?} is empty", self.angle_range));
        }
        if !ok_range(self.scale_range) || self.scale_range.0 <= 0.0 {
            return bad(format!(
                "scale range {:?} must be positive",
                self.scale_range
            ));
        }
        if let Placement::GridSweep {
            aspect_bins,
            angle_bins,
        } = self.placement
        {
            if aspect_bins == 0 || angle_bins == 0 {
                return bad("grid sweep needs at least one bin per axis".into());
            }
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SceneSpec {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub spec: SceneSpec,
    pub gts: Vec<GroundTruth>,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Half extents of the axis-aligned bounding box of a rotated rectangle.
fn half_extents(w: f64, h: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (
        0.5 * (w * c.abs() + h * s.abs()),
        0.5 * (w * s.abs() + h * c.abs()),
    )
}

/// Draw a center in `[lo, hi]` intersected with the containment interval
/// `[e, size - e]`; falls back to the nearest contained position.
fn place(rng: &mut ChaCha8Rng, lo: f64, hi: f64, e: f64, size: f64) -> f64 {
    let (a, b) = (lo.max(e), hi.min(size - e));
    if a <= b {
        uniform(rng, a, b)
    } else {
        (0.5 * (lo + hi)).clamp(e, size - e)
    }
}

struct Draw {
    aspect: f64,
    theta: f64,
    long_edge: f64,
}

fn build_gt(
    rng: &mut ChaCha8Rng,
    d: Draw,
    region: ((f64, f64), (f64, f64)),
    image: (f64, f64),
) -> Result<GroundTruth> {
    let (w, h) = (d.long_edge, d.long_edge / d.aspect);
    let (ex, ey) = half_extents(w, h, d.theta);
    if 2.0 * ex > image.0 || 2.0 * ey > image.1 {
        return Err(Error::Generation(format!(
            "object {w:.1}x{h:.1} at angle {:.3} does not fit a {}x{} image",
            d.theta, image.0, image.1
        )));
    }
    let cx = place(rng, region.0 .0, region.0 .1, ex, image.0);
    let cy = place(rng, region.1 .0, region.1 .1, ey, image.1);
    Ok(GroundTruth::new(
        OrientedBox::new(cx, cy, w, h, d.theta)?,
        0,
    ))
}

/// Generate a reproducible synthetic scene.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (iw, ih) = spec.image_size;
    let (alo, ahi) = spec.aspect_range;
    let (tlo, thi) = spec.angle_range;
    let (slo, shi) = spec.scale_range;
    let mut gts = Vec::new();
    match spec.placement {
        Placement::Uniform => {
            for _ in 0..spec.object_count {
                let d = Draw {
                    aspect: uniform(&mut rng, alo.ln(), ahi.ln()).exp().clamp(alo, ahi),
                    theta: uniform(&mut rng, tlo, thi),
                    long_edge: uniform(&mut rng, slo, shi),
                };
                gts.push(build_gt(&mut rng, d, ((0.0, iw), (0.0, ih)), (iw, ih))?);
            }
        }
        Placement::GridSweep {
            aspect_bins,
            angle_bins,
        } => {
            let n = aspect_bins * angle_bins;
            let cols = (n as f64).sqrt().ceil() as usize;
            let rows = n.div_ceil(cols);
            let (tw, th) = (iw / cols as f64, ih / rows as f64);
            let abin = (ahi - alo) / aspect_bins as f64;
            let tbin = (thi - tlo) / angle_bins as f64;
            for i in 0..aspect_bins {
                for j in 0..angle_bins {
                    let cell = i * angle_bins + j;
                    let (col, row) = ((cell % cols) as f64, (cell / cols) as f64);
                    let a0 = alo + i as f64 * abin;
                    let t0 = tlo + j as f64 * tbin;
                    let d = Draw {
                        aspect: uniform(&mut rng, a0, a0 + abin),
                        theta: uniform(&mut rng, t0, t0 + tbin),
                        long_edge: uniform(&mut rng, slo, shi),
                    };
                    let region = ((col * tw, (col + 1.0) * tw), (row * th, (row + 1.0) * th));
                    gts.push(build_gt(&mut rng, d, region, (iw, ih))?);
                }
            }
        }
    }
    Ok(Scene {
        spec: spec.clone(),
        gts,
    })
}

/// One DOTA object line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub quad: [Point; 4],
    pub category: String,
    pub difficult: u8,
}

fn is_metadata(line: &str) -> bool {
    let lower = line.to_ascii_lowercase();
    lower.starts_with("imagesource") || lower.starts_with("gsd")
}

/// Parse one annotation line `x1 y1 ... x4 y4 category [difficult]`.
/// Blank and metadata (`imagesource:` / `gsd:`) lines yield `None`.
pub fn parse_dota_line(text: &str, line: usize) -> Result<Option<AnnotationRecord>> {
    let t = text.trim();
    if t.is_empty() || is_metadata(t) {
        return Ok(None);
    }
    let err = |message: String| Error::Parse { line, message };
    let tokens: Vec<&str> = t.split_whitespace().collect();
    if tokens.len() < 9 || tokens.len() > 10 {
        return Err(err(format!(
            "expected 8 coordinates, a category and an optional difficult flag, got {} tokens",
            tokens.len()
        )));
    }
    let mut coords = [0.0; 8];
    for (c, tok) in coords.iter_mut().zip(&tokens[..8]) {
        *c = tok
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| err(format!("coordinate {tok:?} is not a finite number")))?;
    }
    let category = tokens[8].to_string();
    let difficult = match tokens.get(9) {
        None => 0,
        Some(tok) => tok
            .parse::<u8>()
            .map_err(|_| err(format!("difficult flag {tok:?} is not an integer")))?,
    };
    Ok(Some(AnnotationRecord {
        quad: std::array::from_fn(|i| Point::new(coords[2 * i], coords[2 * i + 1])),
        category,
        difficult,
    }))
}

#[derive(Debug, Default)]
pub struct DotaParse {
    /// `(line number, record)` pairs.
    pub records: Vec<(usize, AnnotationRecord)>,
    /// Malformed lines.
    pub errors: Vec<Error>,
    /// Header lines skipped, including unrecognised `key:value` variants.
    pub metadata_lines: usize,
}

/// Lenient file-level parse: malformed lines are collected, not fatal.
pub fn parse_dota(text: &str) -> DotaParse {
    let mut out = DotaParse::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        let first = t.split_whitespace().next().unwrap_or_default();
        if is_metadata(t) || (first.contains(':') && first.parse::<f64>().is_err()) {
            out.metadata_lines += 1;
            continue;
        }
        match parse_dota_line(t, line) {
            Ok(Some(r)) => out.records.push((line, r)),
            Ok(None) => {}
            Err(e) => out.errors.push(e),
        }
    }
    out
}

pub fn read_dota_file(path: &Path) -> Result<DotaParse> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_dota(&text))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnknownCategory {
    #[default]
    Error,
    /// Append unknown names to the table in order of first appearance.
    PassThrough,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryTable {
    names: Vec<String>,
}

impl CategoryTable {
    /// The fifteen DOTA v1.0 categories.
    pub fn dota() -> Self {
        Self::parse(DOTA_CATEGORIES)
    }

    /// One name per line, `#` comments allowed.
    pub fn parse(text: &str) -> Self {
        CategoryTable {
            names: text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n.eq_ignore_ascii_case(name))
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtConversion {
    pub gts: Vec<GroundTruth>,
    /// Index into the input records for each ground truth.
    pub source: Vec<usize>,
    pub categories: CategoryTable,
    pub skipped_degenerate: usize,
    pub skipped_difficult: usize,
}

/// Convert annotation quads to normalized oriented boxes through their
/// minimum-area enclosing rectangle.
pub fn records_to_gts(
    records: &[AnnotationRecord],
    include_difficult: bool,
    table: &CategoryTable,
    unknown: UnknownCategory,
) -> Result<GtConversion> {
    let mut categories = table.clone();
    let unknown_names: BTreeSet<&str> = records
        .iter()
        .filter(|r| table.class_id(&r.category).is_none())
        .map(|r| r.category.as_str())
        .collect();
    if unknown == UnknownCategory::Error && !unknown_names.is_empty() {
        return Err(Error::UnknownCategory(
            unknown_names.into_iter().map(str::to_string).collect(),
        ));
    }
    let mut out = GtConversion {
        gts: Vec::new(),
        source: Vec::new(),
        categories: table.clone(),
        skipped_degenerate: 0,
        skipped_difficult: 0,
    };
    for (i, r) in records.iter().enumerate() {
        let class_id = match categories.class_id(&r.category) {
            Some(id) => id,
            None => {
                categories.names.push(r.category.clone());
                categories.names.len() - 1
            }
        };
        if r.difficult != 0 && !include_difficult {
            out.skipped_difficult += 1;
            continue;
        }
        match min_area_rect(&r.quad) {
            Ok(b) => {
                out.gts.push(GroundTruth::new(b, class_id));
                out.source.push(i);
            }
            Err(Error::Degenerate(_)) => out.skipped_degenerate += 1,
            Err(e) => return Err(e),
        }
    }
    out.categories = categories;
    Ok(out)
}

/// Render a scene as a DOTA annotation file.
pub fn scene_to_dota(scene: &Scene, table: &CategoryTable) -> String {
    let mut s = String::from("imagesource:synthetic\ngsd:null\n");
    for g in &scene.gts {
        for v in g.bbox.to_polygon().vertices {
            let _ = write!(s, "{} {} ", v.x, v.y);
        }
        let name = table.name(g.class_id).unwrap_or("object");
        let _ = writeln!(s, "{name} 0");
    }
    s
}

/// Write `<stem>.txt` (DOTA annotations) and `<stem>.json` (the spec) into
/// `dir`.
pub fn write_scene(scene: &Scene, dir: &Path, stem: &str, table: &CategoryTable) -> Result<()> {
    let txt = dir.join(format!("{stem}.txt"));
    std::fs::write(&txt, scene_to_dota(scene, table)).map_err(|e| Error::io(&txt, e))?;
    let json = dir.join(format!("{stem}.json"));
    let body = serde_json::to_string_pretty(&serde_json::json!({
        "schema_version": crate::SCHEMA_VERSION,
        "spec": scene.spec,
    }))?;
    std::fs::write(&json, body + "\n").map_err(|e| Error::io(&json, e))?;
    Ok(())
}
