//! Rotated rectangles in the long-edge convention and exact convex-polygon
//! overlap.
//!
//! An [`OrientedBox`] keeps `w >= h` and its angle in `[-pi/4, 3pi/4)`.
//! Rotation follows `x' = x cos t - y sin t`, `y' = x sin t + y cos t`, and
//! "counter-clockwise" means positive shoelace area in that frame.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vertices closer than this after clipping are merged.
pub const MERGE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }
}

/// Five-parameter rotated rectangle. Construct through [`OrientedBox::new`]
/// (which normalizes) unless the values are already known to be canonical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
}

impl OrientedBox {
    /// Normalizing constructor, see [`normalize_obb`].
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Result<Self> {
        normalize_obb(cx, cy, w, h, theta)
    }

    /// Axis-aligned square, used for anchors.
    pub fn square(cx: f64, cy: f64, side: f64) -> Self {
        OrientedBox {
            cx,
            cy,
            w: side,
            h: side,
            theta: 0.0,
        }
    }

    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Map a point given in the box's local frame to image coordinates.
    pub fn local_to_world(&self, lx: f64, ly: f64) -> Point {
        let (s, c) = self.theta.sin_cos();
        Point::new(self.cx + lx * c - ly * s, self.cy + lx * s + ly * c)
    }

    /// Radius of the circumscribed circle.
    pub fn circumradius(&self) -> f64 {
        0.5 * self.w.hypot(self.h)
    }

    pub fn to_polygon(&self) -> ConvexQuad {
        obb_to_polygon(self)
    }

    pub fn contains(&self, p: Point) -> bool {
        let (s, c) = self.theta.sin_cos();
        let d = p.sub(self.center());
        let lx = d.x * c + d.y * s;
        let ly = -d.x * s + d.y * c;
        lx.abs() <= 0.5 * self.w && ly.abs() <= 0.5 * self.h
    }
}

/// Reduce `theta` into `[lo, lo + period)`.
pub(crate) fn wrap_angle(theta: f64, lo: f64, period: f64) -> f64 {
    let mut t = (theta - lo).rem_euclid(period) + lo;
    // rem_euclid may round up to exactly `period`.
    if t >= lo + period {
        t -= period;
    }
    if t < lo {
        t = lo;
    }
    t
}

/// Bring an arbitrary `(cx, cy, w, h, theta)` into the long-edge convention.
///
/// Edges are swapped (adding pi/2) when `w < h`; the angle is then reduced
/// modulo pi into `[-pi/4, 3pi/4)`. Squares use their extra symmetry and are
/// reduced modulo pi/2 into `[-pi/4, pi/4)`.
pub fn normalize_obb(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Result<OrientedBox> {
    if ![cx, cy, w, h, theta].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite box parameters ({cx}, {cy}, {w}, {h}, {theta})"
        )));
    }
    if w <= 0.0 || h <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "box dimensions must be positive, got w={w} h={h}"
        )));
    }
    let (w, h, theta) = if w < h {
        (h, w, theta + FRAC_PI_2)
    } else {
        (w, h, theta)
    };
    let theta = if w == h {
        wrap_angle(theta, -FRAC_PI_4, FRAC_PI_2)
    } else {
        wrap_angle(theta, -FRAC_PI_4, PI)
    };
    Ok(OrientedBox {
        cx,
        cy,
        w,
        h,
        theta,
    })
}

/// Four vertices in counter-clockwise order with positive signed area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexQuad {
    pub vertices: [Point; 4],
}

impl ConvexQuad {
    /// Validate four points as a strictly convex quadrilateral. Clockwise
    /// input is reversed; collinear, zero-area or reflex input is rejected.
    pub fn from_points(points: [Point; 4]) -> Result<Self> {
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidInput("non-finite quad vertex".into()));
        }
        let mut vertices = points;
        if shoelace(&vertices) < 0.0 {
            vertices.reverse();
        }
        let area = shoelace(&vertices);
        let scale = vertices
            .iter()
            .flat_map(|p| [p.x.abs(), p.y.abs()])
            .fold(1.0_f64, f64::max);
        if area <= 1e-12 * scale * scale {
            return Err(Error::Degenerate(format!(
                "quad area {area} is not positive"
            )));
        }
        for i in 0..4 {
            let a = vertices[i];
            let b = vertices[(i + 1) % 4];
            let c = vertices[(i + 2) % 4];
            if b.sub(a).cross(c.sub(b)) <= 0.0 {
                return Err(Error::Degenerate("quad is not strictly convex".into()));
            }
        }
        Ok(ConvexQuad { vertices })
    }

    pub fn area(&self) -> f64 {
        shoelace(&self.vertices).max(0.0)
    }

    pub fn contains(&self, p: Point) -> bool {
        convex_contains(&self.vertices, p)
    }
}

/// Signed shoelace area; positive for counter-clockwise rings.
pub fn shoelace(ring: &[Point]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        acc += ring[i].cross(ring[(i + 1) % n]);
    }
    0.5 * acc
}

fn convex_contains(ring: &[Point], p: Point) -> bool {
    let n = ring.len();
    (0..n).all(|i| {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        b.sub(a).cross(p.sub(a)) >= 0.0
    })
}

/// Corners starting at local `(-w/2, -h/2)`, counter-clockwise.
pub fn obb_to_polygon(b: &OrientedBox) -> ConvexQuad {
    let (hw, hh) = (0.5 * b.w, 0.5 * b.h);
    ConvexQuad {
        vertices: [
            b.local_to_world(-hw, -hh),
            b.local_to_world(hw, -hh),
            b.local_to_world(hw, hh),
            b.local_to_world(-hw, hh),
        ],
    }
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                if b.sub(a).cross(p.sub(a)) <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Minimum-area enclosing rectangle of a point set by rotating calipers: the
/// optimal rectangle has one side collinear with a convex hull edge.
pub fn min_area_rect(points: &[Point]) -> Result<OrientedBox> {
    let hull = convex_hull(points);
    let scale = points
        .iter()
        .flat_map(|p| [p.x.abs(), p.y.abs()])
        .fold(1.0_f64, f64::max);
    if hull.len() < 3 || shoelace(&hull) <= 1e-12 * scale * scale {
        return Err(Error::Degenerate(
            "points are collinear or coincident".into(),
        ));
    }
    let mut best: Option<(f64, OrientedBox)> = None;
    for i in 0..hull.len() {
        let edge = hull[(i + 1) % hull.len()].sub(hull[i]);
        let len = edge.dot(edge).sqrt();
        let u = Point::new(edge.x / len, edge.y / len);
        let v = Point::new(-u.y, u.x);
        let (mut umin, mut umax, mut vmin, mut vmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &hull {
            let pu = p.dot(u);
            let pv = p.dot(v);
            umin = umin.min(pu);
            umax = umax.max(pu);
            vmin = vmin.min(pv);
            vmax = vmax.max(pv);
        }
        let (w, h) = (umax - umin, vmax - vmin);
        let area = w * h;
        // Strict improvement beyond rounding keeps the first of tied edges.
        if best.as_ref().is_none_or(|(a, _)| area < a * (1.0 - 1e-12)) {
            let cu = 0.5 * (umin + umax);
            let cv = 0.5 * (vmin + vmax);
            let c = Point::new(cu * u.x + cv * v.x, cu * u.y + cv * v.y);
            let b = normalize_obb(c.x, c.y, w, h, u.y.atan2(u.x))?;
            best = Some((area, b));
        }
    }
    Ok(best.expect("hull has edges").1)
}

/// Convert a quadrilateral to its minimum-area enclosing oriented box.
pub fn quad_to_obb(quad: &ConvexQuad) -> Result<OrientedBox> {
    min_area_rect(&quad.vertices)
}

/// Clip the convex ring `subject` by one half-plane `a -> b` (left side kept).
fn clip_half_plane(subject: &[Point], a: Point, b: Point, out: &mut Vec<Point>) {
    out.clear();
    let n = subject.len();
    if n == 0 {
        return;
    }
    let dir = b.sub(a);
    let side = |p: Point| dir.cross(p.sub(a));
    for i in 0..n {
        let s = subject[i];
        let e = subject[(i + 1) % n];
        let (ds, de) = (side(s), side(e));
        if ds >= 0.0 {
            out.push(s);
        }
        if (ds >= 0.0) != (de >= 0.0) {
            let t = ds / (ds - de);
            out.push(Point::new(s.x + t * (e.x - s.x), s.y + t * (e.y - s.y)));
        }
    }
}

fn merge_close(ring: &mut Vec<Point>) {
    ring.dedup_by(|b, a| a.distance(*b) < MERGE_EPS);
    while ring.len() > 1 && ring[0].distance(ring[ring.len() - 1]) < MERGE_EPS {
        ring.pop();
    }
}

/// Area of `a` intersected with `b` (Sutherland-Hodgman, then shoelace).
pub fn polygon_intersection_area(a: &ConvexQuad, b: &ConvexQuad) -> f64 {
    let mut ring: Vec<Point> = a.vertices.to_vec();
    let mut scratch = Vec::with_capacity(8);
    for i in 0..4 {
        clip_half_plane(&ring, b.vertices[i], b.vertices[(i + 1) % 4], &mut scratch);
        std::mem::swap(&mut ring, &mut scratch);
        merge_close(&mut ring);
        if ring.len() < 3 {
            return 0.0;
        }
    }
    shoelace(&ring).max(0.0)
}

/// Exact IoU of two oriented boxes.
pub fn rotated_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    if a == b {
        return 1.0;
    }
    if a.center().distance(b.center()) >= a.circumradius() + b.circumradius() {
        return 0.0;
    }
    let inter = polygon_intersection_area(&a.to_polygon(), &b.to_polygon());
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Monte-Carlo IoU estimate: uniform samples over the bounding box of both
/// polygons, counting hits in both against hits in either. Membership is
/// tested in each box's own frame, independent of the clipping path.
pub fn mc_iou_oracle(a: &OrientedBox, b: &OrientedBox, samples: u64, seed: u64) -> f64 {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in a
        .to_polygon()
        .vertices
        .iter()
        .chain(b.to_polygon().vertices.iter())
    {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let frame = |o: OrientedBox| {
        let (s, c) = o.theta.sin_cos();
        move |x: f64, y: f64| {
            let (dx, dy) = (x - o.cx, y - o.cy);
            (dx * c + dy * s).abs() <= 0.5 * o.w && (dy * c - dx * s).abs() <= 0.5 * o.h
        }
    };
    let (in_a, in_b) = (frame(*a), frame(*b));
    let (sx, sy) = (x1 - x0, y1 - y0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut both, mut either) = (0_u64, 0_u64);
    for _ in 0..samples.max(1) {
        let x = x0 + sx * rng.gen::<f64>();
        let y = y0 + sy * rng.gen::<f64>();
        let (ia, ib) = (in_a(x, y), in_b(x, y));
        either += u64::from(ia || ib);
        both += u64::from(ia && ib);
    }
    if either == 0 {
        0.0
    } else {
        both as f64 / either as f64
    }
}

pub fn center_distance(a: &OrientedBox, b: &OrientedBox) -> f64 {
    a.center().distance(b.center())
}

pub fn aspect_ratio(b: &OrientedBox) -> f64 {
    b.w / b.h
}
