//! Property tests for oriented-box geometry.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use obb_assign::geometry::{
    mc_iou_oracle, normalize_obb, obb_to_polygon, polygon_intersection_area, quad_to_obb,
    rotated_iou, shoelace, ConvexQuad, OrientedBox, Point,
};
use proptest::prelude::*;

fn any_box() -> impl Strategy<Value = OrientedBox> {
    (-50.0..50.0, -50.0..50.0, 0.5..40.0, 0.5..40.0, -10.0..10.0)
        .prop_map(|(cx, cy, w, h, t)| normalize_obb(cx, cy, w, h, t).unwrap())
}

/// Pairs that overlap often enough to be interesting.
fn near_pair() -> impl Strategy<Value = (OrientedBox, OrientedBox)> {
    (
        any_box(),
        -10.0..10.0,
        -10.0..10.0,
        1.0..30.0,
        1.0..30.0,
        -PI..PI,
    )
        .prop_map(|(a, dx, dy, w, h, t)| (a, normalize_obb(a.cx + dx, a.cy + dy, w, h, t).unwrap()))
}

fn rotate(p: Point, phi: f64) -> Point {
    let (s, c) = phi.sin_cos();
    Point::new(p.x * c - p.y * s, p.x * s + p.y * c)
}

/// Rigid motion applied to a box through its corner polygon.
fn moved(b: &OrientedBox, phi: f64, tx: f64, ty: f64) -> OrientedBox {
    let v = b.to_polygon().vertices.map(|p| {
        let r = rotate(p, phi);
        Point::new(r.x + tx, r.y + ty)
    });
    normalize_obb(
        v.iter().map(|p| p.x).sum::<f64>() / 4.0,
        v.iter().map(|p| p.y).sum::<f64>() / 4.0,
        b.w,
        b.h,
        b.theta + phi,
    )
    .unwrap()
}

fn in_range(b: &OrientedBox) -> bool {
    if b.w == b.h {
        (-FRAC_PI_4..FRAC_PI_4).contains(&b.theta)
    } else {
        b.w > b.h && (-FRAC_PI_4..3.0 * FRAC_PI_4).contains(&b.theta)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn iou_is_symmetric_and_bounded((a, b) in near_pair()) {
        let ab = rotated_iou(&a, &b);
        let ba = rotated_iou(&b, &a);
        prop_assert!((ab - ba).abs() <= 1e-12, "{ab} vs {ba}");
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn intersection_never_exceeds_smaller_area((a, b) in near_pair()) {
        let inter = polygon_intersection_area(&a.to_polygon(), &b.to_polygon());
        prop_assert!(inter >= 0.0);
        prop_assert!(inter <= a.area().min(b.area()) * (1.0 + 1e-12) + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn normalize_is_idempotent_and_preserves_area(
        cx in -100.0..100.0f64, cy in -100.0..100.0f64,
        w in 0.1..50.0f64, h in 0.1..50.0f64, t in -20.0..20.0f64,
    ) {
        let b = normalize_obb(cx, cy, w, h, t).unwrap();
        prop_assert!(in_range(&b), "{b:?}");
        prop_assert!((b.area() - w * h).abs() <= 1e-12 * w * h);
        let again = normalize_obb(b.cx, b.cy, b.w, b.h, b.theta).unwrap();
        prop_assert_eq!(again, b);
        // Same point set: the corner polygons coincide as sets.
        let p = normalize_obb(cx, cy, w, h, t).unwrap().to_polygon().vertices;
        let raw = OrientedBox { cx, cy, w, h, theta: t }.to_polygon().vertices;
        for v in raw {
            prop_assert!(p.iter().any(|q| q.distance(v) < 1e-9 * (1.0 + w + h)));
        }
    }

    #[test]
    fn polygon_round_trip(b in any_box()) {
        let q = obb_to_polygon(&b);
        prop_assert!(shoelace(&q.vertices) > 0.0);
        let back = quad_to_obb(&q).unwrap();
        prop_assert!((back.cx - b.cx).abs() < 1e-9 && (back.cy - b.cy).abs() < 1e-9);
        prop_assert!((back.w - b.w).abs() < 1e-9 && (back.h - b.h).abs() < 1e-9);
        prop_assert!(rotated_iou(&back, &b) > 1.0 - 1e-9);
    }

    #[test]
    fn iou_invariant_under_rigid_motion(
        (a, b) in near_pair(), phi in -PI..PI, tx in -100.0..100.0f64, ty in -100.0..100.0f64,
    ) {
        let before = rotated_iou(&a, &b);
        let after = rotated_iou(&moved(&a, phi, tx, ty), &moved(&b, phi, tx, ty));
        prop_assert!((before - after).abs() <= 1e-9, "{before} vs {after}");
    }

    #[test]
    fn from_points_accepts_either_winding(b in any_box()) {
        let v = b.to_polygon().vertices;
        let cw = ConvexQuad::from_points([v[3], v[2], v[1], v[0]]).unwrap();
        prop_assert!((cw.area() - b.area()).abs() < 1e-9 * b.area().max(1.0));
        prop_assert!(shoelace(&cw.vertices) > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exact_iou_agrees_with_monte_carlo((a, b) in near_pair(), seed in any::<u64>()) {
        let exact = rotated_iou(&a, &b);
        let mc = mc_iou_oracle(&a, &b, 100_000, seed);
        prop_assert!((exact - mc).abs() <= 0.015, "exact {exact} mc {mc}");
    }
}

/// Every integer-degree rotation of an axis-aligned rectangle round-trips
/// through its corner quadrilateral.
#[test]
fn quad_to_obb_angle_sweep() {
    for k in 0..3600 {
        let t = -FRAC_PI_4 + PI * k as f64 / 3600.0;
        let b = OrientedBox::new(3.0, -2.0, 12.0, 5.0, t).unwrap();
        let back = quad_to_obb(&b.to_polygon()).unwrap();
        assert!(
            (back.theta - b.theta).abs() < 1e-9,
            "k={k}: {} vs {}",
            back.theta,
            b.theta
        );
        assert!((back.w - 12.0).abs() < 1e-9 && (back.h - 5.0).abs() < 1e-9);
        assert!((back.cx - 3.0).abs() < 1e-9 && (back.cy + 2.0).abs() < 1e-9);
    }
}

#[test]
fn quarter_turn_of_square_is_identity() {
    let a = OrientedBox::new(1.0, 2.0, 4.0, 4.0, 0.1).unwrap();
    let b = normalize_obb(1.0, 2.0, 4.0, 4.0, 0.1 + FRAC_PI_2).unwrap();
    assert!((a.theta - b.theta).abs() < 1e-12);
    assert!(rotated_iou(&a, &b) > 1.0 - 1e-12);
}
