use obb_assign::cfs::{
    bilinear_sample, dcn_offset_field, deformable_sample, initial_sampling_positions,
    refine_positions, shrink_obb, DcnOffsetField, FeatureGrid, GridCell, Kernel, OffsetPair,
    SamplingPattern, KERNEL_TAPS, NUM_POINTS,
};
use obb_assign::geometry::{OrientedBox, Point};
use proptest::prelude::*;

/// Bilinear interpolation written as a sum of tent functions over every
/// stored cell.
fn tent_sample(grid: &FeatureGrid, p: Point, c: usize) -> f64 {
    let mut acc = 0.0;
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            let wx = (1.0 - (p.x - x as f64).abs()).max(0.0);
            let wy = (1.0 - (p.y - y as f64).abs()).max(0.0);
            acc += wx * wy * grid.get(x as i64, y as i64, c);
        }
    }
    acc
}

fn brute_force(grid: &FeatureGrid, kernel: &Kernel, field: &DcnOffsetField) -> f64 {
    let mut acc = 0.0;
    for (tap, (&(rx, ry), o)) in KERNEL_TAPS.iter().zip(field.offsets).enumerate() {
        let p = Point::new(
            field.p0.x as f64 + rx as f64 + o.x,
            field.p0.y as f64 + ry as f64 + o.y,
        );
        for c in 0..grid.channels() {
            acc += kernel.weight(tap, c) * tent_sample(grid, p, c);
        }
    }
    acc
}

fn plain_conv(grid: &FeatureGrid, kernel: &Kernel, p0: GridCell) -> f64 {
    let mut acc = 0.0;
    for (tap, &(rx, ry)) in KERNEL_TAPS.iter().enumerate() {
        for c in 0..grid.channels() {
            acc += kernel.weight(tap, c) * grid.get(p0.x + rx as i64, p0.y + ry as i64, c);
        }
    }
    acc
}

fn hash01(seed: u64, i: u64) -> f64 {
    let mut z = seed ^ i.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31)) as f64 / u64::MAX as f64
}

fn random_grid(seed: u64, w: usize, h: usize, c: usize) -> FeatureGrid {
    FeatureGrid::from_fn(w, h, c, |x, y, ch| {
        2.0 * hash01(seed, (y * w + x) as u64 * 8 + ch as u64) - 1.0
    })
}

fn random_kernel(seed: u64, c: usize) -> Kernel {
    Kernel::new(c, |tap, ch| {
        2.0 * hash01(seed ^ 0xABCD, (tap * 16 + ch) as u64) - 1.0
    })
}

fn any_box() -> impl Strategy<Value = OrientedBox> {
    (16.0..112.0, 16.0..112.0, 4.0..60.0, 1.0..5.0, -3.0..3.0f64)
        .prop_map(|(cx, cy, w, a, t)| OrientedBox::new(cx, cy, w, w / a, t).unwrap())
}

fn offsets() -> impl Strategy<Value = Vec<OffsetPair>> {
    prop::collection::vec(
        (-0.5..0.5, -0.5..0.5).prop_map(|(dx, dy)| OffsetPair { dx, dy }),
        NUM_POINTS,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn deformable_matches_tent_oracle(b in any_box(), offs in offsets(), seed in any::<u64>()) {
        let grid = random_grid(seed, 16, 16, 3);
        let kernel = random_kernel(seed, 3);
        let pat = SamplingPattern::build(b, 0.3, &offs).unwrap();
        let p0 = GridCell { x: (b.cx / 8.0).round() as i64, y: (b.cy / 8.0).round() as i64 };
        let field = dcn_offset_field(&pat.refined_points, p0, 8.0).unwrap();
        let fast = deformable_sample(&grid, &kernel, &field).unwrap();
        let slow = brute_force(&grid, &kernel, &field);
        prop_assert!((fast - slow).abs() <= 1e-12, "{fast} vs {slow}");
    }

    #[test]
    fn zero_offsets_equal_plain_convolution(x in -2i64..18, y in -2i64..18, seed in any::<u64>()) {
        let grid = random_grid(seed, 16, 16, 2);
        let kernel = random_kernel(seed, 2);
        let p0 = GridCell { x, y };
        let field = DcnOffsetField { offsets: [Point::default(); NUM_POINTS], p0, stride: 8.0 };
        let d = deformable_sample(&grid, &kernel, &field).unwrap();
        prop_assert!((d - plain_conv(&grid, &kernel, p0)).abs() <= 1e-12);
    }

    #[test]
    fn regular_grid_points_give_zero_offsets(x in 0i64..20, y in 0i64..20, stride in 1.0..32.0f64) {
        let p0 = GridCell { x, y };
        // Place pattern point i where its tap expects it.
        let mut refined = [Point::default(); NUM_POINTS];
        for (tap, &(rx, ry)) in KERNEL_TAPS.iter().enumerate() {
            let i = obb_assign::cfs::pattern_index_for_tap(tap);
            refined[i] = Point::new((x + rx as i64) as f64 * stride, (y + ry as i64) as f64 * stride);
        }
        let f = dcn_offset_field(&refined, p0, stride).unwrap();
        for o in f.offsets {
            prop_assert!(o.x.abs() < 1e-12 && o.y.abs() < 1e-12);
        }
    }

    #[test]
    fn translation_by_one_stride_shifts_offsets(b in any_box(), offs in offsets(), stride in 2.0..16.0f64) {
        let pat = SamplingPattern::build(b, 0.3, &offs).unwrap();
        let p0 = GridCell { x: 3, y: 4 };
        let f = dcn_offset_field(&pat.refined_points, p0, stride).unwrap();
        let moved = pat.refined_points.map(|p| Point::new(p.x + stride, p.y));
        let g = dcn_offset_field(&moved, p0, stride).unwrap();
        for (a, b) in f.offsets.iter().zip(&g.offsets) {
            prop_assert!((b.x - a.x - 1.0).abs() < 1e-9 && (b.y - a.y).abs() < 1e-12);
        }
    }

    #[test]
    fn initial_points_lie_in_box(b in any_box(), shrink in 0.0..0.9f64) {
        let s = shrink_obb(&b, shrink).unwrap();
        for p in initial_sampling_positions(&s) {
            // Allow for rounding on the boundary.
            let inflated = OrientedBox { w: b.w + 1e-9, h: b.h + 1e-9, ..b };
            prop_assert!(inflated.contains(p));
        }
    }

    #[test]
    fn refinement_is_linear_in_box_size(b in any_box(), offs in offsets()) {
        let init = initial_sampling_positions(&b);
        let big = OrientedBox { w: 2.0 * b.w, h: 2.0 * b.h, ..b };
        let r1 = refine_positions(&init, &b, &offs).unwrap();
        let r2 = refine_positions(&init, &big, &offs).unwrap();
        for i in 0..NUM_POINTS {
            let d1 = (r1[i].x - init[i].x, r1[i].y - init[i].y);
            let d2 = (r2[i].x - init[i].x, r2[i].y - init[i].y);
            prop_assert!((d2.0 - 2.0 * d1.0).abs() < 1e-9 && (d2.1 - 2.0 * d1.1).abs() < 1e-9);
        }
    }

    #[test]
    fn deformable_is_linear_in_features(seed in any::<u64>(), a in -3.0..3.0f64, b in -3.0..3.0f64, offs in offsets()) {
        let g1 = random_grid(seed, 12, 12, 2);
        let g2 = random_grid(seed.wrapping_add(1), 12, 12, 2);
        let mix = FeatureGrid::from_fn(12, 12, 2, |x, y, c| {
            a * g1.get(x as i64, y as i64, c) + b * g2.get(x as i64, y as i64, c)
        });
        let kernel = random_kernel(seed, 2);
        let field = DcnOffsetField {
            offsets: std::array::from_fn(|i| Point::new(offs[i].dx * 3.0, offs[i].dy * 3.0)),
            p0: GridCell { x: 5, y: 6 },
            stride: 8.0,
        };
        let lhs = deformable_sample(&mix, &kernel, &field).unwrap();
        let rhs = a * deformable_sample(&g1, &kernel, &field).unwrap() + b * deformable_sample(&g2, &kernel, &field).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }
}

#[test]
fn bilinear_hits_stored_values_on_grid_points() {
    let g = random_grid(3, 5, 4, 2);
    for y in 0..4 {
        for x in 0..5 {
            for c in 0..2 {
                assert_eq!(
                    bilinear_sample(&g, Point::new(x as f64, y as f64), c),
                    g.get(x, y, c)
                );
            }
        }
    }
    assert_eq!(bilinear_sample(&g, Point::new(-3.0, 1.5), 0), 0.0);
}

#[test]
fn feature_grid_text_format() {
    let text = "# demo grid\n2,2,2\n1,10\n2,20\n3,30\n4,40\n";
    let g = FeatureGrid::read(text.as_bytes()).unwrap();
    assert_eq!((g.width(), g.height(), g.channels()), (2, 2, 2));
    assert_eq!(g.get(1, 1, 1), 40.0);
    let short = "2,2,1\n1\n2\n3\n";
    assert!(FeatureGrid::read(short.as_bytes()).is_err());
    let bad = "1,1,2\n1\n";
    let e = FeatureGrid::read(bad.as_bytes()).unwrap_err();
    assert!(e.to_string().contains("line 2"), "{e}");
}
