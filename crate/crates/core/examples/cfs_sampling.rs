//! Build the nine-point sampling pattern for a box, convert it to
//! deformable-convolution offsets and sample a feature map.
//!
//! cargo run --example cfs_sampling

use obb_assign::cfs::{
    bilinear_sample, dcn_offset_field, deformable_sample, FeatureGrid, GridCell, Kernel,
    OffsetPair, SamplingPattern, NUM_POINTS,
};
use obb_assign::geometry::OrientedBox;

fn main() -> obb_assign::Result<()> {
    let b = OrientedBox::new(64.0, 60.0, 48.0, 16.0, 0.5)?;
    let offsets: Vec<OffsetPair> = (0..NUM_POINTS)
        .map(|i| OffsetPair {
            dx: 0.05 * (i as f64 - 4.0),
            dy: 0.02,
        })
        .collect();
    let pat = SamplingPattern::build(b, 0.3, &offsets)?;
    println!("{:>2} {:>16} {:>16}", "i", "initial", "refined");
    for i in 0..NUM_POINTS {
        let (p, q) = (pat.initial_points[i], pat.refined_points[i]);
        println!(
            "{i:>2} ({:>6.2}, {:>6.2}) ({:>6.2}, {:>6.2})",
            p.x, p.y, q.x, q.y
        );
    }

    let stride = 8.0;
    let p0 = GridCell {
        x: (b.cx / stride).round() as i64,
        y: (b.cy / stride).round() as i64,
    };
    let field = dcn_offset_field(&pat.refined_points, p0, stride)?;
    println!("\noffsets at cell ({}, {}):", p0.x, p0.y);
    for (tap, o) in field.offsets.iter().enumerate() {
        println!("  tap {tap}: ({:+.3}, {:+.3})", o.x, o.y);
    }

    let grid = FeatureGrid::from_fn(16, 16, 1, |x, y, _| (x as f64 * 0.4).sin() + 0.1 * y as f64);
    let mean = Kernel::new(1, |_, _| 1.0 / NUM_POINTS as f64);
    println!(
        "\nmean over deformed taps: {:.5}",
        deformable_sample(&grid, &mean, &field)?
    );
    let c = pat.refined_points[0];
    println!(
        "feature at refined center: {:.5}",
        bilinear_sample(
            &grid,
            obb_assign::geometry::Point::new(c.x / stride, c.y / stride),
            0
        )
    );
    Ok(())
}
