//! Exact rotated IoU against a Monte-Carlo estimate, plus quad conversion.
//!
//! cargo run --example rotated_iou

use std::f64::consts::FRAC_PI_4;

use obb_assign::geometry::{
    mc_iou_oracle, min_area_rect, normalize_obb, rotated_iou, OrientedBox, Point,
};

fn main() -> obb_assign::Result<()> {
    let square = OrientedBox::square(0.0, 0.0, 2.0);
    let pairs = [
        (
            "square vs 45 deg square",
            square,
            OrientedBox::new(0.0, 0.0, 2.0, 2.0, FRAC_PI_4)?,
        ),
        (
            "thin box, 10 deg apart",
            OrientedBox::new(0.0, 0.0, 40.0, 4.0, 0.0)?,
            OrientedBox::new(0.0, 0.0, 40.0, 4.0, 0.1745)?,
        ),
        (
            "offset rectangles",
            OrientedBox::new(0.0, 0.0, 10.0, 6.0, 0.3)?,
            OrientedBox::new(3.0, 1.0, 8.0, 8.0, -0.5)?,
        ),
    ];
    println!("{:<26} {:>9} {:>9}", "pair", "exact", "mc(1e5)");
    for (name, a, b) in pairs {
        println!(
            "{name:<26} {:>9.6} {:>9.6}",
            rotated_iou(&a, &b),
            mc_iou_oracle(&a, &b, 100_000, 1)
        );
    }

    // A short-edge parameterization collapses onto the long-edge form.
    let b = normalize_obb(5.0, 5.0, 2.0, 8.0, 0.2)?;
    println!(
        "\nnormalized (w=2, h=8, t=0.2) -> w={} h={} theta={:.4}",
        b.w, b.h, b.theta
    );

    // Noisy annotation quad to its minimum-area rectangle.
    let quad = [
        Point::new(10.0, 10.0),
        Point::new(50.5, 12.0),
        Point::new(49.0, 31.0),
        Point::new(9.0, 29.5),
    ];
    let r = min_area_rect(&quad)?;
    println!(
        "quad -> cx={:.3} cy={:.3} w={:.3} h={:.3} theta={:.4}",
        r.cx, r.cy, r.w, r.h, r.theta
    );
    Ok(())
}
