//! Tabulate the shape weight f(aspect, angle) and the resulting threshold
//! for a fixed set of candidate IoUs.
//!
//! cargo run --example threshold_surface

use std::f64::consts::FRAC_PI_4;

use obb_assign::assign::{angle_weight, iou_statistics, shape_weight, REFERENCE_ASPECT};

fn main() -> obb_assign::Result<()> {
    let gamma = 5.0;
    let angles = [
        0.0,
        FRAC_PI_4 / 2.0,
        FRAC_PI_4,
        3.0 * FRAC_PI_4 / 2.0,
        2.0 * FRAC_PI_4,
    ];
    let stats = iou_statistics(&[0.3, 0.5, 0.7])?;
    let base = stats.init_threshold();
    println!("candidate IoUs 0.3/0.5/0.7 -> base threshold {base:.4}");
    println!("reference aspect {REFERENCE_ASPECT}, gamma {gamma}\n");

    print!("{:>7}", "aspect");
    for t in angles {
        print!(" {:>13}", format!("t={t:.3}"));
    }
    println!();
    for aspect in [1.0, 1.5, 2.0, 4.0, 8.0, 12.0] {
        print!("{aspect:>7.1}");
        for t in angles {
            let f = shape_weight(aspect, t, gamma);
            print!(" {:>6.3}/{:<6.3}", f, (f * base).clamp(0.05, 0.95));
        }
        println!();
    }
    println!(
        "\nentries are f / threshold; |lambda| ranges from {:.3} to {:.3}",
        angle_weight(0.0).abs(),
        angle_weight(FRAC_PI_4).abs()
    );
    Ok(())
}
