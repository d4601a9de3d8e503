//! Run MaxIoU, ATSS and MAS on one synthetic scene and compare positives
//! per ground truth.
//!
//! cargo run --example compare_assigners

use obb_assign::assign::{assign_atss, assign_mas, assign_maxiou, generate_anchors, MasConfig};
use obb_assign::scene::{generate_scene, SceneSpec};

fn main() -> obb_assign::Result<()> {
    let spec = SceneSpec {
        image_size: (512.0, 512.0),
        object_count: 10,
        scale_range: (24.0, 200.0),
        seed: 7,
        ..SceneSpec::default()
    };
    let scene = generate_scene(&spec)?;
    let anchors = generate_anchors(512.0, 512.0, &[8.0, 16.0, 32.0, 64.0, 128.0], 4.0)?;

    let maxiou = assign_maxiou(&anchors, &scene.gts, 0.5, 0.4);
    let atss = assign_atss(&anchors, &scene.gts, 9);
    let mas = assign_mas(&anchors, &scene.gts, &MasConfig::default());

    println!("{} anchors, {} objects\n", anchors.len(), scene.gts.len());
    println!(
        "{:>3} {:>7} {:>7} {:>7} | {:>6} {:>6} {:>6} | {:>7}",
        "gt", "w", "aspect", "angle", "maxiou", "atss", "mas", "mas thr"
    );
    for (i, g) in scene.gts.iter().enumerate() {
        println!(
            "{i:>3} {:>7.1} {:>7.2} {:>7.3} | {:>6} {:>6} {:>6} | {:>7.3}",
            g.bbox.w,
            g.aspect,
            g.angle,
            maxiou.positives_per_gt[i],
            atss.positives_per_gt[i],
            mas.positives_per_gt[i],
            mas.thresholds[i].unwrap_or(f64::NAN),
        );
    }
    println!(
        "\ntotal positives: maxiou {}, atss {}, mas {}",
        maxiou.num_positive(),
        atss.num_positive(),
        mas.num_positive()
    );
    Ok(())
}
