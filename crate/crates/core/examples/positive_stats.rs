//! Mean positives per aspect and angle bin for each assigner on the
//! grid-sweep scenes.
//!
//! cargo run --release --example positive_stats

use obb_assign::report::{run_stats, RunConfig, Strategy};

fn main() -> obb_assign::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.stats.scenes = 16;
    let reports = Strategy::ALL.map(|s| run_stats(&cfg, s));
    let reports = reports
        .into_iter()
        .collect::<obb_assign::Result<Vec<_>>>()?;

    for axis in ["aspect", "angle"] {
        print!("\n{axis:>15}");
        for r in &reports {
            print!(" {:>7}", r.strategy.name());
        }
        println!();
        let bins = |r: &obb_assign::report::StatsReport| {
            if axis == "aspect" {
                r.aspect.clone()
            } else {
                r.angle.clone()
            }
        };
        let first = bins(&reports[0]);
        for (i, b) in first.bins.iter().enumerate() {
            print!("[{:>5.2},{:>6.2})", b.lo, b.hi);
            for r in &reports {
                print!(" {:>7.2}", bins(r).bins[i].mean_positives);
            }
            println!();
        }
    }
    println!();
    for r in &reports {
        println!(
            "{:>6}: aspect spearman {:+.3}, zero-positive gts {}",
            r.strategy.name(),
            r.aspect_spearman,
            r.zero_positive_gts
        );
    }
    Ok(())
}
