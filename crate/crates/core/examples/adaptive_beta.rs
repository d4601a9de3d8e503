//! Scale-adaptive smooth-L1: beta follows the median proposal similarity
//! under a synthetic quality schedule.
//!
//! cargo run --example adaptive_beta

use obb_assign::loss::{smooth_l1, smooth_l1_grad, BetaState};
use obb_assign::report::{beta_trajectory, QualitySchedule};

fn main() {
    let init = BetaState::default();
    let rows = beta_trajectory(&init, QualitySchedule::Improving { tau: 10.0 }, 60, 64, 0);
    println!(
        "{:>4} {:>8} {:>8} {:>8}",
        "iter", "quality", "target", "beta"
    );
    for r in rows.iter().step_by(5) {
        println!(
            "{:>4} {:>8.4} {:>8.4} {:>8.4}",
            r.iteration, r.quality, r.raw_target, r.beta
        );
    }

    let beta = rows.last().map_or(init.beta_scale, |r| r.beta);
    println!("\nresidual  loss(beta=1)  loss(beta={beta:.3})  grad(beta={beta:.3})");
    for x in [0.01, 0.05, 0.2, 1.0] {
        println!(
            "{x:>8}  {:>11.5}  {:>14.5}  {:>14.5}",
            smooth_l1(x, 1.0),
            smooth_l1(x, beta),
            smooth_l1_grad(x, beta)
        );
    }
}
