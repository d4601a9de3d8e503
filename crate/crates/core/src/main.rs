use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use obb_assign::report::{
    cmd_assign_file, cmd_cfs_demo, cmd_iou, cmd_loss_check, cmd_stats, cmd_thresholds,
    print_or_write, RunConfig, Strategy,
};
use obb_assign::Error;

/// Oriented-box label assignment experiments.
#[derive(Parser, Debug)]
#[command(name = "obb-assign", version)]
struct Cli {
    /// JSON run configuration; every field is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory. Report commands default to `out`; `iou`,
    /// `assign-file` and `cfs-demo` print to stdout unless it is given.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["maxiou", "atss", "mas"])]
    strategy: Option<String>,
    /// Overrides the MAS gamma and the threshold-surface gamma list.
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Use the signed angle weight instead of its magnitude.
    #[arg(long, global = true)]
    raw_lambda: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Positive-sample statistics binned by aspect ratio and angle.
    Stats,
    /// Threshold surfaces over an aspect x angle grid.
    Thresholds,
    /// Gradient self-checks and synthetic beta trajectories.
    LossCheck,
    /// IoU of two boxes given as `cx cy w h theta cx cy w h theta`.
    Iou {
        #[arg(num_args = 10, allow_negative_numbers = true, value_name = "VALUE")]
        values: Vec<f64>,
        /// Also print a Monte-Carlo estimate with this many samples.
        #[arg(long)]
        oracle: Option<u64>,
    },
    /// Assign labels for the objects of a DOTA annotation file.
    AssignFile { annotations: PathBuf },
    /// Dump CFS sampling points and deformable responses for one box.
    CfsDemo {
        features: PathBuf,
        #[arg(num_args = 5, allow_negative_numbers = true, value_name = "BOX")]
        bbox: Vec<f64>,
        /// Nine `dx,dy` lines; zeros when omitted.
        #[arg(long)]
        offsets: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> obb_assign::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(s) = &cli.strategy {
        cfg.strategy = s.parse::<Strategy>()?;
    }
    if let Some(g) = cli.gamma {
        cfg.mas.gamma = g;
        cfg.thresholds.gammas = vec![g];
    }
    cfg.mas.raw_lambda |= cli.raw_lambda;
    cfg.validate()?;
    Ok(cfg)
}

fn to_json<T: serde::Serialize>(v: &T) -> obb_assign::Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn run(cli: &Cli) -> obb_assign::Result<()> {
    let cfg = load_config(cli)?;
    let out = cli.out.as_deref();
    let report_dir = out.unwrap_or(Path::new("out"));
    match &cli.command {
        Command::Stats => {
            let r = cmd_stats(&cfg, report_dir)?;
            println!(
                "{}: {} gts, {} without positives, aspect spearman {:.4}",
                r.strategy.name(),
                r.aspect.total_gts() + r.angle.total_gts(),
                r.zero_positive_gts,
                r.aspect_spearman
            );
        }
        Command::Thresholds => {
            let r = cmd_thresholds(&cfg, report_dir)?;
            println!(
                "{} surfaces written to {}",
                r.checks.len(),
                report_dir.display()
            );
        }
        Command::LossCheck => {
            let r = cmd_loss_check(&cfg, report_dir)?;
            println!(
                "max relative gradient error {:e}; final beta {} (improving) {} (constant)",
                r.max_rel_error, r.improving_final_beta, r.constant_final_beta
            );
        }
        Command::Iou { values, oracle } => {
            let a = [values[0], values[1], values[2], values[3], values[4]];
            let b = [values[5], values[6], values[7], values[8], values[9]];
            print_or_write(out, "iou.txt", &cmd_iou(a, b, *oracle, cfg.seed)?)?;
        }
        Command::AssignFile { annotations } => {
            let r = cmd_assign_file(&cfg, annotations)?;
            print_or_write(out, "assign_report.json", &to_json(&r)?)?;
        }
        Command::CfsDemo {
            features,
            bbox,
            offsets,
        } => {
            let b = [bbox[0], bbox[1], bbox[2], bbox[3], bbox[4]];
            let r = cmd_cfs_demo(&cfg, features, b, offsets.as_deref())?;
            print_or_write(out, "cfs_demo.json", &to_json(&r)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::SelfCheck(items) = &e {
                for i in items {
                    eprintln!("  {i}");
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
