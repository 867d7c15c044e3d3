//! Batch runner: `soliton-lab --config run.json [--only EXP] [--out DIR] [--seed N]`.
//!
//! Exit status: 0 when every asserted invariant held, 1 when any failed,
//! 2 on configuration or runtime errors.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use soliton_lab::report::{run, Experiment, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "soliton-lab", version, about = "Weighted-geodesic experiments on steady Ricci solitons")]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Run only this experiment (identities, geodesic, ledgers, decay, rho); repeatable.
    #[arg(long = "only")]
    only: Vec<String>,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed, overriding `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn configure(args: &Args) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::from_path(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    if !args.only.is_empty() {
        cfg.experiments = args
            .only
            .iter()
            .map(|s| s.parse::<Experiment>())
            .collect::<Result<_, _>>()?;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let cfg = match configure(&args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let report = match run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for e in &report.experiments {
        println!(
            "{:<10} {:<7} {:>5} passed  {:>3} failed  {:>3} excluded  {:>8.1} s",
            e.name, e.status, e.passed, e.failed, e.excluded, e.seconds
        );
    }
    for (name, slack) in &report.worst_slacks {
        println!("worst slack {name}: {slack:e}");
    }
    for k in &report.fitted_k {
        println!("c = {}: fitted K = {:.6}, envelope decreasing: {}", k.c, k.k, k.envelope_decreasing);
    }
    if let Some(f) = report.non_smooth_fraction {
        println!("non-smooth fraction: {f:.4} of {} samples", report.rho_samples);
    }
    println!("report: {}", report.output_dir.join("report.json").display());
    if report.passed {
        ExitCode::SUCCESS
    } else {
        for f in report.failure_inventory() {
            eprintln!("FAILED {f}");
        }
        ExitCode::from(1)
    }
}
