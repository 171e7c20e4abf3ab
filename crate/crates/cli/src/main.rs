use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dckrr_cli::harness::{self, RunOptions};
use dckrr_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "dckrr", version, about = "Divide-and-conquer kernel ridge regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (default: the config's output_dir, else out/<name>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for independent sweep cells.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Added to every seed in the config.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Estimator comparison over the configured sweep and seeds.
    Run { config: PathBuf },
    /// Goodness g(lambda) for each partition count.
    Diagnose { config: PathBuf },
    /// Monte-Carlo error decomposition on a synthetic task.
    Decompose { config: PathBuf },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let path = match &cli.command {
        Command::Run { config } | Command::Diagnose { config } | Command::Decompose { config } => config,
    };
    let cfg = ExperimentConfig::load(path)?;
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    let opts = RunOptions {
        out_dir,
        jobs: cli.jobs,
        seed_offset: cli.seed_offset,
    };
    match cli.command {
        Command::Run { .. } => {
            let outcome = harness::run(&cfg, &opts)?;
            println!("estimator,sweep,n_ok,median_rmse,median_fit_seconds");
            for s in &outcome.summary {
                println!(
                    "{},{},{},{},{}",
                    s.estimator,
                    s.sweep.map(|v| v.to_string()).unwrap_or_default(),
                    s.n_ok,
                    s.median_rmse.map(|v| format!("{v:.6}")).unwrap_or_default(),
                    s.median_fit_seconds.map(|v| format!("{v:.4}")).unwrap_or_default(),
                );
            }
            for r in &outcome.slopes {
                println!("slope {}: {:.4} over {} sizes", r.estimator, r.slope, r.n_points);
            }
            if outcome.failures > 0 {
                return Err(CliError::Numeric(format!("{} cells failed numerically", outcome.failures)));
            }
        }
        Command::Diagnose { .. } => {
            for e in harness::diagnose(&cfg, &opts)? {
                println!("m={} seed={} g={:.6}", e.m, e.seed, e.report.g);
            }
        }
        Command::Decompose { .. } => {
            let out = harness::decompose(&cfg, &opts)?;
            if let Some(d) = &out.decomposition {
                let t = &d.totals;
                println!(
                    "approx={:.3e} reg={:.3e} bias={:.3e} var={:.3e} err={:.3e} bound={:.3e}",
                    t.approx.value, t.reg.value, t.bias.value, t.var.value, t.err.value, t.decomp_bound.value
                );
            }
            if let Some(d) = &out.dominance {
                println!(
                    "sum partition approx={:.4e} global approx={:.4e} difference={:.4e} (se {:.1e})",
                    d.sum_partition_approx.value, d.global_approx.value, d.difference.value, d.difference.se
                );
            }
        }
    }
    log::info!("outputs written to {}", opts.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
