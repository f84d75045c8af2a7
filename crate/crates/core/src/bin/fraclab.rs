use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use fraclab::lab::{exit_code, run, ExperimentConfig, RunOptions, Subcommand};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Delone,
    Capacity,
    Homogenize,
    Random,
    Check,
}

/// Fractional obstacle homogenization experiments.
///
/// Exit status: 0 when every verdict passes, 1 on a failed verdict, 2 on a
/// config error, 3 on a numerical failure.
#[derive(Debug, Parser)]
#[command(name = "fraclab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML experiment file; optional for `check`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to FRACLAB_THREADS.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip the SVG and gnuplot outputs.
    #[arg(long)]
    no_plots: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = match cli.command {
        Command::Delone => Subcommand::Delone,
        Command::Capacity => Subcommand::Capacity,
        Command::Homogenize => Subcommand::Homogenize,
        Command::Random => Subcommand::Random,
        Command::Check => Subcommand::Check,
    };
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p),
        None if matches!(cmd, Subcommand::Check) => Ok(ExperimentConfig::default()),
        None => Err(fraclab::Error::Config(format!(
            "{} needs --config",
            cmd.name()
        ))),
    };
    let opts = RunOptions {
        seed: cli.seed,
        threads: cli.threads,
        out: cli.out,
        no_plots: cli.no_plots,
    };
    let result = cfg.and_then(|cfg| run(cmd, cfg, &opts));
    match &result {
        Ok(rec) => {
            for v in &rec.verdicts {
                println!(
                    "{} {}: {}",
                    if v.pass { "PASS" } else { "FAIL" },
                    v.name,
                    v.detail
                );
            }
            for t in &rec.timings {
                eprintln!("{:>14} {:8.2}s", t.stage, t.seconds);
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
